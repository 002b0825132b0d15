"""Dense finite-dimensional quantum states over labeled subsystems.

Pure state vectors and density operators carry a :class:`SubsystemLayout`
naming their parts, so reduced states, entropies, and operator application
can be addressed by label instead of by axis bookkeeping.  All values are
immutable after construction; every operation returns a new value.

Conventions
-----------
* Entropies are in bits (log base 2).
* ``trace_distance`` is the normalized distance T = (1/2)||rho - sigma||_1.
  The unnormalized one-norm is exposed as :func:`one_norm_distance` so that
  epsilon conditions stated for ||.||_1 can be checked without factor-2
  ambiguity.
* Fidelity uses the square-root convention F = Tr|sqrt(rho) sqrt(sigma)|,
  so F equals |<phi|psi>| for pure states.
* The qudit Fourier matrix is F[j, x] = omega^(j x)/sqrt(d); the "phase"
  basis used by the merging protocol is the column set of F^dagger, which
  for qubits is the Hadamard basis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, NumericalError, ResourceLimitError

ALLOWED_LABELS = ("A", "B", "C", "D", "R", "A'", "B'")

#: Default cap on any constructed state dimension (overridable per call).
DEFAULT_MAX_DIM = 2**20

_NORM_ATOL = 1e-10
_HERM_ATOL = 1e-10
_PSD_FLOOR = -1e-10
_EIG_CLIP = 1e-10


# ---------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered list of (label, dimension) parts of a composite system."""

    parts: tuple[tuple[str, int], ...]

    def __init__(self, parts: Iterable[tuple[str, int]]):
        parts = tuple((str(lbl), int(dim)) for lbl, dim in parts)
        if not parts:
            raise ArgumentError("layout needs at least one part")
        labels = [lbl for lbl, _ in parts]
        if len(set(labels)) != len(labels):
            raise ArgumentError(f"duplicate labels in layout: {labels}")
        for lbl, dim in parts:
            if lbl not in ALLOWED_LABELS:
                raise ArgumentError(f"unknown part label {lbl!r}; allowed: {ALLOWED_LABELS}")
            if dim < 2:
                raise ArgumentError(f"part {lbl!r} has dimension {dim}; absent parts are omitted, present ones need dim >= 2")
        object.__setattr__(self, "parts", parts)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.parts)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.parts)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def axis(self, label: str) -> int:
        for i, (lbl, _) in enumerate(self.parts):
            if lbl == label:
                return i
        raise ArgumentError(f"label {label!r} not in layout {self.labels}")

    def dim_of(self, label: str) -> int:
        return self.parts[self.axis(label)][1]

    def axes(self, labels: Sequence[str]) -> list[int]:
        return [self.axis(lbl) for lbl in labels]

    def restrict(self, labels: Sequence[str]) -> "SubsystemLayout":
        """Sub-layout of the given labels, preserving this layout's order."""
        wanted = set(labels)
        missing = wanted - set(self.labels)
        if missing:
            raise ArgumentError(f"labels {sorted(missing)} not in layout {self.labels}")
        return SubsystemLayout(tuple(p for p in self.parts if p[0] in wanted))


def _as_label_set(labels) -> tuple[str, ...]:
    if isinstance(labels, str):
        return (labels,)
    return tuple(labels)


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state over a labeled layout (C-ordered amplitudes)."""

    layout: SubsystemLayout
    amplitudes: np.ndarray

    def __init__(self, layout: SubsystemLayout, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amps.size != layout.total_dim:
            raise ArgumentError(
                f"amplitude length {amps.size} != layout dimension {layout.total_dim}")
        nrm2 = float(np.vdot(amps, amps).real)
        if abs(nrm2 - 1.0) > _NORM_ATOL:
            raise ArgumentError(f"state not normalized: |psi|^2 = {nrm2!r}")
        amps = amps / math.sqrt(nrm2)
        amps.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, layout: SubsystemLayout, amplitudes) -> "StateVector":
        """Construct from an unnormalized amplitude vector."""
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(amps)
        if nrm == 0:
            raise ArgumentError("cannot normalize the zero vector")
        return cls(layout, amps / nrm)

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per part (read-only view)."""
        return self.amplitudes.reshape(self.layout.dims)

    def overlap(self, other: "StateVector") -> complex:
        if self.layout.parts != other.layout.parts:
            raise ArgumentError("overlap requires identical layouts")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, PSD, unit-trace operator over a labeled layout."""

    layout: SubsystemLayout
    matrix: np.ndarray

    def __init__(self, layout: SubsystemLayout, matrix):
        mat = np.asarray(matrix, dtype=complex)
        d = layout.total_dim
        if mat.shape != (d, d):
            raise ArgumentError(f"matrix shape {mat.shape} != ({d}, {d})")
        if np.abs(mat - mat.conj().T).max() > _HERM_ATOL:
            raise NumericalError("matrix not Hermitian within 1e-10")
        tr = float(np.trace(mat).real)
        if abs(tr - 1.0) > 1e-10:
            raise NumericalError(f"trace {tr} != 1 beyond tolerance")
        wmin = float(np.linalg.eigvalsh(mat)[0])
        if wmin < _PSD_FLOOR:
            raise NumericalError(f"matrix not PSD: min eigenvalue {wmin}")
        mat = mat / tr
        mat.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_state(cls, s: StateVector) -> "DensityOperator":
        v = s.amplitudes
        return cls(s.layout, np.outer(v, v.conj()))

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class Ensemble:
    """Weighted list of density operators on a common layout."""

    entries: tuple[tuple[float, DensityOperator], ...]

    def __init__(self, entries: Iterable[tuple[float, DensityOperator]]):
        entries = tuple((float(w), st) for w, st in entries)
        if not entries:
            raise ArgumentError("ensemble needs at least one entry")
        layout = entries[0][1].layout
        for w, st in entries:
            if w < -1e-12:
                raise ArgumentError(f"negative ensemble weight {w}")
            if st.layout.parts != layout.parts:
                raise ArgumentError("ensemble states must share one layout")
        total = sum(w for w, _ in entries)
        if abs(total - 1.0) > 1e-10:
            raise ArgumentError(f"ensemble weights sum to {total}, expected 1")
        object.__setattr__(self, "entries", entries)

    @property
    def layout(self) -> SubsystemLayout:
        return self.entries[0][1].layout

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.entries])

    def average(self) -> DensityOperator:
        acc = sum(w * st.matrix for w, st in self.entries)
        return DensityOperator(self.layout, acc)

    @classmethod
    def from_pure(cls, weights: Sequence[float], states: Sequence[StateVector]) -> "Ensemble":
        return cls([(w, DensityOperator.from_state(s)) for w, s in zip(weights, states)])


# ---------------------------------------------------------------------------
# construction and reshaping


def tensor(a: StateVector, b: StateVector, max_dim: int = DEFAULT_MAX_DIM) -> StateVector:
    """Tensor product of two states on disjoint label sets."""
    common = set(a.layout.labels) & set(b.layout.labels)
    if common:
        raise ArgumentError(f"tensor requires disjoint labels; both have {sorted(common)}")
    d = a.dim * b.dim
    if d > max_dim:
        raise ResourceLimitError(f"tensor product needs dimension {d} > cap {max_dim}")
    layout = SubsystemLayout(a.layout.parts + b.layout.parts)
    return StateVector(layout, np.kron(a.amplitudes, b.amplitudes))


def tensor_power(s: StateVector, n: int, max_dim: int = DEFAULT_MAX_DIM) -> StateVector:
    """n-fold tensor product with all copies of each label grouped into one part.

    The resulting layout has the same labels as the input, each with
    dimension d^n; within a part, copy 1 is the most significant digit.
    """
    if n < 1:
        raise ArgumentError(f"tensor power needs n >= 1, got {n}")
    d = s.dim**n
    if d > max_dim:
        raise ResourceLimitError(
            f"tensor power needs dimension {s.dim}^{n} = {d} > cap {max_dim}")
    k = len(s.layout.parts)
    t = s.tensor()
    out = t
    for _ in range(n - 1):
        out = np.tensordot(out, t, axes=0)
    # axes are (copy1 parts..., copy2 parts..., ...); regroup by part
    perm = [c * k + j for j in range(k) for c in range(n)]
    out = np.transpose(out.reshape(s.layout.dims * n), perm)
    layout = SubsystemLayout([(lbl, dim**n) for lbl, dim in s.layout.parts])
    return StateVector(layout, out.reshape(-1))


def merge_parts(s: StateVector, labels: Sequence[str], new_label: str) -> StateVector:
    """Fuse the given parts (in the given order) into a single part.

    The fused part replaces the first listed label in the layout; its index
    runs over the listed parts with the first as the most significant digit.
    """
    labels = list(labels)
    axes = s.layout.axes(labels)
    n_parts = len(s.layout.parts)
    order, parts = [], []
    for i in range(n_parts):
        if i == axes[0]:
            order.extend(axes)
            new_dim = int(np.prod([s.layout.dims[a] for a in axes]))
            parts.append((new_label, new_dim))
        elif i not in axes:
            order.append(i)
            parts.append(s.layout.parts[i])
    t = np.transpose(s.tensor(), order)
    return StateVector(SubsystemLayout(parts), t.reshape(-1))


def relabel(s: StateVector, mapping: dict[str, str]) -> StateVector:
    parts = [(mapping.get(lbl, lbl), dim) for lbl, dim in s.layout.parts]
    return StateVector(SubsystemLayout(parts), s.amplitudes)


def random_state_vector(layout: SubsystemLayout, rng: np.random.Generator) -> StateVector:
    """Haar-random pure state on the layout."""
    v = rng.normal(size=layout.total_dim) + 1j * rng.normal(size=layout.total_dim)
    return StateVector.normalized(layout, v)


# ---------------------------------------------------------------------------
# reduction, entropies, distances


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    """Trace out everything except the parts named in `keep` (order preserved)."""
    keep = _as_label_set(keep)
    if not keep:
        raise ArgumentError("keep set must be nonempty")
    for lbl in keep:
        rho.layout.axis(lbl)  # raises on unknown label
    dims = rho.layout.dims
    k = len(dims)
    keep_axes = sorted(rho.layout.axes(keep))
    drop_axes = [i for i in range(k) if i not in keep_axes]
    t = rho.matrix.reshape(dims + dims)
    for ax in sorted(drop_axes, reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + (t.ndim // 2))
    dk = int(np.prod([dims[i] for i in keep_axes]))
    return DensityOperator(rho.layout.restrict(keep), t.reshape(dk, dk))


def reduced_state(s: StateVector, keep) -> DensityOperator:
    """Reduced density operator of a pure state on the kept parts."""
    keep = _as_label_set(keep)
    keep_axes = sorted(s.layout.axes(keep))
    rest = [i for i in range(len(s.layout.parts)) if i not in keep_axes]
    t = np.transpose(s.tensor(), keep_axes + rest)
    dk = int(np.prod([s.layout.dims[i] for i in keep_axes])) if keep_axes else 1
    m = t.reshape(dk, -1)
    return DensityOperator(s.layout.restrict(keep), m @ m.conj().T)


def entropy_of_spectrum(p: np.ndarray) -> float:
    """-sum p log2 p with 0 log 0 = 0; small negatives are clipped."""
    p = np.asarray(p, dtype=float)
    if p.min() < -_EIG_CLIP:
        raise NumericalError(f"spectrum has negative weight {p.min()}")
    p = np.clip(p, 0.0, None)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho: DensityOperator) -> float:
    """Entropy in bits of a density operator."""
    return entropy_of_spectrum(rho.eigenvalues())


def conditional_entropy(rho: DensityOperator, a, b) -> float:
    """S(a|b) = S(ab) - S(b); may be negative."""
    a, b = _as_label_set(a), _as_label_set(b)
    if set(a) & set(b):
        raise ArgumentError(f"label sets overlap: {sorted(set(a) & set(b))}")
    s_ab = von_neumann_entropy(partial_trace(rho, a + b))
    s_b = von_neumann_entropy(partial_trace(rho, b))
    return s_ab - s_b


def mutual_information(rho: DensityOperator, a, b) -> float:
    """I(a:b) = S(a) + S(b) - S(ab); nonnegative up to numerics."""
    a, b = _as_label_set(a), _as_label_set(b)
    if set(a) & set(b):
        raise ArgumentError(f"label sets overlap: {sorted(set(a) & set(b))}")
    s_a = von_neumann_entropy(partial_trace(rho, a))
    s_b = von_neumann_entropy(partial_trace(rho, b))
    s_ab = von_neumann_entropy(partial_trace(rho, a + b))
    return s_a + s_b - s_ab


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """F = Tr|sqrt(rho) sqrt(sigma)|, in [0, 1]; |<phi|psi>| for pure states."""
    if rho.layout.parts != sigma.layout.parts:
        raise ArgumentError("fidelity requires identical layouts")
    x = _psd_sqrt(rho.matrix) @ _psd_sqrt(sigma.matrix)
    f = float(np.linalg.svd(x, compute_uv=False).sum())
    return min(f, 1.0)


def one_norm_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Unnormalized trace norm ||rho - sigma||_1, in [0, 2]."""
    if rho.layout.parts != sigma.layout.parts:
        raise ArgumentError("distance requires identical layouts")
    w = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(np.abs(w).sum())


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Normalized trace distance (1/2)||rho - sigma||_1, in [0, 1]."""
    return 0.5 * one_norm_distance(rho, sigma)


# ---------------------------------------------------------------------------
# Schmidt decomposition


@dataclass(frozen=True)
class SchmidtDecomposition:
    """Schmidt form of a pure state split as (part `label`) vs (the rest).

    probs: Schmidt probabilities, descending, truncated at numerical rank.
    basis: columns are the Schmidt vectors on the chosen part (d x rank).
    basis_completion: columns completing `basis` to a unitary (d x (d-rank)).
    costates: rows are the matching normalized co-states on the remaining
        parts, indexed in the residual layout's own order (rank x d_rest).
    rest_layout: layout of the remaining parts.
    """

    probs: np.ndarray
    basis: np.ndarray
    basis_completion: np.ndarray
    costates: np.ndarray
    rest_layout: SubsystemLayout

    @property
    def rank(self) -> int:
        return len(self.probs)

    def full_basis(self) -> np.ndarray:
        return np.hstack([self.basis, self.basis_completion])


def schmidt_form(s: StateVector, label: str, tol: float = 1e-12) -> SchmidtDecomposition:
    """Schmidt decomposition across the bipartition (label | rest)."""
    ax = s.layout.axis(label)
    d = s.layout.dims[ax]
    rest = [i for i in range(len(s.layout.parts)) if i != ax]
    t = np.transpose(s.tensor(), [ax] + rest)
    m = t.reshape(d, -1)
    u, sv, vh = np.linalg.svd(m, full_matrices=True)
    r = int(np.sum(sv > tol))
    rest_layout = SubsystemLayout([s.layout.parts[i] for i in rest])
    return SchmidtDecomposition(
        probs=(sv[:r] ** 2),
        basis=u[:, :r],
        basis_completion=u[:, r:],
        costates=vh[:r, :],
        rest_layout=rest_layout,
    )


# ---------------------------------------------------------------------------
# operator application


def apply_operator(s: StateVector, op: np.ndarray, targets) -> StateVector:
    """Apply a (not necessarily unitary-checked) operator to the target parts.

    `op` must be square with dimension equal to the product of the target
    dimensions, indexed in the order the targets are listed.
    """
    targets = _as_label_set(targets)
    axes = s.layout.axes(targets)
    d_t = int(np.prod([s.layout.dims[i] for i in axes]))
    op = np.asarray(op, dtype=complex)
    if op.shape != (d_t, d_t):
        raise ArgumentError(f"operator shape {op.shape} != ({d_t}, {d_t}) for targets {targets}")
    t = s.tensor()
    rest = [i for i in range(len(s.layout.parts)) if i not in axes]
    t = np.transpose(t, list(axes) + rest).reshape(d_t, -1)
    t = op @ t
    shape = [s.layout.dims[i] for i in axes] + [s.layout.dims[i] for i in rest]
    t = t.reshape(shape)
    inv = np.argsort(list(axes) + rest)
    t = np.transpose(t, inv)
    return StateVector.normalized(s.layout, t.reshape(-1))


def apply_unnormalized(s: StateVector, op: np.ndarray, targets) -> np.ndarray:
    """Like apply_operator but returns the raw (unnormalized) amplitude vector."""
    targets = _as_label_set(targets)
    axes = s.layout.axes(targets)
    d_t = int(np.prod([s.layout.dims[i] for i in axes]))
    op = np.asarray(op, dtype=complex)
    if op.shape != (d_t, d_t):
        raise ArgumentError(f"operator shape {op.shape} != ({d_t}, {d_t}) for targets {targets}")
    t = s.tensor()
    rest = [i for i in range(len(s.layout.parts)) if i not in axes]
    t = np.transpose(t, list(axes) + rest).reshape(d_t, -1)
    t = op @ t
    shape = [s.layout.dims[i] for i in axes] + [s.layout.dims[i] for i in rest]
    t = t.reshape(shape)
    inv = np.argsort(list(axes) + rest)
    return np.transpose(t, inv).reshape(-1)


ZERO_BRANCH_TOL = 1e-12


def apply_projector(s: StateVector, proj: np.ndarray, targets) -> tuple[float, StateVector | None]:
    """Project onto `proj` on the target parts.

    Returns (outcome probability, normalized post-state); the post-state is
    None when the branch probability is below ZERO_BRANCH_TOL.
    """
    out = apply_unnormalized(s, proj, targets)
    prob = float(np.vdot(out, out).real)
    if prob < ZERO_BRANCH_TOL:
        return prob, None
    return prob, StateVector(s.layout, out / math.sqrt(prob))


# operator builders -------------------------------------------------------


def phase_operator(d: int, exponent: int = 1) -> np.ndarray:
    """Generalized Z^x on one qudit: diag(omega^(j x)), omega = exp(2 pi i / d)."""
    j = np.arange(d)
    return np.diag(np.exp(2j * np.pi * (j * exponent % d) / d))


def phase_string_operator(d: int, exponents: Sequence[int]) -> np.ndarray:
    """Z^x on an n-digit register: phase omega^(k . x) on basis string k."""
    phases = phase_string_diagonal(d, exponents)
    return np.diag(phases)


def phase_string_diagonal(d: int, exponents: Sequence[int]) -> np.ndarray:
    """Diagonal of Z^x on the d^n-dimensional register, as a vector."""
    exps = np.asarray(exponents, dtype=np.int64)
    n = len(exps)
    digits = _digit_table(d, n)
    dot = (digits @ exps) % d
    return np.exp(2j * np.pi * dot / d)


def shift_operator(d: int, steps: int = 1) -> np.ndarray:
    """Cyclic shift X^steps on one qudit: |k> -> |k + steps mod d>."""
    m = np.zeros((d, d))
    for k in range(d):
        m[(k + steps) % d, k] = 1.0
    return m


def fourier_matrix(d: int) -> np.ndarray:
    """Qudit DFT: F[j, x] = omega^(j x) / sqrt(d) (F = Hadamard for d = 2)."""
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def fourier_string_matrix(d: int, n: int) -> np.ndarray:
    """Per-digit DFT on an n-digit register (F^(x) tensor n)."""
    f = fourier_matrix(d)
    out = np.array([[1.0 + 0j]])
    for _ in range(n):
        out = np.kron(out, f)
    return out


def controlled_phase_matrix(d: int, n: int, sign: int = 1) -> np.ndarray:
    """Controlled-Z between two n-digit registers: |x, k> -> omega^(sign x.k)|x, k>.

    Index order is (control register, target register).
    """
    table = controlled_phase_table(d, n, sign)
    return np.diag(table.reshape(-1))


def controlled_phase_table(d: int, n: int, sign: int = 1) -> np.ndarray:
    """Phase factors omega^(sign x.k) as a (d^n, d^n) table over (x, k)."""
    digits = _digit_table(d, n)
    dot = (digits @ digits.T * sign) % d
    return np.exp(2j * np.pi * dot / d)


def apply_controlled_phase(s: StateVector, control: str, target: str,
                           digit_dim: int, n_digits: int, sign: int = 1) -> StateVector:
    """Apply the diagonal controlled-Z between two parts without building the matrix."""
    for lbl in (control, target):
        if s.layout.dim_of(lbl) != digit_dim**n_digits:
            raise ArgumentError(
                f"part {lbl!r} has dim {s.layout.dim_of(lbl)}, expected {digit_dim}^{n_digits}")
    table = controlled_phase_table(digit_dim, n_digits, sign)
    t = s.tensor().copy()
    ax_c, ax_t = s.layout.axis(control), s.layout.axis(target)
    shape = [1] * t.ndim
    shape[ax_c] = table.shape[0]
    shape[ax_t] = table.shape[1]
    # reshape needs the earlier axis to vary slowest
    t *= (table if ax_c < ax_t else table.T).reshape(shape)
    return StateVector(s.layout, t.reshape(-1))


def _digit_table(d: int, n: int) -> np.ndarray:
    """(d^n, n) array of base-d digit expansions, most significant digit first."""
    idx = np.arange(d**n)
    cols = []
    for pos in range(n - 1, -1, -1):
        cols.append((idx // d**pos) % d)
    return np.stack(cols, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# JSON fixtures


def state_to_json(s: StateVector) -> dict:
    """JSON form: layout parts plus interleaved re/im amplitude array."""
    flat = np.empty(2 * s.dim)
    flat[0::2] = s.amplitudes.real
    flat[1::2] = s.amplitudes.imag
    return {"parts": [[lbl, dim] for lbl, dim in s.layout.parts],
            "re_im": flat.tolist()}


def state_from_json(obj: dict) -> StateVector:
    layout = SubsystemLayout([(lbl, int(dim)) for lbl, dim in obj["parts"]])
    flat = np.asarray(obj["re_im"], dtype=float)
    if flat.size != 2 * layout.total_dim:
        raise ArgumentError("re_im length does not match layout dimension")
    return StateVector(layout, flat[0::2] + 1j * flat[1::2])


def state_to_json_str(s: StateVector) -> str:
    return json.dumps(state_to_json(s))


def state_from_json_str(text: str) -> StateVector:
    return state_from_json(json.loads(text))
