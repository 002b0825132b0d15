"""Classical typical sets, typical-subspace projectors, and state pruning.

Typicality is entropic (weak): a length-n string k over the support of a
base distribution p is typical when |-(1/n) log2 p_k - H(p)| <= delta.
Zero-probability symbols are never typical.  At desk scale everything is
enumerated exhaustively, subject to a string-count cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ResourceLimitError
from .qstate import DensityOperator, StateVector, entropy_of_spectrum

DEFAULT_MAX_STRINGS = 2**22


@dataclass(frozen=True)
class TypicalSetDescriptor:
    """Exhaustive description of T_delta^n for a base distribution."""

    p: tuple[float, ...]
    n: int
    delta: float
    members: tuple[tuple[int, ...], ...]  # sorted lexicographically
    prob_mass: float                      # N = Pr[k typical]
    base_entropy: float

    @property
    def dim(self) -> int:
        """Number of typical strings (dimension of the typical subspace)."""
        return len(self.members)

    @property
    def dim_bound(self) -> float:
        """The 2^(n (H + delta)) upper bound on dim."""
        return 2.0 ** (self.n * (self.base_entropy + self.delta))

    def member_index(self) -> dict[tuple[int, ...], int]:
        """Map from typical string to its (sorted) typical-basis index."""
        return {k: i for i, k in enumerate(self.members)}


def _string_table(alphabet: int, n: int) -> np.ndarray:
    """(alphabet^n, n) array of strings, lexicographic, MSD first."""
    idx = np.arange(alphabet**n)
    cols = [(idx // alphabet**pos) % alphabet for pos in range(n - 1, -1, -1)]
    return np.stack(cols, axis=1)


def typical_set(p, n: int, delta: float,
                max_strings: int = DEFAULT_MAX_STRINGS) -> TypicalSetDescriptor:
    """Enumerate the entropically typical strings of p^(x n).

    Raises ArgumentError when no string qualifies (the descriptor's mass
    invariant requires N > 0; enlarge delta or change n).
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if n < 1:
        raise ArgumentError("need n >= 1")
    if delta <= 0:
        raise ArgumentError("need delta > 0")
    if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
        raise ArgumentError("p must be a probability distribution")
    d = p.size
    if d**n > max_strings:
        raise ResourceLimitError(
            f"typical-set enumeration needs {d}^{n} = {d**n} strings > cap {max_strings}")
    entropy = entropy_of_spectrum(p)
    with np.errstate(divide="ignore"):
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), -np.inf)
    strings = _string_table(d, n)
    log_pk = logs[strings].sum(axis=1)
    rate = -log_pk / n
    mask = np.abs(rate - entropy) <= delta + 1e-12
    mask &= np.isfinite(log_pk)  # zero-probability strings are never typical
    if not mask.any():
        raise ArgumentError(
            f"empty typical set for n={n}, delta={delta}: no string rate within "
            f"{delta} of H(p)={entropy:.6f}")
    members = tuple(tuple(int(v) for v in row) for row in strings[mask])
    mass = float(np.exp2(log_pk[mask]).sum())
    return TypicalSetDescriptor(
        p=tuple(float(v) for v in p), n=n, delta=float(delta),
        members=members, prob_mass=mass, base_entropy=entropy)


def prune(psi0: StateVector, ts: TypicalSetDescriptor,
          label: str = "A") -> tuple[float, StateVector]:
    """Project the n-copy state onto the typical subspace of `label` and renormalize.

    The part must be indexed by base-d strings in the same (Schmidt) basis
    used to build the descriptor.  Returns (projection probability,
    normalized pruned state); the probability equals the descriptor's mass
    when the state's Schmidt weights match the base distribution.
    """
    d = len(ts.p)
    ax = psi0.layout.axis(label)
    dim = psi0.layout.dims[ax]
    if dim != d**ts.n:
        raise ArgumentError(
            f"part {label!r} has dim {dim}, expected {d}^{ts.n} = {d**ts.n}")
    if not ts.members:
        raise ArgumentError("empty typical set")
    mask = np.zeros(dim, dtype=bool)
    weights = d ** np.arange(ts.n - 1, -1, -1)
    for k in ts.members:
        mask[int(np.dot(k, weights))] = True
    t = psi0.tensor().copy()
    sl = [slice(None)] * t.ndim
    sl[ax] = ~mask
    t[tuple(sl)] = 0.0
    flat = t.reshape(-1)
    prob = float(np.vdot(flat, flat).real)
    if prob <= 0:
        raise ArgumentError("state has no weight on the typical subspace")
    return prob, StateVector(psi0.layout, flat / np.sqrt(prob))


@dataclass(frozen=True)
class ProjectorWithStats:
    """Typical-subspace projector of an i.i.d. density operator, with its
    trapped mass Tr[rho^(x n) (1 - Q)] and rank reported alongside."""

    matrix: np.ndarray
    rank: int
    trapped_mass: float
    n: int
    delta: float
    spectrum_entropy: float

    @property
    def dim_bound(self) -> float:
        return 2.0 ** (self.n * (self.spectrum_entropy + self.delta))


def typical_projector(rho: DensityOperator, n: int, delta: float,
                      max_strings: int = DEFAULT_MAX_STRINGS) -> ProjectorWithStats:
    """Projector onto eigenvectors of rho^(x n) whose eigenvalue strings are
    entropically typical for rho's spectrum."""
    w, v = np.linalg.eigh(rho.matrix)
    w = np.clip(w, 0.0, None)
    d = w.size
    if d**n > max_strings:
        raise ResourceLimitError(
            f"typical projector needs {d}^{n} = {d**n} eigenvalue strings > cap {max_strings}")
    entropy = entropy_of_spectrum(w)
    with np.errstate(divide="ignore"):
        logs = np.where(w > 0, np.log2(np.where(w > 0, w, 1.0)), -np.inf)
    strings = _string_table(d, n)
    log_lam = logs[strings].sum(axis=1)
    mask = (np.abs(-log_lam / n - entropy) <= delta + 1e-12) & np.isfinite(log_lam)
    mass_kept = float(np.exp2(log_lam[mask]).sum()) if mask.any() else 0.0
    u_n = np.array([[1.0 + 0j]])
    for _ in range(n):
        u_n = np.kron(u_n, v)
    q = (u_n * mask.astype(float)) @ u_n.conj().T
    return ProjectorWithStats(
        matrix=q, rank=int(mask.sum()), trapped_mass=1.0 - mass_kept,
        n=n, delta=float(delta), spectrum_entropy=entropy)


def descriptor_to_json(ts: TypicalSetDescriptor) -> dict:
    return {
        "p": list(ts.p), "n": ts.n, "delta": ts.delta,
        "members": ["".join(map(str, k)) for k in ts.members],
        "prob_mass": ts.prob_mass, "dim": ts.dim,
        "base_entropy": ts.base_entropy,
    }


def descriptor_from_json(obj: dict) -> TypicalSetDescriptor:
    members = tuple(tuple(int(ch) for ch in s) for s in obj["members"])
    return TypicalSetDescriptor(
        p=tuple(float(v) for v in obj["p"]), n=int(obj["n"]),
        delta=float(obj["delta"]), members=members,
        prob_mass=float(obj["prob_mass"]), base_entropy=float(obj["base_entropy"]))
