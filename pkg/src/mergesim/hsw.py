"""Static HSW-style measurements: projector conditions, square-root (pretty
good) measurements keyed by hash-function side information, exact error
probability, and the covariant projector family used after pruning.

The measurement for side information t is the square-root measurement over
the smoothed operators Q Q_k Q of the bucket {k : f(k) = t}, completed by an
abstain element; an abstain outcome counts as an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codes import HashFunction, hash_apply, sample_hash
from .errors import ArgumentError
from .qstate import DensityOperator, Ensemble, SubsystemLayout, entropy_of_spectrum
from .typicality import TypicalSetDescriptor, _string_table, typical_set

_SUPPORT_TOL = 1e-10
_PSD_FLOOR = -1e-10


# ---------------------------------------------------------------------------
# i.i.d. ensembles with string labels


@dataclass(frozen=True)
class LabeledEnsemble:
    """Ensemble entries paired with the index vectors hashed for side information."""

    weights: np.ndarray
    operators: tuple[np.ndarray, ...]
    labels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not (len(self.weights) == len(self.operators) == len(self.labels)):
            raise ArgumentError("weights, operators, labels must align")

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def average(self) -> np.ndarray:
        return sum(w * op for w, op in zip(self.weights, self.operators))


def labeled_from_ensemble(ensemble: Ensemble) -> LabeledEnsemble:
    """Label each entry by its position (single-digit index vectors)."""
    return LabeledEnsemble(
        weights=ensemble.weights,
        operators=tuple(st.matrix for _, st in ensemble.entries),
        labels=tuple((i,) for i in range(len(ensemble.entries))),
    )


def iid_extension(ensemble: Ensemble, n: int) -> LabeledEnsemble:
    """n-fold product ensemble {p_k, rho_k1 x ... x rho_kn} labeled by strings."""
    base_w = ensemble.weights
    base_ops = [st.matrix for _, st in ensemble.entries]
    d = len(base_ops)
    strings = _string_table(d, n)
    weights, ops, labels = [], [], []
    for row in strings:
        w = float(np.prod(base_w[row]))
        op = np.array([[1.0 + 0j]])
        for sym in row:
            op = np.kron(op, base_ops[sym])
        weights.append(w)
        ops.append(op)
        labels.append(tuple(int(v) for v in row))
    return LabeledEnsemble(np.array(weights), tuple(ops), tuple(labels))


# ---------------------------------------------------------------------------
# projector conditions


@dataclass(frozen=True)
class ConditionReport:
    """Smallest parameters making the five projector conditions hold, with
    per-condition pass/fail against optional target bounds."""

    epsilon: float
    r: float
    d: float
    lam: float
    gamma: float
    side_info_floor_bits: int
    satisfied: dict[str, bool]
    margins: dict[str, float]
    targets: dict[str, float] | None

    CONDITIONS = ("avg_mass", "member_mass", "operator_dominance",
                  "sum_dominance", "spectral_ceiling")


def support_projector(mat: np.ndarray, tol: float = _SUPPORT_TOL) -> np.ndarray:
    """Projector onto the eigenspace of `mat` with eigenvalue > tol."""
    w, v = np.linalg.eigh(mat)
    keep = w > tol
    vk = v[:, keep]
    return vk @ vk.conj().T


def support_smoothing(ensemble: LabeledEnsemble) -> tuple[list[np.ndarray], np.ndarray]:
    """Support projectors of the members plus the identity as the average-state
    projector: the unsmoothed desk-scale choice, exact for orthogonal ensembles."""
    dim = ensemble.dim
    return [support_projector(op) for op in ensemble.operators], np.eye(dim, dtype=complex)


def _dominance_factor(numerator: np.ndarray, denominator: np.ndarray,
                      tol: float = _SUPPORT_TOL) -> float:
    """Smallest c with numerator <= c * denominator, or +inf if unsupported."""
    w, v = np.linalg.eigh(denominator)
    keep = w > tol * max(float(w.max()), 1e-300)
    if not keep.any():
        return math.inf if np.abs(numerator).max() > 1e-12 else 0.0
    vk, wk = v[:, keep], w[keep]
    proj = vk @ vk.conj().T
    leak = numerator - proj @ numerator @ proj
    if np.abs(leak).max() > 1e-8:
        return math.inf
    mid = (vk.conj().T @ numerator @ vk) / np.sqrt(np.outer(wk, wk))
    top = float(np.linalg.eigvalsh(mid)[-1])
    return max(top, 0.0)


def check_conditions(q_list: Sequence[np.ndarray | None], q: np.ndarray,
                     ensemble: LabeledEnsemble, targets: dict[str, float] | None = None,
                     gamma: float = 1.0) -> ConditionReport:
    """Measure the smallest (epsilon, r, d, lambda) for the given projectors.

    q_list aligns with the ensemble entries; None marks a member without a
    projector (its full mass counts against epsilon, and it is excluded
    from the unweighted operator sum of the d condition).
    """
    if len(q_list) != len(ensemble.operators):
        raise ArgumentError("q_list must align with the ensemble")
    avg = ensemble.average()
    mass_avg = 1.0 - float(np.trace(avg @ q).real)
    mass_members = 0.0
    r = 0.0
    selected_sum = np.zeros_like(avg)
    any_selected = False
    for w, op, qk in zip(ensemble.weights, ensemble.operators, q_list):
        if qk is None:
            mass_members += w
            continue
        any_selected = True
        mass_members += w * (1.0 - float(np.trace(op @ qk).real))
        r = max(r, _dominance_factor(qk, op))
        selected_sum = selected_sum + op
    epsilon = max(mass_avg, mass_members)
    d_param = _dominance_factor(selected_sum, avg) if any_selected else 0.0
    lam = float(np.linalg.eigvalsh(q @ avg @ q)[-1])
    lam = max(lam, 0.0)
    if math.isfinite(r) and math.isfinite(d_param) and r > 0 and d_param > 0 and lam > 0:
        floor_bits = math.floor(math.log2(r * d_param * lam) / gamma)
    else:
        floor_bits = 0
    measured = {"avg_mass": mass_avg, "member_mass": mass_members,
                "operator_dominance": r, "sum_dominance": d_param,
                "spectral_ceiling": lam}
    margins, satisfied = {}, {}
    for name in ConditionReport.CONDITIONS:
        if targets is not None and name in targets:
            margins[name] = targets[name] - measured[name]
        else:
            margins[name] = math.inf if math.isfinite(measured[name]) else -math.inf
        satisfied[name] = margins[name] >= 0
    return ConditionReport(
        epsilon=epsilon, r=r, d=d_param, lam=lam, gamma=gamma,
        side_info_floor_bits=floor_bits, satisfied=satisfied,
        margins=margins, targets=dict(targets) if targets else None)


def appendix_targets(ensemble: Ensemble, n: int, delta: float) -> dict[str, float]:
    """The i.i.d. exponent bounds for r, d, lambda at the given n and delta."""
    p = ensemble.weights
    avg_entropy = entropy_of_spectrum(np.linalg.eigvalsh(ensemble.average().matrix))
    mean_member_entropy = float(sum(
        w * entropy_of_spectrum(np.linalg.eigvalsh(st.matrix))
        for w, st in ensemble.entries))
    h_p = entropy_of_spectrum(p)
    return {
        "operator_dominance": 2.0 ** (n * (mean_member_entropy + delta)),
        "sum_dominance": 2.0 ** (n * (h_p + delta)),
        "spectral_ceiling": 2.0 ** (-n * (avg_entropy - delta)),
    }


def conditional_typical_projectors(ensemble: Ensemble, n: int, delta: float
                                   ) -> tuple[TypicalSetDescriptor, list[np.ndarray | None]]:
    """Per-string typical projectors Q_k for the n-fold product ensemble.

    For each string k in the typical set of the weights, Q_k keeps the
    eigenvalue strings of rho_k1 x ... x rho_kn with eigenvalue at least
    2^(-n [sum_a p_a S(rho_a) + delta]); the ensemble-average cutoff makes
    the operator-dominance bound r <= 2^(n [sum p S + delta]) hold by
    construction.  Atypical strings get None.
    """
    ts = typical_set(ensemble.weights, n, delta)
    typical = set(ts.members)
    mean_entropy = float(sum(
        w * entropy_of_spectrum(np.linalg.eigvalsh(st.matrix))
        for w, st in ensemble.entries))
    cutoff = -n * (mean_entropy + delta)  # in log2 of eigenvalue
    eigs = [np.linalg.eigh(st.matrix) for _, st in ensemble.entries]
    d_members = len(ensemble.entries)
    projectors: list[np.ndarray | None] = []
    for row in _string_table(d_members, n):
        key = tuple(int(v) for v in row)
        if key not in typical:
            projectors.append(None)
            continue
        lam_digits = [np.clip(eigs[sym][0], 0.0, None) for sym in row]
        dim_local = lam_digits[0].size
        with np.errstate(divide="ignore"):
            logs = [np.where(l > 0, np.log2(np.where(l > 0, l, 1.0)), -np.inf)
                    for l in lam_digits]
        combos = _string_table(dim_local, n)
        log_lam = np.array([sum(logs[i][c] for i, c in enumerate(row_c))
                            for row_c in combos])
        mask = np.isfinite(log_lam) & (log_lam >= cutoff - 1e-12)
        u_n = np.array([[1.0 + 0j]])
        for sym in row:
            u_n = np.kron(u_n, eigs[sym][1])
        projectors.append((u_n * mask.astype(float)) @ u_n.conj().T)
    return ts, projectors


# ---------------------------------------------------------------------------
# pretty-good measurements


ABSTAIN = None


@dataclass(frozen=True)
class Povm:
    """Measurement family keyed by hash syndrome.

    Elements are ((syndrome, label), operator); label ABSTAIN (None) marks
    the completion element.  For every syndrome, the elements sum to the
    identity within 1e-8 and each element is PSD within a -1e-10 floor.
    """

    elements: tuple[tuple[tuple[tuple[int, ...], tuple[int, ...] | None], np.ndarray], ...]

    def __post_init__(self):
        dim = self.elements[0][1].shape[0]
        eye = np.eye(dim)
        for (t, lbl), op in self.elements:
            wmin = float(np.linalg.eigvalsh(op)[0])
            if wmin < _PSD_FLOOR:
                raise ArgumentError(f"POVM element {t},{lbl} not PSD: {wmin}")
        for t, ops in self.by_syndrome().items():
            total = sum(op for _, op in ops)
            if np.abs(total - eye).max() > 1e-8:
                raise ArgumentError(f"POVM for syndrome {t} does not resolve the identity")

    def by_syndrome(self) -> dict[tuple[int, ...], list[tuple[tuple[int, ...] | None, np.ndarray]]]:
        out: dict[tuple[int, ...], list] = {}
        for (t, lbl), op in self.elements:
            out.setdefault(t, []).append((lbl, op))
        return out

    def element(self, syndrome: tuple[int, ...], label) -> np.ndarray | None:
        for (t, lbl), op in self.elements:
            if t == syndrome and lbl == label:
                return op
        return None


def pgm_elements(operators: Sequence[np.ndarray],
                 tol: float = _SUPPORT_TOL) -> tuple[list[np.ndarray], np.ndarray]:
    """Square-root measurement over PSD operators: M^(-1/2) S_k M^(-1/2)
    with M = sum S_k, plus the completion 1 - supp(M) as abstain."""
    if not operators:
        raise ArgumentError("need at least one operator")
    dim = operators[0].shape[0]
    m = sum(operators)
    w, v = np.linalg.eigh(m)
    keep = w > tol * max(float(w.max()), 1e-300)
    if not keep.any():
        return [np.zeros((dim, dim), dtype=complex) for _ in operators], np.eye(dim, dtype=complex)
    inv_half = (v[:, keep] * (w[keep] ** -0.5)) @ v[:, keep].conj().T
    elements = [inv_half @ s @ inv_half for s in operators]
    supp = (v[:, keep]) @ v[:, keep].conj().T
    return elements, np.eye(dim, dtype=complex) - supp


def build_measurement(ensemble: LabeledEnsemble, f: HashFunction,
                      q_list: Sequence[np.ndarray | None] | None = None,
                      q: np.ndarray | None = None) -> Povm:
    """Pretty-good measurement per syndrome bucket over smoothed operators Q Q_k Q.

    With q_list/q omitted, support smoothing is used (Q_k = supp(rho_k),
    Q = identity), which discriminates orthogonal-support buckets exactly.
    """
    if q_list is None or q is None:
        default_q_list, default_q = support_smoothing(ensemble)
        q_list = default_q_list if q_list is None else q_list
        q = default_q if q is None else q
    if len(q_list) != len(ensemble.operators):
        raise ArgumentError("q_list must align with the ensemble")
    dim = ensemble.dim
    buckets: dict[tuple[int, ...], list[tuple[tuple[int, ...], np.ndarray]]] = {}
    for label, qk in zip(ensemble.labels, q_list):
        if qk is None:
            continue
        t = hash_apply(f, label)
        buckets.setdefault(t, []).append((label, q @ qk @ q))
    all_syndromes = [tuple(int(v) for v in row)
                     for row in _string_table(f.q, f.m)] if f.m else [()]
    elements = []
    for t in all_syndromes:
        members = buckets.get(t, [])
        if members:
            ops, abstain = pgm_elements([s for _, s in members])
            for (label, _), op in zip(members, ops):
                elements.append(((t, label), op))
        else:
            abstain = np.eye(dim, dtype=complex)
        elements.append(((t, ABSTAIN), abstain))
    return Povm(tuple(elements))


@dataclass(frozen=True)
class PeEstimate:
    """Exact per-hash error probabilities and their Monte Carlo summary."""

    mean: float
    stderr: float
    values: tuple[float, ...]
    seeds: tuple[int, ...]


def exact_error_probability(ensemble: LabeledEnsemble, povm: Povm, f: HashFunction) -> float:
    """P_e = <sum_{l != k} Tr[Lambda_{f(k),l} rho_k]>_k; abstain counts as error."""
    pe = 0.0
    for w, op, label in zip(ensemble.weights, ensemble.operators, ensemble.labels):
        t = hash_apply(f, label)
        lam = povm.element(t, label)
        success = float(np.trace(lam @ op).real) if lam is not None else 0.0
        pe += w * (1.0 - success)
    return max(pe, 0.0)


def error_probability(ensemble: LabeledEnsemble, m: int, q: int, n_samples: int,
                      seed: int, q_list: Sequence[np.ndarray | None] | None = None,
                      q_proj: np.ndarray | None = None) -> PeEstimate:
    """Average the exact P_e over `n_samples` hash functions drawn from the
    2-universal family, with per-sample seeds derived from `seed`."""
    if n_samples < 1:
        raise ArgumentError("need at least one hash sample")
    arity = len(ensemble.labels[0])
    child_seeds = [int(s.generate_state(1)[0]) for s in
                   np.random.SeedSequence(seed).spawn(n_samples)]
    values = []
    for s in child_seeds:
        f = sample_hash(arity, m, q, s)
        povm = build_measurement(ensemble, f, q_list, q_proj)
        values.append(exact_error_probability(ensemble, povm, f))
    arr = np.array(values)
    stderr = float(arr.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return PeEstimate(mean=float(arr.mean()), stderr=stderr,
                      values=tuple(values), seeds=tuple(child_seeds))


# ---------------------------------------------------------------------------
# covariant projector family (pruned protocol)


def _embed_on_part(layout: SubsystemLayout, label: str, op: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for lbl, dim in layout.parts:
        out = np.kron(out, op if lbl == label else np.eye(dim))
    return out


def covariant_projectors(psi0_cb: DensityOperator, p0: np.ndarray,
                         group_order: int) -> list[np.ndarray]:
    """Family P_x = (Z^x)^C P_0 (Z^-x)^C for x in the phase group of C.

    The C part of the layout must have dimension equal to the group order.
    """
    if "C" not in psi0_cb.layout.labels:
        raise ArgumentError("state must carry a part labeled C")
    d_c = psi0_cb.layout.dim_of("C")
    if d_c != group_order:
        raise ArgumentError(
            f"group order {group_order} != dimension {d_c} of part C")
    dim = psi0_cb.layout.total_dim
    if p0.shape != (dim, dim):
        raise ArgumentError(f"P_0 shape {p0.shape} != ({dim}, {dim})")
    j = np.arange(d_c)
    family = []
    for x in range(group_order):
        z = np.diag(np.exp(2j * np.pi * (j * x % d_c) / d_c))
        u = _embed_on_part(psi0_cb.layout, "C", z)
        family.append(u @ p0 @ u.conj().T)
    return family


@dataclass(frozen=True)
class CovariantReport:
    """Checks inherited by the conjugated family from the base point."""

    base_mass_defect: float        # Tr[psi0'(1 - P_0)]
    mass_bound: float              # epsilon + sqrt(epsilon)
    mass_defects: tuple[float, ...]
    lam_primed: float              # ||P thetabar' P||_inf
    lam_over_mass: float           # lambda / N
    lam_bound: float               # lambda (1 + 2 epsilon)
    psd_gap_min_eigenvalue: float  # min eig of thetabar/N - thetabar'


def covariant_report(psi0_cb: DensityOperator, family: Sequence[np.ndarray],
                     theta_states: Sequence[np.ndarray], avg_projector: np.ndarray,
                     theta_bar: np.ndarray, theta_bar_pruned: np.ndarray,
                     epsilon: float, lam: float, prob_mass: float) -> CovariantReport:
    """Evaluate the adapted conditions for the covariant family."""
    base = 1.0 - float(np.trace(psi0_cb.matrix @ family[0]).real)
    defects = tuple(1.0 - float(np.trace(th @ px).real)
                    for th, px in zip(theta_states, family))
    lam_primed = float(np.linalg.eigvalsh(
        avg_projector @ theta_bar_pruned @ avg_projector)[-1])
    gap = theta_bar / prob_mass - theta_bar_pruned
    gap_min = float(np.linalg.eigvalsh(gap)[0])
    return CovariantReport(
        base_mass_defect=base,
        mass_bound=epsilon + math.sqrt(max(epsilon, 0.0)),
        mass_defects=defects,
        lam_primed=max(lam_primed, 0.0),
        lam_over_mass=lam / prob_mass,
        lam_bound=lam * (1.0 + 2.0 * epsilon),
        psd_gap_min_eigenvalue=gap_min)


@dataclass(frozen=True)
class PrunedGapReport:
    """Blockwise spectrum of thetabar/N - thetabar' (exact, per C string)."""

    min_eigenvalue: float
    max_eigenvalue: float
    atypical_strings: int


def pruned_average_gap(ts: TypicalSetDescriptor,
                       phi_b: Sequence[np.ndarray]) -> PrunedGapReport:
    """Exact extremal eigenvalues of (1/N) thetabar - thetabar'.

    Both operators are block diagonal over the C-basis strings, so the
    spectrum is the union over strings k of the block spectra: zero for
    typical k and (p_k / N) spec(phi_k1 x ... x phi_kn) otherwise; Kronecker
    spectra are products of the per-symbol spectra.
    """
    d = len(ts.p)
    spectra = [np.linalg.eigvalsh(m) for m in phi_b]
    if len(spectra) != d:
        raise ArgumentError("need one B-side state per base symbol")
    typical = set(ts.members)
    min_eig, max_eig = 0.0, 0.0
    atypical = 0
    for row in _string_table(d, ts.n):
        key = tuple(int(v) for v in row)
        if key in typical:
            continue
        atypical += 1
        p_k = float(np.prod([ts.p[sym] for sym in row]))
        block = np.array([1.0])
        for sym in row:
            block = np.outer(block, spectra[sym]).reshape(-1)
        block = block * (p_k / ts.prob_mass)
        min_eig = min(min_eig, float(block.min()))
        max_eig = max(max_eig, float(block.max()))
    return PrunedGapReport(min_eigenvalue=min_eig, max_eigenvalue=max_eig,
                           atypical_strings=atypical)


def iid_cq_average(p: Sequence[float], phi_b: Sequence[np.ndarray], n: int,
                   typical: TypicalSetDescriptor | None = None) -> np.ndarray:
    """Dense sum_k c_k |k><k|^C x (phi_k1 x ... x phi_kn) on the n-copy space.

    Without a descriptor, c_k = p_k over all strings (the averaged phase
    ensemble); with one, c_k = p_k / N over typical strings only (its
    pruned counterpart).
    """
    p = np.asarray(p, dtype=float)
    d = p.size
    d_b = phi_b[0].shape[0]
    dim_c, dim_b = d**n, d_b**n
    out = np.zeros((dim_c * dim_b, dim_c * dim_b), dtype=complex)
    typ = set(typical.members) if typical is not None else None
    for idx, row in enumerate(_string_table(d, n)):
        key = tuple(int(v) for v in row)
        if typ is not None and key not in typ:
            continue
        c_k = float(np.prod(p[row]))
        if typ is not None:
            c_k /= typical.prob_mass
        block = np.array([[1.0 + 0j]])
        for sym in row:
            block = np.kron(block, phi_b[sym])
        lo = idx * dim_b
        out[lo:lo + dim_b, lo:lo + dim_b] = c_k * block
    return out


def condition_csv_row(n: int, m: int, delta: float, report: ConditionReport,
                      pe: PeEstimate | None = None) -> dict[str, float]:
    """Flat row for the sweep tables: (n, m, delta, eps, r, d, lambda, P_e, stderr)."""
    row = {"n": n, "m": m, "delta": delta, "epsilon": report.epsilon,
           "r": report.r, "d": report.d, "lambda": report.lam}
    if pe is not None:
        row["p_e"] = pe.mean
        row["p_e_stderr"] = pe.stderr
    return row
