"""GF(2) linear algebra, random CSS codes, syndrome projectors, universal hashing.

Binary matrices are stored dense as uint8 arrays with entries in {0, 1};
desk-scale block lengths never justify bit packing.  Hash functions are
random linear maps over Z_q for a prime modulus q; q = 2 recovers binary
hashing and larger prime q serves the typical-subspace qudit, where a
non-prime dimension is zero-padded up to q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .qstate import fourier_string_matrix

_MAX_RESAMPLE = 256


# ---------------------------------------------------------------------------
# GF(2) kernels


def _as_gf2(m) -> np.ndarray:
    a = np.asarray(m)
    if a.ndim != 2:
        raise ArgumentError(f"expected a 2-D binary matrix, got shape {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise ArgumentError("matrix entries must be 0 or 1")
    return a.astype(np.uint8)


def gf2_rref(m) -> tuple[np.ndarray, list[int]]:
    """Reduced row-echelon form over GF(2); returns (R, pivot column list)."""
    r = _as_gf2(m).copy()
    rows, cols = r.shape
    pivots: list[int] = []
    lead = 0
    for c in range(cols):
        if lead >= rows:
            break
        hits = np.nonzero(r[lead:, c])[0]
        if hits.size == 0:
            continue
        p = lead + int(hits[0])
        if p != lead:
            r[[lead, p]] = r[[p, lead]]
        others = np.nonzero(r[:, c])[0]
        others = others[others != lead]
        if others.size:
            r[others] ^= r[lead]
        pivots.append(c)
        lead += 1
    return r, pivots


def gf2_rank(m) -> int:
    return len(gf2_rref(m)[1])


def gf2_nullspace(m) -> np.ndarray:
    """Basis of {v : M v = 0} over GF(2), one vector per row ((n - rank) x n)."""
    a = _as_gf2(m)
    _, cols = a.shape
    r, pivots = gf2_rref(a)
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, fc in enumerate(free):
        basis[i, fc] = 1
        for row, pc in enumerate(pivots):
            basis[i, pc] = r[row, fc]
    return basis


def gf2_solve(m, b) -> np.ndarray | None:
    """One solution of M x = b over GF(2), or None when inconsistent."""
    a = _as_gf2(m)
    rhs = _as_gf2(np.asarray(b).reshape(-1, 1))
    if rhs.shape[0] != a.shape[0]:
        raise ArgumentError("right-hand side length does not match row count")
    aug, pivots = gf2_rref(np.hstack([a, rhs]))
    if a.shape[1] in pivots:
        return None
    x = np.zeros(a.shape[1], dtype=np.uint8)
    for row, pc in enumerate(pivots):
        x[pc] = aug[row, -1]
    return x


def gf2_mul(a, b) -> np.ndarray:
    """Matrix product over GF(2)."""
    return (_as_gf2(a).astype(np.int64) @ _as_gf2(b).astype(np.int64) % 2).astype(np.uint8)


@dataclass(frozen=True)
class Gf2Matrix:
    """Immutable binary matrix wrapper with shape metadata."""

    bits: np.ndarray

    def __init__(self, bits):
        arr = _as_gf2(bits).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    def rank(self) -> int:
        return gf2_rank(self.bits)

    @classmethod
    def empty(cls, cols: int) -> "Gf2Matrix":
        return cls(np.zeros((0, cols), dtype=np.uint8))


# ---------------------------------------------------------------------------
# CSS codes


@dataclass(frozen=True)
class CssCode:
    """CSS stabilizer data: full-rank parity matrices with h_x h_z^T = 0."""

    n: int
    h_x: Gf2Matrix
    h_z: Gf2Matrix

    def __post_init__(self):
        if self.h_x.cols != self.n or self.h_z.cols != self.n:
            raise ArgumentError("parity matrix width must equal block length")
        if self.h_x.rows and self.h_x.rank() != self.h_x.rows:
            raise ArgumentError("h_x is not full rank")
        if self.h_z.rows and self.h_z.rank() != self.h_z.rows:
            raise ArgumentError("h_z is not full rank")
        if self.h_x.rows and self.h_z.rows:
            if gf2_mul(self.h_x.bits, self.h_z.bits.T).any():
                raise ArgumentError("h_x . h_z^T != 0: stabilizers do not commute")
        if self.logical_count < 0:
            raise ArgumentError("more stabilizers than qubits")

    @property
    def m_x(self) -> int:
        return self.h_x.rows

    @property
    def m_z(self) -> int:
        return self.h_z.rows

    @property
    def logical_count(self) -> int:
        return self.n - self.m_x - self.m_z


def _rng_of(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sample_full_rank(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if rows == 0:
        return np.zeros((0, cols), dtype=np.uint8)
    for _ in range(_MAX_RESAMPLE):
        m = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
        if gf2_rank(m) == rows:
            return m
    raise ArgumentError(f"could not sample a full-rank {rows}x{cols} binary matrix")


def sample_css(n: int, m_x: int, m_z: int, seed) -> CssCode:
    """Uniform random CSS code: full-rank h_z, then full-rank h_x in its dual.

    Deterministic given the seed.  Requires m_x + m_z <= n; the dual
    constraint leaves an (n - m_z)-dimensional space for h_x rows.
    """
    if n < 1:
        raise ArgumentError("block length must be >= 1")
    if m_x < 0 or m_z < 0:
        raise ArgumentError("stabilizer counts must be nonnegative")
    if m_x > n - m_z:
        raise ArgumentError(
            f"constraint space too small: m_x = {m_x} > n - m_z = {n - m_z}")
    rng = _rng_of(seed)
    h_z = _sample_full_rank(m_z, n, rng)
    if m_x == 0:
        h_x = np.zeros((0, n), dtype=np.uint8)
    elif m_z == 0:
        h_x = _sample_full_rank(m_x, n, rng)
    else:
        dual = gf2_nullspace(h_z)
        coeff = _sample_full_rank(m_x, dual.shape[0], rng)
        h_x = gf2_mul(coeff, dual)
    return CssCode(n=n, h_x=Gf2Matrix(h_x), h_z=Gf2Matrix(h_z))


def _bit_strings(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def syndrome_table(h: Gf2Matrix | np.ndarray) -> np.ndarray:
    """Syndrome of every length-n bit string, as a (2^n, m) array."""
    bits = h.bits if isinstance(h, Gf2Matrix) else _as_gf2(h)
    strings = _bit_strings(bits.shape[1])
    return (strings.astype(np.int64) @ bits.T.astype(np.int64) % 2).astype(np.uint8)


def syndrome_projector(code: CssCode, kind: str, syndrome) -> np.ndarray:
    """Dense projector onto the given stabilizer syndrome.

    Z-kind projects onto computational strings k with h_z k = syndrome;
    X-kind is the same construction for h_x conjugated by the per-digit
    Fourier (Hadamard) transform.
    """
    syndrome = np.asarray(syndrome, dtype=np.uint8).reshape(-1)
    if kind == "Z":
        h = code.h_z
    elif kind == "X":
        h = code.h_x
    else:
        raise ArgumentError(f"kind must be 'Z' or 'X', got {kind!r}")
    if syndrome.size != h.rows:
        raise ArgumentError(f"syndrome length {syndrome.size} != {h.rows} rows of h_{kind.lower()}")
    if h.rows == 0:
        mask = np.ones(2**code.n, dtype=bool)
    else:
        mask = (syndrome_table(h) == syndrome).all(axis=1)
    diag = np.diag(mask.astype(complex))
    if kind == "Z":
        return diag
    f = fourier_string_matrix(2, code.n)
    return f @ diag @ f.conj().T


def code_to_json(code: CssCode) -> dict:
    return {
        "n": code.n,
        "h_x": ["".join(map(str, row)) for row in code.h_x.bits],
        "h_z": ["".join(map(str, row)) for row in code.h_z.bits],
    }


def code_from_json(obj: dict) -> CssCode:
    n = int(obj["n"])

    def rows(key):
        data = [[int(ch) for ch in row] for row in obj[key]]
        return Gf2Matrix(np.array(data, dtype=np.uint8).reshape(len(data), n) if data
                         else np.zeros((0, n), dtype=np.uint8))

    return CssCode(n=n, h_x=rows("h_x"), h_z=rows("h_z"))


# ---------------------------------------------------------------------------
# universal hashing over Z_q


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    for f in range(2, int(math.isqrt(q)) + 1):
        if q % f == 0:
            return False
    return True


def next_prime(q: int) -> int:
    """Smallest prime >= q."""
    q = max(q, 2)
    while not is_prime(q):
        q += 1
    return q


@dataclass(frozen=True)
class HashFunction:
    """Random linear map Z_q^n -> Z_q^m from a 2-universal family."""

    q: int
    rows: np.ndarray  # (m, n) residues

    def __init__(self, q: int, rows):
        q = int(q)
        if not is_prime(q):
            raise ArgumentError(f"hash modulus {q} is not prime")
        arr = np.asarray(rows, dtype=np.int64)
        if arr.ndim != 2:
            raise ArgumentError("hash rows must form a 2-D matrix")
        if arr.size and (arr.min() < 0 or arr.max() >= q):
            raise ArgumentError(f"hash entries must lie in [0, {q})")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "rows", arr)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]


def sample_hash(n: int, m: int, q: int, seed) -> HashFunction:
    """Uniform random hash matrix; rows are drawn one at a time, so for a
    fixed seed the m-row hash is a prefix of the (m+1)-row hash (nested
    side information, used by the monotonicity checks)."""
    if m < 0 or n < 1:
        raise ArgumentError("need m >= 0 and n >= 1")
    if m > n:
        raise ArgumentError(f"syndrome length m = {m} exceeds input length n = {n}")
    if not is_prime(q):
        raise ArgumentError(f"hash modulus {q} is not prime")
    rng = _rng_of(seed)
    rows = np.stack([rng.integers(0, q, size=n, dtype=np.int64) for _ in range(m)]) \
        if m else np.zeros((0, n), dtype=np.int64)
    return HashFunction(q, rows)


def hash_apply(f: HashFunction, vec) -> tuple[int, ...]:
    """Syndrome f(x) of a length-n residue vector, as a tuple of digits."""
    x = np.asarray(vec, dtype=np.int64).reshape(-1)
    if x.size != f.n:
        raise ArgumentError(f"input length {x.size} != hash arity {f.n}")
    if x.size and (x.min() < 0 or x.max() >= f.q):
        raise ArgumentError(f"input digits must lie in [0, {f.q})")
    return tuple(int(v) for v in (f.rows @ x) % f.q)


def hash_to_json(f: HashFunction) -> dict:
    return {"q": f.q, "n": f.n, "m": f.m, "rows": f.rows.tolist()}


def hash_from_json(obj: dict) -> HashFunction:
    rows = np.asarray(obj["rows"], dtype=np.int64).reshape(int(obj["m"]), int(obj["n"]))
    return HashFunction(int(obj["q"]), rows)
