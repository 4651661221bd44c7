"""Generator matrices for the driven two-state isomerisation master equation.

The model tracks ``N`` molecules switching between two forms.  The state
index ``k`` counts molecules in form 1, so probability vectors live on
``{0, ..., N}`` and the master equation reads ``p'(t) = (A0 + f(t) A1) p(t)``
with a scalar modulation ``f``.  Both ``A0`` and ``A1`` are tridiagonal with
integer bands:

* ``A0``: diagonal ``-N``, superdiagonal ``l``, subdiagonal ``N - l``
  (column index ``l``).  This is the graph-Laplacian part: columns sum to
  zero and off-diagonal entries are nonnegative.
* ``A1``: diagonal ``N - 2l``, superdiagonal ``l``, subdiagonal ``-N + l``.
  This part carries the drive; it is traceless down each column as well.

The pair closes under the bracket, ``[A0, A1] = -2 A1``, which is what makes
exact exponential formulas for the flow possible.  Everything here stays in
integer arithmetic (int64 bands, object arrays where products can grow) so
structural identities can be asserted exactly.

The module also houses the scalar rate modulations, the persymmetric
involution used for symmetry splitting, and a truncated TASEP generator
that serves as the non-normal comparison case for the pseudospectra tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import RateBoundError, StateSpaceCapError

# Band entries are held in int64; magnitudes stay <= N, so this cap keeps
# every band entry (and dense commutator intermediates up to N^3) exact.
MAX_MOLECULES = 10**6

_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# tridiagonal generators


@dataclass(frozen=True, eq=False)
class TridiagonalGenerator:
    """A tridiagonal operator stored as three bands.

    ``sub[i]`` is entry ``(i+1, i)``, ``diag[k]`` is ``(k, k)`` and
    ``sup[i]`` is ``(i, i+1)``.  The pure generators carry int64 bands;
    assembled combinations ``A0 + f A1`` carry float bands.
    """

    n: int
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"molecule count must be >= 1, got {self.n}")
        if self.n > MAX_MOLECULES:
            raise OverflowError(
                f"n = {self.n} exceeds the integer band cap {MAX_MOLECULES}"
            )
        if len(self.diag) != self.n + 1 or len(self.sub) != self.n or len(self.sup) != self.n:
            raise ValueError("band lengths inconsistent with n")

    @property
    def dim(self) -> int:
        return self.n + 1

    def to_dense(self, dtype=None) -> np.ndarray:
        dtype = dtype if dtype is not None else self.diag.dtype
        a = np.zeros((self.dim, self.dim), dtype=dtype)
        idx = np.arange(self.n)
        a[idx + 1, idx] = self.sub
        a[np.arange(self.dim), np.arange(self.dim)] = self.diag
        a[idx, idx + 1] = self.sup
        return a

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.dim,):
            raise ValueError(f"vector length {v.shape} does not match dim {self.dim}")
        y = self.diag * v
        y[1:] = y[1:] + self.sub * v[:-1]
        y[:-1] = y[:-1] + self.sup * v[1:]
        return y

    def column_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[1:] = s[1:] + self.sup
        s[:-1] = s[:-1] + self.sub
        return s

    def coordinates(self) -> Iterator[tuple[int, int, float]]:
        """Yield nonzero entries as (row, col, value) in row-major order."""
        for k in range(self.dim):
            if k >= 1 and self.sub[k - 1] != 0:
                yield (k, k - 1, self.sub[k - 1])
            if self.diag[k] != 0:
                yield (k, k, self.diag[k])
            if k < self.n and self.sup[k] != 0:
                yield (k, k + 1, self.sup[k])


def build_a0(n: int) -> TridiagonalGenerator:
    """Laplacian part of the generator: the undriven isomerisation flow."""
    ell = np.arange(n + 1, dtype=np.int64)
    return TridiagonalGenerator(
        n=n,
        sub=(n - ell[:-1]).astype(np.int64),
        diag=np.full(n + 1, -n, dtype=np.int64),
        sup=ell[1:].astype(np.int64),
        label="a0",
    )


def build_a1(n: int) -> TridiagonalGenerator:
    """Drive part of the generator, conjugate-odd under the flip involution."""
    ell = np.arange(n + 1, dtype=np.int64)
    return TridiagonalGenerator(
        n=n,
        sub=(-n + ell[:-1]).astype(np.int64),
        diag=(n - 2 * ell).astype(np.int64),
        sup=ell[1:].astype(np.int64),
        label="a1",
    )


def assemble(f, n: int, t: float = 0.0) -> TridiagonalGenerator:
    """Return ``A0 + f(t) A1`` with float bands.

    ``f`` may be a scalar, a plain callable, or a :class:`RateFunction`.
    """
    ft = float(f) if isinstance(f, (int, float)) else float(f(t))
    a0, a1 = build_a0(n), build_a1(n)
    return TridiagonalGenerator(
        n=n,
        sub=a0.sub.astype(float) + ft * a1.sub,
        diag=a0.diag.astype(float) + ft * a1.diag,
        sup=a0.sup.astype(float) + ft * a1.sup,
        label=f"a0+({ft!r})*a1",
    )


# ---------------------------------------------------------------------------
# commutators and span checks


def _tridiagonal_product_bands(a: TridiagonalGenerator, b: TridiagonalGenerator):
    """Bands of the pentadiagonal product ``a @ b``, exact in int64.

    Returns (sub2, sub1, diag, sup1, sup2) where subK/supK sit K below/above
    the diagonal.  Entry magnitudes are bounded by 3 n^2, far inside int64.
    """
    n = a.n
    z = np.zeros
    asub, adiag, asup = a.sub, a.diag, a.sup
    bsub, bdiag, bsup = b.sub, b.diag, b.sup
    diag = adiag * bdiag
    diag[:-1] = diag[:-1] + asup * bsub
    diag[1:] = diag[1:] + asub * bsup
    sup1 = adiag[:-1] * bsup + asup * bdiag[1:]
    sub1 = asub * bdiag[:-1] + adiag[1:] * bsub
    sup2 = asup[:-1] * bsup[1:] if n >= 2 else z(0, dtype=asub.dtype)
    sub2 = asub[1:] * bsub[:-1] if n >= 2 else z(0, dtype=asub.dtype)
    return sub2, sub1, diag, sup1, sup2


def commutator(x, y) -> np.ndarray:
    """Commutator ``x @ y - y @ x``.

    For a pair of :class:`TridiagonalGenerator` inputs the product bands are
    formed directly (O(n) integer work, exact); dense arrays are multiplied
    as given.
    """
    if isinstance(x, TridiagonalGenerator) and isinstance(y, TridiagonalGenerator):
        if x.n != y.n:
            raise ValueError("dimension mismatch")
        n = x.n
        pxy = _tridiagonal_product_bands(x, y)
        pyx = _tridiagonal_product_bands(y, x)
        out = np.zeros((n + 1, n + 1), dtype=np.int64)
        rows = np.arange(n + 1)
        for offset, bxy, byx in zip((-2, -1, 0, 1, 2), pxy, pyx):
            band = bxy - byx
            if offset >= 0:
                r = rows[: n + 1 - offset]
                out[r, r + offset] = band
            else:
                r = rows[: n + 1 + offset]
                out[r - offset, r] = band
        return out
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("dimension mismatch")
    return x @ y - y @ x


def span_coefficients(m: np.ndarray, n: int) -> tuple[Fraction, Fraction]:
    """Exact coefficients (alpha, beta) with ``m = alpha A0 + beta A1``.

    Solves the two-parameter fit from a pair of independent entries and then
    verifies every entry exactly; raises ``ValueError`` if ``m`` lies outside
    the span.  Intended for integer (or Fraction) matrices.
    """
    m = np.asarray(m, dtype=object)
    if m.shape != (n + 1, n + 1):
        raise ValueError("shape does not match n")
    # entry (0,1) = alpha + beta; entry (1,0) = n*(alpha - beta)
    s = Fraction(m[0, 1]) if n >= 1 else Fraction(0)
    d = Fraction(int(m[1, 0]), n)
    alpha = (s + d) / 2
    beta = (s - d) / 2
    a0 = build_a0(n).to_dense(object)
    a1 = build_a1(n).to_dense(object)
    resid = m - (alpha * a0 + beta * a1)
    if any(v != 0 for v in resid.flat):
        raise ValueError("matrix does not lie in span{A0, A1}")
    return alpha, beta


# ---------------------------------------------------------------------------
# Laplacian structure report


@dataclass(frozen=True)
class LaplacianReport:
    """Result of a generator-structure check."""

    ok: bool
    max_column_sum_deviation: float
    min_off_diagonal: float
    tol: float

    def __bool__(self) -> bool:
        return self.ok


def check_laplacian(op, tol: float = 1e-12) -> LaplacianReport:
    """Check that ``op`` is a proper generator (Markov-Laplacian structure).

    Columns must sum to zero and off-diagonal entries must be nonnegative,
    both within ``tol``.  Accepts banded, sparse, or dense input.
    """
    if isinstance(op, TridiagonalGenerator):
        colsum = np.abs(np.asarray(op.column_sums(), dtype=float)).max()
        offmin = float(min(op.sub.min(), op.sup.min())) if op.n >= 1 else 0.0
    elif isinstance(op, SparseGenerator):
        dense = op.to_dense()
        colsum = np.abs(dense.sum(axis=0)).max()
        off = dense[~np.eye(op.dim, dtype=bool)]
        offmin = float(off.min()) if off.size else 0.0
    else:
        dense = np.asarray(op, dtype=float)
        colsum = np.abs(dense.sum(axis=0)).max()
        off = dense[~np.eye(dense.shape[0], dtype=bool)]
        offmin = float(off.min()) if off.size else 0.0
    ok = colsum <= tol and offmin >= -tol
    return LaplacianReport(ok=ok, max_column_sum_deviation=float(colsum),
                           min_off_diagonal=offmin, tol=tol)


# ---------------------------------------------------------------------------
# persymmetric involution and Cartan-like splitting


@dataclass(frozen=True)
class Involution:
    """Index-reversal involution ``P`` with ``P[i, j] = 1`` iff ``j = dim-1-i``.

    Conjugation by ``P`` fixes ``A0`` and negates ``A1``, which is the
    symmetry behind the even/odd splitting below.
    """

    dim: int

    def matrix(self, dtype=np.int64) -> np.ndarray:
        return np.eye(self.dim, dtype=dtype)[::-1]

    def conjugate(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b)
        if b.shape != (self.dim, self.dim):
            raise ValueError("dimension mismatch")
        return b[::-1, ::-1]


def cartan_split(b: np.ndarray, invol: Involution | None = None):
    """Split ``b`` into parts fixed and negated by the flip involution.

    Returns ``(k, p)`` with ``k = (b + PbP)/2``, ``p = (b - PbP)/2``; the
    generators themselves split as ``A0 -> (A0, 0)`` and ``A1 -> (0, A1)``.
    Integer input with odd entry sums yields half-integer output, so the
    result is always float.
    """
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("square matrix required")
    invol = invol or Involution(b.shape[0])
    flipped = invol.conjugate(b)
    return (b + flipped) / 2.0, (b - flipped) / 2.0


# ---------------------------------------------------------------------------
# scalar rate modulations


@dataclass(frozen=True)
class RateFunction:
    """Scalar drive ``f(t)`` with an optional analytic derivative.

    When ``bounded`` is set, every evaluation asserts ``|f(t)| <= 1`` (the
    regime in which both reaction channels keep nonnegative rates).  Without
    an analytic derivative, ``deriv`` falls back to a five-point central
    difference whose truncation error is far below the quadrature tolerances
    used downstream.
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float] | None = None
    bounded: bool = False
    label: str = "f"

    def __call__(self, t: float) -> float:
        v = float(self.value(t))
        if self.bounded and abs(v) > 1.0 + 1e-12:
            raise RateBoundError(f"|f({t})| = {abs(v)} exceeds the unit bound")
        return v

    def deriv(self, t: float) -> float:
        if self.derivative is not None:
            return float(self.derivative(t))
        h = _EPS ** (1.0 / 3.0) * max(1.0, abs(t))
        f = self.value
        return (float(f(t - 2 * h)) - 8.0 * float(f(t - h))
                + 8.0 * float(f(t + h)) - float(f(t + 2 * h))) / (12.0 * h)


@dataclass(frozen=True)
class _Constant:
    # module-level class (not a closure) so rate functions survive pickling
    # into worker processes
    c: float

    def __call__(self, t: float) -> float:
        return self.c


@dataclass(frozen=True)
class _Polynomial:
    coeffs: tuple[float, ...]

    def __call__(self, t: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc


def _neg_sin(t: float) -> float:
    return -math.sin(t)


def as_rate_function(f) -> RateFunction:
    """Coerce a scalar, callable, or RateFunction into a RateFunction."""
    if isinstance(f, RateFunction):
        return f
    if isinstance(f, (int, float)):
        c = float(f)
        return RateFunction(value=_Constant(c), derivative=_Constant(0.0),
                            bounded=abs(c) <= 1.0, label=f"const:{c}")
    if callable(f):
        return RateFunction(value=f, label=getattr(f, "__name__", "f"))
    raise TypeError(f"cannot interpret {f!r} as a rate function")


def parse_rate(text: str) -> RateFunction:
    """Parse the little rate-function language used by the command line.

    Accepted forms: ``sin``, ``cos``, ``const:<c>``, ``poly:<c0>,<c1>,...``
    (coefficients in increasing degree).
    """
    text = text.strip()
    if text == "sin":
        return RateFunction(math.sin, math.cos, bounded=True, label="sin")
    if text == "cos":
        return RateFunction(math.cos, _neg_sin, bounded=True, label="cos")
    if text.startswith("const:"):
        try:
            c = float(text.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad constant in rate spec {text!r}") from None
        return RateFunction(_Constant(c), _Constant(0.0),
                            bounded=abs(c) <= 1.0, label=text)
    if text.startswith("poly:"):
        try:
            coeffs = [float(c) for c in text.split(":", 1)[1].split(",")]
        except ValueError:
            raise ValueError(f"bad coefficient list in rate spec {text!r}") from None
        if not coeffs:
            raise ValueError(f"empty coefficient list in rate spec {text!r}")
        dcoeffs = tuple(k * c for k, c in enumerate(coeffs))[1:] or (0.0,)
        return RateFunction(_Polynomial(tuple(coeffs)), _Polynomial(dcoeffs),
                            bounded=False, label=text)
    raise ValueError(f"unknown rate spec {text!r}; expected sin, cos, const:c or poly:c0,c1,...")


# ---------------------------------------------------------------------------
# truncated TASEP generator (non-normal comparison case)


@dataclass(frozen=True, eq=False)
class SparseGenerator:
    """Sparse generator over an enumerated state space.

    ``entries`` holds (row, col, rate) triples including the diagonal;
    ``states`` maps index -> state tuple.  Used for the truncated TASEP
    chain whose boundary columns deliberately leak probability (their sums
    are negative), which is what makes its pseudospectra interesting.
    """

    dim: int
    entries: tuple[tuple[int, int, float], ...]
    states: tuple[tuple[int, ...], ...]
    label: str = "tasep"

    def index_of(self, state: Sequence[int]) -> int:
        key = tuple(state)
        try:
            return self.states.index(key)
        except ValueError:
            raise KeyError(f"state {key} not in truncated space") from None

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        for r, c, v in self.entries:
            a[r, c] += v
        return a


def _partitions_upto(total_cap: int, max_parts: int,
                     cap: int | None = None) -> list[tuple[int, ...]]:
    """Weakly decreasing nonnegative tuples of fixed length ``max_parts``
    with entry sum <= ``total_cap``, ordered by (sum, lexicographic).

    Aborts as soon as more than ``cap`` tuples exist, so explosive spaces
    fail in bounded time instead of enumerating to completion.
    """
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], remaining: int, bound: int):
        if len(prefix) == max_parts:
            if cap is not None and len(out) >= cap:
                raise StateSpaceCapError(
                    f"state enumeration exceeds the cap of {cap}")
            out.append(tuple(prefix))
            return
        for part in range(0, min(bound, remaining) + 1):
            rec(prefix + [part], remaining - part, part)

    rec([], total_cap, total_cap)
    out.sort(key=lambda s: (sum(s), s))
    return out


def count_displacement_states(total_cap: int, max_parts: int) -> int:
    """Number of weakly decreasing tuples counted independently of the
    enumeration above (partition recurrence), used as a cross-check."""

    # p(m, k, b): partitions of m into at most k parts each <= b
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def p(m: int, k: int, b: int) -> int:
        if m == 0:
            return 1
        if k == 0 or b == 0:
            return 0
        return sum(p(m - first, k - 1, first) for first in range(1, min(m, b) + 1))

    return sum(p(m, max_parts, m) for m in range(total_cap + 1))


def build_tasep_generator(k: int, d: int, cap: int = 250_000) -> SparseGenerator:
    """Truncated TASEP with ``k`` particles started from the step configuration.

    States are displacement profiles ``d_1 >= ... >= d_k >= 0`` reachable by
    rightward unit hops with exclusion, truncated to total displacement
    <= ``d``.  Hops have unit rate; a hop of particle ``i`` is allowed when
    ``i = 1`` or ``d_i < d_{i-1}``.  The diagonal counts every allowed hop,
    including hops that would leave the truncated space, so boundary columns
    sum below zero.
    """
    if k < 1 or d < 0:
        raise ValueError("need k >= 1 particles and d >= 0 displacement cap")
    try:
        states = _partitions_upto(d, k, cap=cap)
    except StateSpaceCapError:
        raise StateSpaceCapError(
            f"truncated TASEP space for k={k}, d={d} exceeds the cap "
            f"of {cap} states"
        ) from None
    index = {s: i for i, s in enumerate(states)}
    entries: list[tuple[int, int, float]] = []
    for s in states:
        col = index[s]
        outflow = 0
        for i in range(k):
            if i > 0 and s[i] >= s[i - 1]:
                continue  # exclusion: particle i is blocked
            outflow += 1
            hopped = s[:i] + (s[i] + 1,) + s[i + 1:]
            if sum(hopped) <= d:
                entries.append((index[hopped], col, 1.0))
        if outflow:
            entries.append((col, col, -float(outflow)))
    entries.sort(key=lambda e: (e[0], e[1]))
    return SparseGenerator(dim=len(states), entries=tuple(entries),
                           states=tuple(states), label=f"tasep(k={k},d={d})")


def tasep_positions(state: Sequence[int]) -> tuple[int, ...]:
    """Lattice positions of a displacement profile (particle i starts at -i)."""
    return tuple(dsp - (i + 1) for i, dsp in enumerate(state))


# ---------------------------------------------------------------------------
# coordinate-format export


def write_coordinates(path, op, label: str | None = None) -> None:
    """Write nonzero entries as ``row col value`` lines.

    The single header line carries the dimension and a label:
    ``# dim <d> label <label>``.  Integer values print as integers.
    """
    if isinstance(op, TridiagonalGenerator):
        dim, name, coords = op.dim, op.label, list(op.coordinates())
    elif isinstance(op, SparseGenerator):
        dim, name, coords = op.dim, op.label, list(op.entries)
    else:
        dense = np.asarray(op)
        dim, name = dense.shape[0], "dense"
        coords = [(i, j, dense[i, j]) for i in range(dim) for j in range(dim)
                  if dense[i, j] != 0]
    name = label if label is not None else name
    with open(path, "w") as fh:
        fh.write(f"# dim {dim} label {name}\n")
        for r, c, v in coords:
            fv = float(v)
            text = str(int(fv)) if fv == int(fv) else repr(fv)
            fh.write(f"{r} {c} {text}\n")


def read_coordinates(path) -> tuple[np.ndarray, str]:
    """Read a coordinate file written by :func:`write_coordinates`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != "#" or header[1] != "dim":
            raise ValueError(f"{path}: missing coordinate header")
        dim = int(header[2])
        name = header[4]
        a = np.zeros((dim, dim))
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            r, c, v = line.split()
            a[int(r), int(c)] = float(v)
    return a, name


def write_tasep_states(path, gen: SparseGenerator) -> None:
    """Write the state table as CSV: ``index,positions`` with positions
    space-separated."""
    with open(path, "w") as fh:
        fh.write("index,positions\n")
        for i, s in enumerate(gen.states):
            pos = " ".join(str(p) for p in tasep_positions(s))
            fh.write(f"{i},{pos}\n")
