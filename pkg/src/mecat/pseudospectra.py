"""Minimum-singular-value landscapes over complex-plane grids.

The quantity of interest is ``s_min(zI - A)``: the set where it drops
below ``eps`` is the ``eps``-pseudospectrum, and for the non-normal
generators here that set extends far beyond the spectrum itself.  Two
independent evaluators are provided:

* ``svd_direct``: dense singular values of ``zI - A`` (the reference);
* ``inverse_iteration``: power iteration on ``(zI-A)^{-1}(zI-A)^{-H}``
  through one LU (or triangular, after a one-time Schur reduction of A)
  factorization per node, stopping when the Rayleigh quotient settles.

Values are reported as log10; anything below 1e-300 clamps to the
sentinel -300.0, since the resolvent of a nilpotent matrix genuinely
underflows near its spectrum.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError
from .generators import build_a0, build_a1, build_tasep_generator

__all__ = [
    "SENTINEL_LOG10",
    "PseudospectrumGrid",
    "Contour",
    "EigSensitivityReport",
    "smin",
    "grid",
    "contour_levels",
    "eig_sensitivity_report",
    "write_grid_csv",
    "read_grid_csv",
    "write_contours_csv",
    "write_report_json",
    "preset",
    "PRESET_NAMES",
]

SENTINEL_LOG10 = -300.0

_START_SEED = 161803398


def _as_dense(a) -> np.ndarray:
    if hasattr(a, "to_dense"):
        a = a.to_dense()
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(a.real)) or (np.iscomplexobj(a) and not np.all(np.isfinite(a.imag))):
        raise ValueError("matrix entries must be finite")
    return a.astype(complex)


def _start_vector(dim: int) -> np.ndarray:
    rng = np.random.default_rng(_START_SEED)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _rayleigh_iterate(solve_adj, solve_fwd, v0, tol: float, cap: int) -> float:
    """Power iteration on M^{-1} M^{-H}; returns s_min = 1/sqrt(rho)."""
    v = v0
    s_prev = None
    for _ in range(cap):
        y = solve_adj(v)
        if not np.all(np.isfinite(y)):
            return 0.0
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return np.inf  # M^{-H} annihilated v: retry not meaningful
        s_est = 1.0 / ny
        w = solve_fwd(y)
        if not np.all(np.isfinite(w)):
            return 0.0
        nw = np.linalg.norm(w)
        if nw == 0.0 or not np.isfinite(nw):
            return 0.0
        v = w / nw
        if s_prev is not None and abs(s_est - s_prev) <= tol * max(s_est, 1e-300):
            return s_est
        s_prev = s_est
    raise ConvergenceError(
        f"Rayleigh quotient did not settle to {tol} within {cap} iterations"
    )


def _smin_inverse_dense(m: np.ndarray, tol: float, cap: int, v0) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # exact singularity surfaces as inf below
        try:
            lu, piv = sla.lu_factor(m, check_finite=False)
        except sla.LinAlgError:
            return 0.0
        with np.errstate(all="ignore"):
            return _rayleigh_iterate(
                lambda b: sla.lu_solve((lu, piv), b, trans=2, check_finite=False),
                lambda b: sla.lu_solve((lu, piv), b, trans=0, check_finite=False),
                v0, tol, cap)


def _smin_inverse_triangular(m: np.ndarray, tol: float, cap: int, v0) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with np.errstate(all="ignore"):
            try:
                return _rayleigh_iterate(
                    lambda b: sla.solve_triangular(m, b, trans="C", check_finite=False),
                    lambda b: sla.solve_triangular(m, b, trans="N", check_finite=False),
                    v0, tol, cap)
            except sla.LinAlgError:  # exactly zero diagonal entry
                return 0.0


def smin(a, z: complex, method: str = "svd_direct", tol: float = 1e-10,
         max_iterations: int = 400) -> float:
    """Smallest singular value of ``zI - A``.

    ``inverse_iteration`` raises ConvergenceError past the iteration cap
    so callers can fall back to ``svd_direct``.
    """
    a = _as_dense(a)
    m = z * np.eye(a.shape[0]) - a
    if method == "svd_direct":
        return float(sla.svdvals(m)[-1])
    if method == "inverse_iteration":
        return _smin_inverse_dense(m, tol, max_iterations, _start_vector(a.shape[0]))
    raise ValueError(f"unknown smin method {method!r}")


@dataclass(frozen=True, eq=False)
class PseudospectrumGrid:
    """Uniform complex-plane sampling of log10 s_min(zI - A)."""

    re_min: float
    re_max: float
    n_re: int
    im_min: float
    im_max: float
    n_im: int
    values: np.ndarray
    matrix_label: str = ""

    def re_points(self) -> np.ndarray:
        return np.linspace(self.re_min, self.re_max, self.n_re)

    def im_points(self) -> np.ndarray:
        return np.linspace(self.im_min, self.im_max, self.n_im)


def _log_clamp(s: float) -> float:
    if not np.isfinite(s) or s <= 1e-300:
        return SENTINEL_LOG10
    v = np.log10(s)
    return SENTINEL_LOG10 if v < SENTINEL_LOG10 else float(v)


def grid(a, re_range, im_range, n_re: int, n_im: int,
         method: str = "svd_direct", use_schur: bool = False,
         threads: int | None = None, tol: float = 1e-10,
         max_iterations: int = 400, matrix_label: str = "") -> PseudospectrumGrid:
    """Evaluate smin over the box, row-parallel, never aborting on a node.

    A node where inverse iteration hits its cap silently falls back to the
    SVD; a node where both evaluators fail records the underflow sentinel.
    With ``use_schur`` the matrix is reduced once to triangular form and
    every node costs two triangular solves per iteration instead of an LU.
    """
    if n_re < 2 or n_im < 2:
        raise ValueError("grid resolutions must be at least 2")
    a = _as_dense(a)
    dim = a.shape[0]
    re_lo, re_hi = map(float, re_range)
    im_lo, im_hi = map(float, im_range)
    if not (re_lo < re_hi and im_lo < im_hi):
        raise ValueError("ranges must be nondegenerate intervals")
    work = sla.schur(a, output="complex")[0] if use_schur else a
    eye = np.eye(dim)
    v0 = _start_vector(dim)
    xs = np.linspace(re_lo, re_hi, n_re)
    ys = np.linspace(im_lo, im_hi, n_im)

    def node(z: complex) -> float:
        m = z * eye - work
        try:
            if method == "svd_direct":
                s = float(sla.svdvals(m)[-1])
            elif method == "inverse_iteration":
                try:
                    if use_schur:
                        s = _smin_inverse_triangular(m, tol, max_iterations, v0)
                    else:
                        s = _smin_inverse_dense(m, tol, max_iterations, v0)
                except ConvergenceError:
                    s = float(sla.svdvals(m)[-1])
            else:
                raise ValueError(f"unknown smin method {method!r}")
        except sla.LinAlgError:
            return SENTINEL_LOG10
        return _log_clamp(s)

    def row(j: int) -> np.ndarray:
        y = ys[j]
        return np.array([node(complex(x, y)) for x in xs])

    values = np.empty((n_im, n_re))
    if threads is None or threads <= 1:
        for j in range(n_im):
            values[j] = row(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for j, r in enumerate(pool.map(row, range(n_im))):
                values[j] = r
    return PseudospectrumGrid(re_min=re_lo, re_max=re_hi, n_re=n_re,
                              im_min=im_lo, im_max=im_hi, n_im=n_im,
                              values=values, matrix_label=matrix_label)


# ---------------------------------------------------------------------------
# contour extraction (marching squares with linear interpolation)


@dataclass(frozen=True, eq=False)
class Contour:
    level: float
    polyline_id: int
    points: np.ndarray  # (k, 2) columns re, im


def _cell_segments(x0, x1, y0, y1, v, level):
    """Crossing segments of one cell; v = (v00, v10, v11, v01) ccw corners."""
    inside = [w < level for w in v]
    case = inside[0] | inside[1] << 1 | inside[2] << 2 | inside[3] << 3
    if case in (0, 15):
        return []

    def lerp(pa, pb, va, vb):
        t = (level - va) / (vb - va)
        return (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))

    c00, c10, c11, c01 = (x0, y0), (x1, y0), (x1, y1), (x0, y1)
    bottom = lambda: lerp(c00, c10, v[0], v[1])
    right = lambda: lerp(c10, c11, v[1], v[2])
    top = lambda: lerp(c01, c11, v[3], v[2])
    left = lambda: lerp(c00, c01, v[0], v[3])
    table = {
        1: [(left, bottom)], 2: [(bottom, right)], 3: [(left, right)],
        4: [(right, top)], 6: [(bottom, top)], 7: [(left, top)],
        8: [(top, left)], 9: [(top, bottom)], 11: [(top, right)],
        12: [(right, left)], 13: [(bottom, right)], 14: [(left, bottom)],
    }
    if case in (5, 10):
        # saddle: split by the cell-centre value
        centre_inside = (v[0] + v[1] + v[2] + v[3]) / 4.0 < level
        if case == 5:
            pairs = [(left, top), (right, bottom)] if centre_inside \
                else [(left, bottom), (right, top)]
        else:
            pairs = [(bottom, left), (top, right)] if centre_inside \
                else [(bottom, right), (top, left)]
    else:
        pairs = table[case]
    return [(pa(), pb()) for pa, pb in pairs]


def _join_segments(segments, scale):
    """Chain raw segments into polylines by matching endpoints."""
    def key(p):
        return (round(p[0] / scale), round(p[1] / scale))

    unused = list(range(len(segments)))
    by_end: dict = {}
    for i, (a, b) in enumerate(segments):
        by_end.setdefault(key(a), []).append(i)
        by_end.setdefault(key(b), []).append(i)

    def take_neighbor(p, skip):
        for i in by_end.get(key(p), []):
            if i != skip and i in remaining:
                return i
        return None

    remaining = set(unused)
    polylines = []
    while remaining:
        i0 = min(remaining)
        remaining.discard(i0)
        a, b = segments[i0]
        chain = [a, b]
        # extend forward from b, then backward from a
        prev = i0
        while True:
            nxt = take_neighbor(chain[-1], prev)
            if nxt is None:
                break
            remaining.discard(nxt)
            pa, pb = segments[nxt]
            chain.append(pb if key(pa) == key(chain[-1]) else pa)
            prev = nxt
        prev = i0
        while True:
            nxt = take_neighbor(chain[0], prev)
            if nxt is None:
                break
            remaining.discard(nxt)
            pa, pb = segments[nxt]
            chain.insert(0, pb if key(pa) == key(chain[0]) else pa)
            prev = nxt
        polylines.append(np.array(chain))
    return polylines


def contour_levels(g: PseudospectrumGrid, levels) -> list[Contour]:
    """Marching-squares polylines of ``s_min = eps`` for each eps level.

    Levels must be sorted descending; a level crossing nothing simply
    contributes no polylines.
    """
    levels = [float(e) for e in levels]
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be sorted in descending order")
    if any(e <= 0 for e in levels):
        raise ValueError("levels are eps values and must be positive")
    xs, ys, v = g.re_points(), g.im_points(), g.values
    scale = 1e-9 * max(g.re_max - g.re_min, g.im_max - g.im_min)
    out = []
    for eps in levels:
        logl = np.log10(eps)
        segments = []
        for j in range(g.n_im - 1):
            for i in range(g.n_re - 1):
                corners = (v[j, i], v[j, i + 1], v[j + 1, i + 1], v[j + 1, i])
                if min(corners) < logl <= max(corners):
                    for a, b in _cell_segments(xs[i], xs[i + 1], ys[j], ys[j + 1],
                                               corners, logl):
                        # crossings exactly on a grid node degenerate to points
                        if max(abs(a[0] - b[0]), abs(a[1] - b[1])) > scale:
                            segments.append((a, b))
        for pid, line in enumerate(_join_segments(segments, scale)):
            out.append(Contour(level=eps, polyline_id=pid, points=line))
    return out


# ---------------------------------------------------------------------------
# eigenvalue sensitivity report


@dataclass(frozen=True, eq=False)
class EigSensitivityReport:
    """Floating eigensolver output against the known exact spectrum."""

    exact_spectrum: tuple
    computed_spectrum: tuple
    max_abs_error: float
    max_imag: float
    residual_of_exact: float
    solver_error: str = ""


def eig_sensitivity_report(a, exact_spectrum, exact_pairs=()) -> EigSensitivityReport:
    """Compare dense eigensolver output to the exact spectrum.

    Matching is by sorted real part (the exact spectra here are real);
    ``exact_pairs`` are (eigenvalue, eigenvector) tuples whose residual
    ``norm(A v - lam v)/norm(v)`` is evaluated in floating point.
    """
    a = _as_dense(a)
    exact = tuple(sorted(float(x) for x in exact_spectrum))
    if len(exact) != a.shape[0]:
        raise ValueError("exact spectrum length must match the matrix dimension")
    solver_error = ""
    try:
        computed = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        solver_error = str(exc)
        computed = np.array([], dtype=complex)
    if computed.size:
        order = np.lexsort((computed.imag, computed.real))
        computed = computed[order]
        max_abs_error = float(np.max(np.abs(computed - np.asarray(exact))))
        max_imag = float(np.max(np.abs(computed.imag)))
    else:
        max_abs_error = float("inf")
        max_imag = float("inf")
    residual = 0.0
    for lam, vec in exact_pairs:
        vec = np.asarray(vec, dtype=complex)
        r = np.linalg.norm(a @ vec - complex(lam) * vec) / np.linalg.norm(vec)
        residual = max(residual, float(r))
    return EigSensitivityReport(
        exact_spectrum=exact,
        computed_spectrum=tuple(complex(c) for c in computed),
        max_abs_error=max_abs_error,
        max_imag=max_imag,
        residual_of_exact=residual,
        solver_error=solver_error,
    )


# ---------------------------------------------------------------------------
# file formats


def write_grid_csv(path, g: PseudospectrumGrid) -> None:
    with open(path, "w") as fh:
        fh.write(f"# re_min {g.re_min!r} re_max {g.re_max!r} n_re {g.n_re}\n")
        fh.write(f"# im_min {g.im_min!r} im_max {g.im_max!r} n_im {g.n_im}\n")
        for j in range(g.n_im):
            fh.write(",".join(repr(float(x)) for x in g.values[j]) + "\n")


def read_grid_csv(path) -> PseudospectrumGrid:
    with open(path) as fh:
        h1 = fh.readline().split()
        h2 = fh.readline().split()
        if h1[:2] != ["#", "re_min"] or h2[:2] != ["#", "im_min"]:
            raise ValueError(f"{path} is not a pseudospectrum grid file")
        re_min, re_max, n_re = float(h1[2]), float(h1[4]), int(h1[6])
        im_min, im_max, n_im = float(h2[2]), float(h2[4]), int(h2[6])
        values = np.array([[float(x) for x in fh.readline().split(",")]
                           for _ in range(n_im)])
    if values.shape != (n_im, n_re):
        raise ValueError(f"{path}: grid shape disagrees with its header")
    return PseudospectrumGrid(re_min=re_min, re_max=re_max, n_re=n_re,
                              im_min=im_min, im_max=im_max, n_im=n_im,
                              values=values)


def write_contours_csv(path, contours) -> None:
    with open(path, "w") as fh:
        fh.write("level,polyline_id,re,im\n")
        for c in contours:
            for re, im in c.points:
                fh.write(f"{c.level!r},{c.polyline_id},{float(re)!r},{float(im)!r}\n")


def write_report_json(path, report: EigSensitivityReport) -> None:
    doc = {
        "exact_spectrum": list(report.exact_spectrum),
        "computed_spectrum": [[c.real, c.imag] for c in report.computed_spectrum],
        "max_abs_error": report.max_abs_error,
        "max_imag": report.max_imag,
        "residual_of_exact": report.residual_of_exact,
    }
    if report.solver_error:
        doc["solver_error"] = report.solver_error
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# figure presets


@dataclass(frozen=True, eq=False)
class Preset:
    name: str
    matrix: np.ndarray
    re_range: tuple[float, float]
    im_range: tuple[float, float]
    levels: tuple[float, ...]
    matrix_label: str


PRESET_NAMES = ("almond", "track", "seedpod")


def preset(name: str, n: int = 100) -> Preset:
    """Desk-scale boxes for the three landscape figures.

    ``almond``: the relaxation generator, whose pseudospectral lobes bulge
    around the real segment of eigenvalues.  ``track``: the nilpotent
    drive matrix, whose level sets form a stadium around the origin.
    ``seedpod``: a truncated three-particle exclusion generator.
    """
    if name == "almond":
        return Preset(name, build_a0(n).to_dense(float),
                      (-2.2 * n, 0.2 * n), (-0.6 * n, 0.6 * n),
                      (1e0, 1e-2, 1e-4, 1e-6, 1e-8), f"a0(n={n})")
    if name == "track":
        return Preset(name, build_a1(n).to_dense(float),
                      (-1.2 * n, 1.2 * n), (-0.7 * n, 0.7 * n),
                      (1e1, 1e0, 1e-1, 1e-2, 1e-4), f"a1(n={n})")
    if name == "seedpod":
        g = build_tasep_generator(3, 12)
        return Preset(name, g.to_dense(), (-8.0, 2.0), (-4.0, 4.0),
                      (1e0, 1e-1, 1e-2, 1e-3, 1e-4), g.label)
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
