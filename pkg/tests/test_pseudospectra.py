import json
import math

import numpy as np
import pytest

from mecat.errors import ConvergenceError
from mecat.exactexp import eigenvector_a0, fast_z_apply
from mecat.generators import build_a0, build_a1
from mecat.pseudospectra import (
    PRESET_NAMES,
    SENTINEL_LOG10,
    contour_levels,
    eig_sensitivity_report,
    grid,
    preset,
    read_grid_csv,
    smin,
    write_contours_csv,
    write_grid_csv,
    write_report_json,
)


# ---------------------------------------------------------------------------
# pointwise evaluator


def test_scalar_case_is_plain_distance():
    a = np.array([[2.0]])
    assert smin(a, 3.0 + 4.0j) == pytest.approx(math.hypot(1.0, 4.0), rel=1e-14)


def test_methods_agree_on_a_generic_matrix():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    for z in (0.3 + 0.1j, -1.0, 2.0 - 0.5j):
        direct = smin(a, z)
        iterated = smin(a, z, method="inverse_iteration")
        assert iterated == pytest.approx(direct, rel=1e-8)


def test_normal_matrix_evaluates_to_spectral_distance():
    eigs = np.array([0.0, -2.0, -4.0, -6.0])
    a = np.diag(eigs)
    for z in (1.0 + 1.0j, -3.0, -5.0 + 0.25j):
        want = np.abs(z - eigs).min()
        assert smin(a, z) == pytest.approx(want, rel=1e-12)


def test_shifted_nilpotent_matrix_is_almost_singular():
    # every eigenvalue is 0, yet zI - A1 at |z| = 1 is within 1e-10 of
    # singular once n reaches 30: the resolvent grows like n!
    a1 = build_a1(30)
    for method in ("svd_direct", "inverse_iteration"):
        assert smin(a1, 1.0, method=method) <= 1e-10
    assert smin(build_a1(30), 0.0) <= 1e-12


def test_smin_never_exceeds_spectral_distance():
    # the resolvent norm dominates 1/dist(z, spectrum)
    a0 = build_a0(12)
    eigs = np.array([-2.0 * r for r in range(13)])
    for z in (1.0 + 2.0j, -7.3, -25.0 + 1.0j, 0.5j):
        assert smin(a0, z) <= np.abs(z - eigs).min() + 1e-12
    a1 = build_a1(12)
    for z in (0.5, 2.0 + 1.0j, -4.0):
        assert smin(a1, z) <= abs(z) + 1e-12


def test_inverse_iteration_reports_nonconvergence():
    a = build_a0(10)
    with pytest.raises(ConvergenceError):
        smin(a, -1.0 + 0.5j, method="inverse_iteration", max_iterations=1)


def test_unknown_method_is_rejected():
    with pytest.raises(ValueError):
        smin(np.eye(2), 0.0, method="qr")


# ---------------------------------------------------------------------------
# grids


def test_grid_matches_pointwise_values():
    a = build_a0(6)
    g = grid(a, (-14.0, 2.0), (-3.0, 3.0), 9, 7)
    assert g.values.shape == (7, 9)
    xs, ys = g.re_points(), g.im_points()
    i, j = 4, 2
    want = math.log10(smin(a, complex(xs[i], ys[j])))
    assert g.values[j, i] == pytest.approx(want, abs=1e-10)


def test_grid_node_fallback_keeps_the_sweep_alive():
    # a one-iteration cap fails at every node; the fallback must fill the
    # grid with SVD values instead of raising
    a = build_a0(8)
    box = ((-18.0, 2.0), (-2.0, 2.0))
    hard = grid(a, *box, 7, 5, method="inverse_iteration", max_iterations=1)
    easy = grid(a, *box, 7, 5, method="svd_direct")
    assert np.allclose(hard.values, easy.values, atol=1e-12)


def test_grid_threads_do_not_change_values():
    a = build_a1(10)
    box = ((-3.0, 3.0), (-2.0, 2.0))
    one = grid(a, *box, 8, 6, threads=1)
    many = grid(a, *box, 8, 6, threads=4)
    assert np.array_equal(one.values, many.values)


def test_grid_schur_reduction_agrees_with_direct_solves():
    a = build_a0(8)
    box = ((-18.0, 2.0), (-2.0, 2.0))
    plain = grid(a, *box, 7, 5, method="inverse_iteration")
    schur = grid(a, *box, 7, 5, method="inverse_iteration", use_schur=True)
    assert np.max(np.abs(plain.values - schur.values)) < 1e-7


def test_grid_marks_exactly_singular_nodes_with_the_sentinel():
    a = np.diag([0.0, 1.0])
    g = grid(a, (-1.0, 1.0), (-1.0, 1.0), 3, 3)
    # both eigenvalues fall on grid nodes
    assert g.values[1, 1] == SENTINEL_LOG10
    assert g.values[1, 2] == SENTINEL_LOG10
    finite = np.delete(g.values.ravel(), [4, 5])
    assert np.all(finite > SENTINEL_LOG10)


def test_sublevel_sets_nest_with_the_level():
    g = grid(build_a0(8), (-20.0, 4.0), (-6.0, 6.0), 25, 21)
    inner = g.values < -2.0
    outer = g.values < 0.0
    assert 0 < inner.sum() < outer.sum()
    assert np.all(outer[inner])


# ---------------------------------------------------------------------------
# contours


def _unit_disc_grid():
    a = np.array([[0.0]])
    return grid(a, (-2.0, 2.0), (-2.0, 2.0), 41, 41)


def test_contour_of_a_point_spectrum_is_a_circle():
    g = _unit_disc_grid()
    contours = contour_levels(g, [1.0])
    assert len(contours) == 1
    pts = contours[0].points
    radii = np.hypot(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(radii - 1.0)) < 0.02
    # closed: the chain returns to its starting point
    assert np.allclose(pts[0], pts[-1], atol=1e-9)


def test_contour_levels_nest_geometrically():
    g = _unit_disc_grid()
    outer, inner = contour_levels(g, [1.5, 0.5])
    r_outer = np.hypot(outer.points[:, 0], outer.points[:, 1])
    r_inner = np.hypot(inner.points[:, 0], inner.points[:, 1])
    assert r_inner.max() < r_outer.min()


def test_contour_level_crossing_nothing_is_empty():
    g = _unit_disc_grid()
    # every node is within distance 2*sqrt(2) of the origin
    assert contour_levels(g, [50.0]) == []


def test_contour_level_validation():
    g = _unit_disc_grid()
    with pytest.raises(ValueError):
        contour_levels(g, [0.5, 1.0])
    with pytest.raises(ValueError):
        contour_levels(g, [1.0, -0.5])


# ---------------------------------------------------------------------------
# eigenvalue sensitivity


def test_sensitivity_report_on_the_relaxation_generator():
    pairs = [(-2.0 * r, np.array(eigenvector_a0(2, r), dtype=float))
             for r in range(3)]
    rep = eig_sensitivity_report(build_a0(2), [0.0, -2.0, -4.0], pairs)
    assert rep.max_abs_error < 1e-12
    assert rep.max_imag < 1e-12
    assert rep.residual_of_exact < 1e-12
    assert rep.solver_error == ""


def test_sensitivity_report_exposes_nilpotent_breakdown():
    n = 30
    kernel = fast_z_apply(np.eye(n + 1, dtype=np.int64)[0]).astype(float)
    rep = eig_sensitivity_report(build_a1(n), [0.0] * (n + 1), [(0.0, kernel)])
    # the solver scatters the defective eigenvalue across the plane even
    # though the matrix annihilates the exact eigenvector to rounding
    assert rep.max_abs_error > 1.0
    assert rep.residual_of_exact < 1e-10


# ---------------------------------------------------------------------------
# files


def test_grid_csv_round_trip(tmp_path):
    g = grid(build_a0(4), (-9.0, 1.0), (-2.0, 2.0), 6, 5, matrix_label="relax4")
    out = tmp_path / "grid.csv"
    write_grid_csv(out, g)
    back = read_grid_csv(out)
    assert back.re_min == g.re_min and back.re_max == g.re_max
    assert back.im_min == g.im_min and back.im_max == g.im_max
    assert back.n_re == g.n_re and back.n_im == g.n_im
    assert np.array_equal(back.values, g.values)


def test_grid_csv_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("state,count\n0,3\n")
    with pytest.raises(ValueError):
        read_grid_csv(bad)


def test_contours_csv_format(tmp_path):
    contours = contour_levels(_unit_disc_grid(), [1.0])
    out = tmp_path / "contours.csv"
    write_contours_csv(out, contours)
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "level,polyline_id,re,im"
    level, pid, re, im = rows[1].split(",")
    assert float(level) == 1.0
    assert int(pid) == 0
    float(re), float(im)


def test_report_json_has_exactly_the_contract_fields(tmp_path):
    rep = eig_sensitivity_report(build_a0(2), [0.0, -2.0, -4.0])
    out = tmp_path / "report.json"
    write_report_json(out, rep)
    doc = json.loads(out.read_text())
    assert set(doc) == {"exact_spectrum", "computed_spectrum",
                        "max_abs_error", "max_imag", "residual_of_exact"}
    assert doc["exact_spectrum"] == [-4.0, -2.0, 0.0]


# ---------------------------------------------------------------------------
# presets


def test_presets_build_their_documented_windows():
    almond = preset("almond")
    assert almond.matrix.shape == (101, 101)
    assert almond.re_range == pytest.approx((-220.0, 20.0))
    assert almond.im_range == pytest.approx((-60.0, 60.0))
    track = preset("track")
    assert track.re_range == pytest.approx((-120.0, 120.0))
    assert track.im_range == pytest.approx((-70.0, 70.0))
    seedpod = preset("seedpod")
    assert seedpod.matrix.shape == (102, 102)
    for p in (almond, track, seedpod):
        assert p.name in PRESET_NAMES
        assert all(a > b for a, b in zip(p.levels, p.levels[1:]))


def test_unknown_preset_is_rejected():
    with pytest.raises(ValueError):
        preset("walnut")
