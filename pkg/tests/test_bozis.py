import math

import numpy as np
import pytest

from orbinv import bozis, config, families
from orbinv.bozis import Tolerances

SHO = families.user_expression("x^2+b*y^2")
LINES = families.user_expression("y-b*x")
RELABELED = families.user_expression("(x^2+y^2)*b")
PRECESSING = families.precessing_cartesian(0.3, 0.2)
SMALL_GRID = bozis.polar_grid(0.5, 2.0, 5, 0.2, 1.37, 6)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# fields ------------------------------------------------------------------------


def test_sho_point_fields():
    fl = bozis.compute_fields(SHO, 1.0, 2.0, 3.0)
    assert fl.gamma == pytest.approx(6.0, rel=1e-14)
    assert fl.Gamma == pytest.approx(-39.0, rel=1e-14)
    assert fl.lam == pytest.approx(3.0, rel=1e-14)
    assert fl.mu == pytest.approx(-1.5, rel=1e-14)
    assert fl.lam_b == pytest.approx(0.0, abs=1e-13)
    assert fl.mu_b == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("x,y,b", [(0.7, -1.1, 0.5), (1.5, 0.4, 2.5), (-0.9, 1.3, 1.2)])
def test_sho_lambda_mu_are_b_free(x, y, b):
    fl = bozis.compute_fields(SHO, x, y, b, order=4)
    assert fl.lam == pytest.approx(3.0 / x, rel=1e-13)
    assert fl.mu == pytest.approx(-3.0 / y, rel=1e-13)
    assert abs(fl.lam_b) <= 1e-12 * abs(fl.lam)
    assert abs(fl.mu_b) <= 1e-12 * abs(fl.mu)


def test_straight_lines_raise():
    with pytest.raises(bozis.GammaCapZero):
        bozis.compute_fields(LINES, 1.0, 2.0, 0.5)


def test_vertical_tangent_raises():
    with pytest.raises(bozis.FxNearZero):
        bozis.compute_fields(SHO, 0.0, 1.0, 2.0)


def test_zero_slope_raises():
    with pytest.raises(bozis.GammaZero):
        bozis.compute_fields(SHO, 1.0, 0.0, 2.0)


def test_gamma_b_zero_raises():
    with pytest.raises(bozis.GammaBZero):
        bozis.compute_fields(RELABELED, 1.0, 0.5, 2.0)


@pytest.mark.parametrize("th", [0.4, 1.1, 2.3, 3.6, 5.2])
@pytest.mark.parametrize("b", [1.1, 2.0])
def test_internal_identities(th, b):
    fl = bozis.compute_fields(PRECESSING, 1.2 * math.cos(th), 1.2 * math.sin(th), b)
    ident = fl.mu - fl.lam * fl.gamma - 3.0 * fl.Gamma / fl.gamma
    assert abs(ident) <= 1e-10 * (abs(fl.mu) + abs(fl.lam * fl.gamma) + abs(3.0 * fl.Gamma / fl.gamma))
    assert fl.D == fl.L * fl.M_b - fl.M * fl.L_b
    assert fl.Gamma == pytest.approx(fl.gamma * fl.gamma_x - fl.gamma_y, rel=1e-12)
    assert fl.rho == pytest.approx(-fl.L_b / fl.M_b, rel=1e-14)


def test_homogeneous_sho_lambda():
    fl = bozis.compute_fields_homogeneous(SHO, 1.0, 2.0, 3.0)
    assert fl.lam == pytest.approx(3.0, rel=1e-13)


def test_not_homogeneous():
    with pytest.raises(bozis.NotHomogeneous):
        bozis.compute_fields_homogeneous(families.user_expression("x+b*y^2"), 1.0, 2.0, 3.0)


SHARED = ("gamma", "Gamma", "lam", "mu", "lam_b", "mu_b", "L", "M", "L_b", "M_b")


@pytest.mark.parametrize("spec", [PRECESSING, families.precessing_cartesian(0.6, -0.5), SHO],
                         ids=["e0.3", "e0.6", "sho"])
def test_dual_path_agreement(spec):
    for x, y in bozis.polar_grid(0.6, 2.5, 4, 0.1, 2 * math.pi - 0.1, 10):
        for b in (0.8, 1.5, 2.2):
            try:
                a = bozis.compute_fields(spec, x, y, b)
            except bozis.SingularPoint:
                continue
            h = bozis.compute_fields_homogeneous(spec, x, y, b)
            for name in SHARED:
                va, vh = getattr(a, name), getattr(h, name)
                if not (math.isfinite(va) and math.isfinite(vh)):
                    continue
                # b-derivatives may vanish identically: compare on their natural scale
                natural = abs(a.lam) + abs(a.mu) if name not in ("gamma", "Gamma") else 0.0
                scale = max(abs(va), natural)
                assert abs(va - vh) <= 1e-9 * scale, (name, x, y, b, va, vh)


@pytest.mark.parametrize("delta", [0.3, -0.7, 1.9])
def test_rotational_sanity(delta):
    e, th0, b = 0.3, 0.2, 1.5
    base, rotated = families.precessing_cartesian(e, th0), families.precessing_cartesian(e, th0 + delta)
    c, s = math.cos(delta), math.sin(delta)
    for th in np.linspace(2.2, 3.9, 7):  # theta and theta + delta stay inside (0, 2 pi)
        x, y = 1.1 * math.cos(th), 1.1 * math.sin(th)
        g = bozis.compute_fields(base, x, y, b, order=2).gamma
        g_rot = bozis.compute_fields(rotated, c * x - s * y, s * x + c * y, b, order=2).gamma
        assert math.tan(math.atan(g_rot) - delta) == pytest.approx(g, rel=1e-9)


# classification -------------------------------------------------------------------


def test_sho_classifies_b_independent():
    v = bozis.classify(SHO, config.grid_from(config.load(preset="sho")), [0.5, 1.5, 2.0, 3.0])
    assert v.branch == bozis.B_INDEPENDENT


def test_relabeled_family_is_degenerate():
    v = bozis.classify(RELABELED, SMALL_GRID, [0.5, 1.5, 2.5])
    assert v.branch == bozis.DEGENERATE


def test_circle_is_degenerate():
    v = bozis.classify(families.precessing_cartesian(0.0, 0.0), SMALL_GRID, [1.1, 1.5, 2.0, 2.5])
    assert v.branch == bozis.DEGENERATE


def test_lines_have_too_many_singular_points():
    with pytest.raises(bozis.TooManySingularPoints):
        bozis.classify(LINES, SMALL_GRID, [0.5, 1.0, 2.0])


def test_empty_grid():
    with pytest.raises(bozis.EmptyGrid):
        bozis.classify(SHO, [], [1.0, 2.0, 3.0])


def test_order_floor():
    with pytest.raises(ValueError):
        bozis.classify(SHO, SMALL_GRID, [1.0, 2.0, 3.0], order=bozis.PIPELINE_ORDER - 1)


def test_precessing_small_grid_no_force():
    cfg = config.load(preset="precessing")
    cfg["grid"].update(n_r=4, n_theta=8)
    v = bozis.classify(PRECESSING, config.grid_from(cfg, PRECESSING), cfg["b_samples"])
    assert v.branch == bozis.NO_FORCE
    for name in ("L_b", "M_b", "LM_b", "ratio_b"):
        assert v.evidence[name].norm_min >= 1e-6
    assert v.census["survival"] >= 0.8


def test_verdict_serializes():
    v = bozis.classify(SHO, SMALL_GRID, [0.5, 1.5, 2.5])
    d = v.as_dict()
    assert d["branch"] == bozis.B_INDEPENDENT
    assert set(d["evidence"]) >= {"gamma_b", "lambda_b", "mu_b"}
    assert d["census"]["total"] == len(SMALL_GRID) * 3


def test_evidence_states():
    tols = Tolerances()
    ev = bozis._evidence("q", [1e-12, 2e-12], [1.0, 1.0])
    assert ev.state(tols) == "zero"
    ev = bozis._evidence("q", [0.5, 2.0], [1.0, 1.0])
    assert ev.state(tols) == "nonzero"
    ev = bozis._evidence("q", [1e-7, 2.0], [1.0, 1.0])
    assert ev.state(tols) == "marginal" and ev.fails_decisively(1e-6)


def test_solve_force_requires_solvable():
    v = bozis.classify(SHO, SMALL_GRID, [0.5, 1.5, 2.5])
    with pytest.raises(bozis.NotSolvable):
        bozis.solve_force(SHO, v, (1.0, 1.0))


# forces --------------------------------------------------------------------------


def test_manufactured_exact_field():
    f = bozis.log_gradient_force(lambda x, y: 1 / x, lambda x, y: 1 / y, lambda x, y: 1.0, (1.0, 1.0))
    assert f(2.0, 3.0)[0] == pytest.approx(6.0, rel=1e-12)
    f2 = bozis.log_gradient_force(lambda x, y: 1 / x, lambda x, y: 1 / y, lambda x, y: 1.0, (1.0, 1.0), X0=2.5)
    assert f2(2.0, 3.0)[0] == pytest.approx(15.0, rel=1e-12)


def test_manufactured_path_independence():
    args = (lambda x, y: 1 / x, lambda x, y: 1 / y, lambda x, y: 1.0, (1.0, 1.0))
    via_x = bozis.log_gradient_force(*args, path="xy")(2.0, 3.0)[0]
    via_y = bozis.log_gradient_force(*args, path="yx")(2.0, 3.0)[0]
    assert abs(via_x - via_y) <= 1e-9


def test_harmonic_potential():
    k, anchor = 2.0, (0.5, -0.3)
    f = bozis.expression_force("-2*x", "-2*y")
    V, _ = bozis.reconstruct_potential(f, anchor, SMALL_GRID)
    for x, y in [(1.0, 2.0), (-0.7, 0.4), (0.5, -0.3)]:
        want = k * (x * x + y * y) / 2 - k * (anchor[0] ** 2 + anchor[1] ** 2) / 2
        assert V(x, y) == pytest.approx(want, abs=1e-10)


def test_newton_potential():
    f = bozis.expression_force("-x/(x^2+y^2)^2*sqrt(x^2+y^2)", "-y/(x^2+y^2)^2*sqrt(x^2+y^2)")
    V, _ = bozis.reconstruct_potential(f, (1.0, 0.0), SMALL_GRID)
    for x, y in [(2.0, 0.5), (0.6, 1.2), (1.0, 1.0)]:
        assert V(x, y) == pytest.approx(-1.0 / math.hypot(x, y) + 1.0, abs=1e-10)


def test_rotational_field_not_conservative():
    with pytest.raises(bozis.NotConservative):
        bozis.reconstruct_potential(bozis.expression_force("-y", "x"), (1.0, 1.0), SMALL_GRID)


def test_sho_force_residual_at_point():
    fl = bozis.compute_fields(SHO, 1.0, 2.0, 3.0, order=3)
    R, _ = bozis.force_pde_residual(fl, bozis.harmonic_force().jacobian(1.0, 2.0))
    assert R == 0.0


def test_newton_incompatible_with_precessing_family():
    grid = config.grid_from(config.load(preset="precessing"), PRECESSING)[::7]
    rep = bozis.check_force_against_family(PRECESSING, bozis.newton_force(), grid, [1.5])
    assert rep.max_normalized > 1e-2


def test_finite_difference_jacobian_matches_jets():
    f = bozis.newton_force()
    bare = bozis.ForceField(f.unit)
    for x, y in [(0.8, 0.3), (-1.2, 0.9)]:
        np.testing.assert_allclose(bare.jacobian(x, y), f.jacobian(x, y), rtol=1e-9, atol=1e-12)


def test_scaled_force_exact():
    f = bozis.newton_force(1.0)
    g = f.scaled(2.0)
    for x, y in SMALL_GRID:
        assert g(x, y) == tuple(2.0 * v for v in f(x, y))


# derived Kepler force ------------------------------------------------------------------


@pytest.fixture(scope="module")
def kepler():
    cfg = config.load(preset="kepler")
    spec = config.family_from(cfg)
    grid = config.grid_from(cfg, spec)
    verdict = bozis.classify(spec, grid, cfg["b_samples"], config.tolerances_from(cfg))
    force = bozis.solve_force(spec, verdict, tuple(cfg["derive"]["anchor"]), grid=grid[::3])
    return spec, grid, verdict, force


def test_kepler_solvable(kepler):
    _, _, verdict, force = kepler
    assert verdict.branch == bozis.SOLVABLE
    assert force.diagnostics["pq_spread"] <= 1e-7
    assert force.diagnostics["pq_integrability"] <= 1e-7


def test_kepler_force_is_newtonian(kepler):
    _, grid, _, force = kepler
    x0, y0 = force.anchor
    gauge = force(x0, y0)[0] / bozis.newton_force()(x0, y0)[0]
    worst = 0.0
    for x, y in grid[::2]:
        X, Y = force(x, y)
        nx, ny = bozis.newton_force(gauge)(x, y)
        worst = max(worst, math.hypot(X - nx, Y - ny) / math.hypot(nx, ny))
    assert worst < 1e-6


def test_kepler_force_follows_rho(kepler):
    spec, grid, verdict, force = kepler
    b_ref = force.diagnostics["b_ref"]
    for x, y in grid[::5]:
        fl = bozis._evaluate(spec, x, y, b_ref, bozis.PIPELINE_ORDER, strict=False)
        if fl.status != "ok":
            continue
        X, Y = force(x, y)
        assert abs(Y - fl.rho * X) <= 1e-10 * max(abs(Y), abs(fl.rho * X))


def test_kepler_force_satisfies_family(kepler):
    spec, grid, verdict, force = kepler
    rep = bozis.check_force_against_family(spec, force, grid[::2], verdict.b_samples)
    assert rep.evaluated > 0
    assert rep.max_normalized < 1e-7


def test_kepler_force_gauge(kepler):
    spec, grid, verdict, force = kepler
    double = bozis.solve_force(spec, verdict, force.anchor, X0=2.0, grid=grid[::3])
    for x, y in grid[::4]:
        X1, Y1 = force(x, y)
        X2, Y2 = double(x, y)
        assert X2 == 2.0 * X1 and Y2 == 2.0 * Y1


def test_low_order_leaves_fields_nan():
    fl = bozis.compute_fields(PRECESSING, 1.0, 0.8, 1.5, order=3)
    assert math.isfinite(fl.lam) and math.isnan(fl.lam_b) and math.isnan(fl.P)
