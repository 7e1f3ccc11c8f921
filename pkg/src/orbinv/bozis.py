"""Inverse problem pipeline: slope-function fields, compatibility verdicts, forces.

For a family ``f(x, y, b) = c`` every compatible planar force ``(X, Y)``
satisfies the linear first-order PDE

    -X_x + X_y / gamma - gamma Y_x + Y_y = lambda X + mu Y

with ``gamma = f_y / f_x``, ``Gamma = gamma gamma_x - gamma_y``,
``lambda = (-Gamma_x + Gamma_y / gamma) / Gamma`` and
``mu = lambda gamma + 3 Gamma / gamma``. Requiring ``X`` and ``Y`` to be free of
``b`` brings in

    L = -gamma^2 lambda_b / ((1 + gamma^2) gamma_b)
    M = -gamma^2 mu_b / ((1 + gamma^2) gamma_b)

and, when ``L_b``, ``M_b`` and ``(L/M)_b`` do not vanish, the force is unique
up to scale provided ``(L_b/M_b)_b = 0`` and
``((L + M rho - rho_x) / rho)_y = (L + M rho)_x`` with ``rho = -L_b / M_b``.
It is then obtained from

    X_x = (-D / L_b - rho_x / rho) X,   X_y = (D / M_b) X,   Y = rho X,

``D = L M_b - M L_b``.

Every quantity is computed from one jet of ``f`` per point, so all partials
come from a single evaluation.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import exprlang, jets
from .families import FamilySpec, family_fraction
from .jets import Jet

PIPELINE_ORDER = 7
PQ_ORDER = 6
REL_FLOOR = 1e-10


class SingularPoint(ArithmeticError):
    """A division in the field formulas hit (numerically) zero."""

    stage = "singular"

    def __init__(self, message, point=None):
        super().__init__(message if point is None else f"{message} at {point}")
        self.point = point


class FxNearZero(SingularPoint):
    stage = "fx_zero"


class GammaZero(SingularPoint):
    stage = "gamma_zero"


class GammaCapZero(SingularPoint):
    stage = "Gamma_zero"


class GammaBZero(SingularPoint):
    stage = "gamma_b_zero"


class MZero(SingularPoint):
    stage = "M_zero"


class MbZero(SingularPoint):
    stage = "M_b_zero"


class LbZero(SingularPoint):
    stage = "L_b_zero"


class NotHomogeneous(ValueError):
    pass


class ClassificationError(ValueError):
    pass


class EmptyGrid(ClassificationError):
    pass


class TooManySingularPoints(ClassificationError):
    pass


class NotSolvable(ValueError):
    def __init__(self, verdict):
        super().__init__(f"family is not solvable: verdict {verdict.branch}")
        self.verdict = verdict


class PQDependsOnB(ValueError):
    def __init__(self, point, magnitude):
        super().__init__(f"P, Q vary with b by {magnitude:.3e} (relative) at {point}")
        self.point = point
        self.magnitude = magnitude


class IntegrabilityViolated(ValueError):
    def __init__(self, point, magnitude):
        super().__init__(f"P_y - Q_x = {magnitude:.3e} (relative) at {point}")
        self.point = point
        self.magnitude = magnitude


class NotConservative(ValueError):
    def __init__(self, point, magnitude):
        super().__init__(f"curl residual {magnitude:.3e} (relative) at {point}")
        self.point = point
        self.magnitude = magnitude


# per-point fields -------------------------------------------------------------

NAN = float("nan")


@dataclass
class BozisFields:
    x: float
    y: float
    b: float
    gamma: float = NAN
    gamma_x: float = NAN
    gamma_y: float = NAN
    gamma_b: float = NAN
    Gamma: float = NAN
    Gamma_x: float = NAN
    Gamma_y: float = NAN
    lam: float = NAN
    mu: float = NAN
    lam_b: float = NAN
    mu_b: float = NAN
    L: float = NAN
    M: float = NAN
    L_b: float = NAN
    M_b: float = NAN
    L_x: float = NAN
    L_y: float = NAN
    M_x: float = NAN
    M_y: float = NAN
    L_bx: float = NAN
    L_bb: float = NAN
    M_bb: float = NAN
    LM_b: float = NAN
    rho: float = NAN
    rho_x: float = NAN
    rho_y: float = NAN
    ratio_b: float = NAN
    D: float = NAN
    integ_lhs: float = NAN
    integ_rhs: float = NAN
    P: float = NAN
    Q: float = NAN
    P_y: float = NAN
    Q_x: float = NAN
    frame: float = 0.0
    status: str = "ok"

    @property
    def integrability_residual(self) -> float:
        return self.integ_lhs - self.integ_rhs

    def as_dict(self) -> dict:
        return asdict(self)


def _small(value, scale):
    return abs(value) <= REL_FLOOR * abs(scale) or not math.isfinite(value)


def _div(num: Jet, den: Jet, scale: float, exc, where):
    if _small(den.value, scale):
        raise exc(f"{exc.__name__}: divisor {den.value:.3e} vs scale {scale:.3e}", where)
    try:
        return num / den
    except jets.DivisionNearZero as err:
        raise exc(str(err), where) from None


def _frame_seeds(x, y, b, order, frame):
    """Jets of the rotated coordinates and of the original ``x, y`` in terms of them."""
    if frame == 0.0:
        xr, yr, bj = jets.seed_point(x, y, b, order)
        return xr, yr, bj, xr, yr
    c, s = math.cos(frame), math.sin(frame)
    xr, yr, bj = jets.seed_point(c * x + s * y, -s * x + c * y, b, order)
    return xr, yr, bj, c * xr - s * yr, s * xr + c * yr


def _gradient_parts(spec, x, y, b, order, frame=0.0):
    """``(f_x, f_y)`` up to a common factor, in the rotated frame; plus the seeds."""
    xr, yr, bj, xj, yj = _frame_seeds(x, y, b, order, frame)
    num, den = family_fraction(spec, xj, yj, bj)
    if den is None:
        return num.d(0), num.d(1), xr, yr
    # f = N / D: the common 1/D^2 cancels in every ratio used downstream
    return num.d(0) * den - num * den.d(0), num.d(1) * den - num * den.d(1), xr, yr


def gradient_angle(spec: FamilySpec, x, y, b) -> float:
    """Direction of ``grad f`` (so ``gamma = tan`` of it) in the original frame."""
    fx, fy, _, _ = _gradient_parts(spec, x, y, b, 1)
    return math.atan2(fy.value, fx.value)


def best_slope_frame(spec: FamilySpec, x, y, b, frames=None) -> float:
    """Rotation (multiple of pi/16) putting the slope angle closest to 45 degrees."""
    phi = gradient_angle(spec, x, y, b)
    return max(frames or [math.pi * k / 16 for k in range(16)], key=lambda d: abs(math.sin(2.0 * (phi - d))))


def _slope_jets(spec: FamilySpec, x, y, b, order, frame=0.0, seeds=False):
    where = (x, y, b)
    fx, fy, xr, yr = _gradient_parts(spec, x, y, b, order, frame)
    g = _div(fy, fx, abs(fx.value) + abs(fy.value), FxNearZero, where)
    return (g, xr, yr) if seeds else g


def _generic_lambda_mu(g: Jet, where):
    gx, gy = g.d(0), g.d(1)
    G = g * gx - gy
    if _small(g.value, 1.0):
        raise GammaZero(f"gamma = {g.value:.3e}", where)
    G_scale = abs(g.value * gx.value) + abs(gy.value)
    if _small(G.value, G_scale):
        raise GammaCapZero(f"Gamma = {G.value:.3e}", where)
    Gx, Gy = G.d(0), G.d(1)
    lam = (-Gx + Gy / g) / G
    mu = lam * g + 3.0 * G / g
    return G, lam, mu


def _homogeneous_lambda_mu(g: Jet, xj: Jet, yj: Jet, where):
    gy = g.d(1)
    gyy = gy.d(1)
    z = yj / xj
    gd = xj * gy
    gdd = xj * xj * gyy
    if _small(g.value, 1.0):
        raise GammaZero(f"gamma = {g.value:.3e}", where)
    if _small(gd.value, abs(g.value) + 1.0):
        raise GammaCapZero(f"d gamma / dz = {gd.value:.3e}", where)
    den = xj * g * gd
    gz1 = g * z + 1.0
    lam = (gz1 * gdd + z * gd * gd + 2.0 * g * gd) / den
    mu = (gz1 * (gdd * g - 3.0 * gd * gd) + z * g * gd * gd + 2.0 * g * g * gd) / den
    G = g * g.d(0) - gy
    return G, lam, mu


def _evaluate(spec, x, y, b, order, homogeneous=False, strict=True, lambda_mu_only=False, frame=0.0):
    """Fill a :class:`BozisFields`, stage by stage.

    Zeros of M, M_b or L_b only set ``status`` (later fields stay NaN). Earlier
    singularities raise, or with ``strict=False`` are recorded the same way.
    With ``frame != 0`` every field refers to coordinates rotated by ``frame``
    (``x' = x cos + y sin``); ``x`` and ``y`` stay the original point.
    """
    out = BozisFields(float(x), float(y), float(b), frame=float(frame))
    where = (x, y, b)
    try:
        g, xr, yr = _slope_jets(spec, x, y, b, order, frame, seeds=True)
        out.gamma = g.value
        if homogeneous:
            G, lam, mu = _homogeneous_lambda_mu(g, xr, yr, where)
        else:
            G, lam, mu = _generic_lambda_mu(g, where)
        out.gamma, out.lam, out.mu, out.Gamma = g.value, lam.value, mu.value, G.value
        if lambda_mu_only:
            return out
        gx, gy, gb = g.d(0), g.d(1), g.d(2)
        out.gamma_x, out.gamma_y, out.gamma_b = gx.value, gy.value, gb.value
        out.Gamma_x, out.Gamma_y = G.d(0).value, G.d(1).value
        lam_b, mu_b = lam.d(2), mu.d(2)
        out.lam_b, out.mu_b = lam_b.value, mu_b.value

        gg = g * g
        w = _div(-gg, (1.0 + gg) * gb, (1.0 + g.value**2) * (1.0 + abs(g.value)) / max(abs(b), 1.0),
                 GammaBZero, where)
        L = w * lam_b
        M = w * mu_b
        L_b, M_b = L.d(2), M.d(2)
        out.L, out.M, out.L_b, out.M_b = L.value, M.value, L_b.value, M_b.value
        out.L_x, out.L_y, out.M_x, out.M_y = L.d(0).value, L.d(1).value, M.d(0).value, M.d(1).value
        out.L_bx, out.L_bb, out.M_bb = L_b.d(0).value, L_b.d(2).value, M_b.d(2).value
        D = L * M_b - M * L_b
        out.D = D.value

        LM = _div(L, M, abs(L.value) + abs(M.value), MZero, where)
        out.LM_b = LM.d(2).value

        ratio = _div(L_b, M_b, abs(L_b.value) + abs(M_b.value), MbZero, where)
        rho = -ratio
        rho_x, rho_y = rho.d(0), rho.d(1)
        out.rho, out.rho_x, out.rho_y = rho.value, rho_x.value, rho_y.value
        out.ratio_b = ratio.d(2).value
        Q = D / M_b
        out.Q = Q.value
        if Q.order >= 1:
            out.Q_x = Q.d(0).value

        LMr = L + M * rho
        if _small(L_b.value, abs(M_b.value) + abs(L_b.value)):
            raise LbZero(f"L_b = {L_b.value:.3e}", where)
        P = -D / L_b - rho_x / rho
        out.P = P.value
        if P.order >= 1:
            out.P_y = P.d(1).value
            inner = (LMr - rho_x) / rho
            out.integ_lhs = inner.d(1).value
            out.integ_rhs = LMr.d(0).value
    except (MZero, MbZero, LbZero) as err:
        # late-stage zeros are data (e.g. L = M = 0 when lambda, mu ignore b)
        out.status = err.stage
    except SingularPoint as err:
        if strict:
            raise
        out.status = err.stage
    except jets.OrderExceeded:
        pass  # the jet order ran out: the remaining fields stay NaN
    except (jets.JetError, ZeroDivisionError, OverflowError) as err:
        if strict:
            raise SingularPoint(str(err), where) from err
        out.status = "singular"
    return out


def compute_fields(spec: FamilySpec, x: float, y: float, b: float, order: int = PIPELINE_ORDER) -> BozisFields:
    """All field quantities at ``(x, y, b)``; raises on the first singular division.

    Quantities needing more derivatives than ``order`` provides stay NaN.
    """
    return _evaluate(spec, x, y, b, order)


def check_homogeneous(spec: FamilySpec, x, y, b, tol=1e-10):
    g0 = _slope_jets(spec, x, y, b, 1).value
    for s in (2.0, 0.5):
        gs = _slope_jets(spec, s * x, s * y, b, 1).value
        if abs(gs - g0) > tol * max(1.0, abs(g0)):
            raise NotHomogeneous(f"gamma changes under scaling by {s}: {g0!r} -> {gs!r}")


def compute_fields_homogeneous(spec: FamilySpec, x: float, y: float, b: float,
                               order: int = PIPELINE_ORDER) -> BozisFields:
    """Same fields, with lambda and mu from the one-variable forms in ``z = y/x``.

    Valid when ``f`` is homogeneous in ``(x, y)`` so that ``gamma`` depends on
    ``z`` alone.
    """
    check_homogeneous(spec, x, y, b)
    return _evaluate(spec, x, y, b, order, homogeneous=True)


# grids -------------------------------------------------------------------------


def polar_grid(r_min, r_max, n_r, theta_min, theta_max, n_theta, accept=None, min_abs_x=0.05,
               candidates=4000):
    """``n_r * n_theta`` points on circles; angles are picked evenly among admissible ones.

    ``accept(theta)`` filters candidate angles (e.g. oracle singular lines);
    points with ``|x| < min_abs_x`` at any radius are rejected too.
    """
    radii = np.linspace(r_min, r_max, n_r)
    cand = np.linspace(theta_min, theta_max, candidates)
    ok = [t for t in cand
          if (accept is None or accept(t)) and all(abs(r * math.cos(t)) >= min_abs_x for r in radii)]
    if len(ok) < n_theta:
        raise EmptyGrid(f"only {len(ok)} admissible angles for {n_theta} requested")
    pick = np.linspace(0, len(ok) - 1, n_theta).round().astype(int)
    thetas = [ok[i] for i in pick]
    return [(float(r * math.cos(t)), float(r * math.sin(t))) for r in radii for t in thetas]


# classification -------------------------------------------------------------------

DEGENERATE = "Degenerate"
B_INDEPENDENT = "BIndependentPDE"
SOLVABLE = "Solvable"
NO_FORCE = "NoForce"
UNCLASSIFIED = "Unclassified"
INDETERMINATE = "Indeterminate"
ILL_CONDITIONED = "ill_conditioned"
_EARLY_STAGES = {FxNearZero.stage, GammaZero.stage, GammaCapZero.stage, "singular", ILL_CONDITIONED}
BRANCHES = (DEGENERATE, B_INDEPENDENT, SOLVABLE, NO_FORCE, UNCLASSIFIED, INDETERMINATE)


@dataclass(frozen=True)
class Tolerances:
    tol_zero: float = 1e-8
    tol_nonzero: float = 1e-6
    min_survival: float = 0.8
    pq_spread: float = 1e-7
    pq_integrability: float = 1e-7
    conservative: float = 1e-7
    # points whose slope angle is within ~asin(2*slope_floor)/2 of an axis are
    # excluded: the formulas divide by f_x and gamma and lose ~eps/sin(2 phi)^k
    slope_floor: float = 0.05
    # likewise for nearly straight members: Gamma sits in a denominator
    straight_floor: float = 0.02


@dataclass
class ConditionEvidence:
    """Magnitude summary of one quantity over the surviving grid."""

    name: str
    count: int
    scale: float
    min_abs: float
    median_abs: float
    max_abs: float

    @property
    def norm_min(self):
        return self.min_abs / self.scale if self.scale > 0 else math.inf

    @property
    def norm_median(self):
        return self.median_abs / self.scale if self.scale > 0 else math.inf

    @property
    def norm_max(self):
        return self.max_abs / self.scale if self.scale > 0 else math.inf

    def is_zero(self, tol):
        return self.count > 0 and (self.max_abs == 0.0 or self.norm_max <= tol)

    def is_nonzero(self, tol):
        return self.count > 0 and self.norm_min >= tol

    def fails_decisively(self, tol):
        return self.count > 0 and self.norm_median >= tol

    def state(self, tols: Tolerances):
        if self.is_zero(tols.tol_zero):
            return "zero"
        if self.is_nonzero(tols.tol_nonzero):
            return "nonzero"
        return "marginal"

    def as_dict(self):
        d = asdict(self)
        d.update(norm_min=self.norm_min, norm_median=self.norm_median, norm_max=self.norm_max)
        return d


@dataclass
class CompatibilityVerdict:
    branch: str
    evidence: dict
    census: dict
    tolerances: Tolerances
    summary: str
    fields: list = field(default_factory=list, repr=False)
    b_samples: tuple = ()
    grid: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "branch": self.branch,
            "summary": self.summary,
            "evidence": {k: v.as_dict() for k, v in self.evidence.items()},
            "census": self.census,
            "tolerances": asdict(self.tolerances),
            "b_samples": list(self.b_samples),
        }


def straightness(fl: BozisFields) -> float:
    """``|Gamma|`` relative to the size of its two terms (0 on straight members)."""
    return abs(fl.Gamma) / (abs(fl.gamma * fl.gamma_x) + abs(fl.gamma_y) + 1e-300)


def _evidence(name, values, scales):
    vals = np.abs(np.asarray(values, dtype=float))
    sc = np.abs(np.asarray(scales, dtype=float))
    good = np.isfinite(vals) & np.isfinite(sc)
    vals, sc = vals[good], sc[good]
    if vals.size == 0:
        return ConditionEvidence(name, 0, NAN, NAN, NAN, NAN)
    return ConditionEvidence(name, int(vals.size), float(np.median(sc)), float(vals.min()),
                             float(np.median(vals)), float(vals.max()))


def _mark_ill_conditioned(fields, tols):
    for fl in fields:
        if math.isfinite(fl.gamma) and abs(fl.gamma) / (1.0 + fl.gamma**2) < tols.slope_floor:
            fl.status = ILL_CONDITIONED
        elif fl.status not in _EARLY_STAGES and straightness(fl) < tols.straight_floor:
            fl.status = ILL_CONDITIONED


def sweep(spec, grid, b_samples, order=PIPELINE_ORDER, homogeneous=False):
    """Fields at every grid point for every ``b`` (grid-major order)."""
    return [_evaluate(spec, x, y, b, order, homogeneous=homogeneous, strict=False)
            for (x, y) in grid for b in b_samples]


def classify(spec: FamilySpec, grid, b_samples, tolerances: Tolerances | None = None,
             order: int = PIPELINE_ORDER) -> CompatibilityVerdict:
    """Decide which branch of the compatibility analysis the family falls in."""
    tols = tolerances or Tolerances()
    grid = list(grid)
    b_samples = tuple(float(b) for b in b_samples)
    if not grid or not b_samples:
        raise EmptyGrid("classification needs grid points and b samples")
    if order < PIPELINE_ORDER:
        raise ValueError(f"classification needs jet order >= {PIPELINE_ORDER}, got {order}")
    fields = sweep(spec, grid, b_samples, order)
    # slope near an axis: the formulas divide by f_x and gamma. The points
    # are dropped rather than rotated, since lambda_b = mu_b = 0 is not a
    # frame-independent statement
    _mark_ill_conditioned(fields, tols)
    total = len(fields)
    status_counts = {}
    for fl in fields:
        status_counts[fl.status] = status_counts.get(fl.status, 0) + 1

    stage2 = [fl for fl in fields if fl.status not in _EARLY_STAGES]
    census = {"total": total, "status": dict(sorted(status_counts.items())),
              "evaluated": len(stage2), "survival": len(stage2) / total}
    if len(stage2) < tols.min_survival * total:
        raise TooManySingularPoints(
            f"only {len(stage2)} of {total} point evaluations survived ({census['status']})")

    bscale = float(np.median(np.abs(b_samples))) or 1.0
    ev = {}

    def add(name, rows, attr, scale_fn):
        ev[name] = _evidence(name, [getattr(r, attr) for r in rows], [scale_fn(r) for r in rows])

    add("gamma_b", stage2, "gamma_b", lambda r: (1.0 + r.gamma**2) / bscale)
    add("lambda_b", stage2, "lam_b", lambda r: abs(r.lam) / bscale)
    add("mu_b", stage2, "mu_b", lambda r: abs(r.mu) / bscale)

    def verdict(branch, summary):
        return CompatibilityVerdict(branch, ev, census, tols, summary, fields, b_samples, grid)

    if ev["gamma_b"].is_zero(tols.tol_zero):
        return verdict(DEGENERATE, "gamma does not depend on the parameter: members do not change shape")
    if ev["lambda_b"].is_zero(tols.tol_zero) and ev["mu_b"].is_zero(tols.tol_zero):
        return verdict(B_INDEPENDENT, "lambda and mu are free of the parameter; the force PDE is a single "
                                      "b-free equation whose solutions are not unique (not solved)")

    stage3 = [fl for fl in stage2 if fl.status not in {GammaBZero.stage}]
    census["with_L_M"] = len(stage3)
    add("L_b", stage3, "L_b", lambda r: abs(r.L) / bscale)
    add("M_b", stage3, "M_b", lambda r: abs(r.M) / bscale)
    lm_rows = [fl for fl in stage3 if fl.status not in {MZero.stage}]
    add("LM_b", lm_rows, "LM_b", lambda r: abs(r.L / r.M) / bscale)
    rows5 = [fl for fl in lm_rows if fl.status not in {MbZero.stage}]
    census["with_rho"] = len(rows5)
    add("ratio_b", rows5, "ratio_b", lambda r: abs(r.rho) / bscale)
    add("integrability", rows5, "integrability_residual", lambda r: abs(r.integ_lhs) + abs(r.integ_rhs))

    if len(rows5) < tols.min_survival * total:
        return verdict(INDETERMINATE, f"too few points reach the rho stage ({len(rows5)} of {total})")

    ineq = {k: ev[k].state(tols) for k in ("L_b", "M_b", "LM_b")}
    if all(s == "nonzero" for s in ineq.values()):
        eqs = {k: ev[k] for k in ("ratio_b", "integrability")}
        if all(e.is_zero(tols.tol_zero) for e in eqs.values()):
            return verdict(SOLVABLE, "L_b, M_b, (L/M)_b bounded away from zero; (L_b/M_b)_b and the "
                                     "integrability residual vanish: a unique force (up to scale) exists")
        failing = [k for k, e in eqs.items() if e.fails_decisively(tols.tol_nonzero)]
        if failing:
            return verdict(NO_FORCE, f"L_b, M_b, (L/M)_b bounded away from zero but {', '.join(failing)} "
                                     f"does not vanish: no b-independent force exists")
        return verdict(INDETERMINATE, "equality conditions neither vanish nor fail clearly")
    if any(s == "zero" for s in ineq.values()):
        zeros = [k for k, s in ineq.items() if s == "zero"]
        return verdict(UNCLASSIFIED, f"{', '.join(zeros)} vanish identically: a sub-case not covered by "
                                     f"the generic criterion")
    return verdict(INDETERMINATE, f"inequality evidence is marginal: {ineq}")


# forces ----------------------------------------------------------------------------


def _fd4(fn, x, y, h_rel=1e-5):
    """Fourth-order central differences of a vector field; returns d/dx, d/dy."""
    hx = h_rel * (1.0 + abs(x))
    hy = h_rel * (1.0 + abs(y))

    def diff(g, h):
        f2, f1, m1, m2 = g(2 * h), g(h), g(-h), g(-2 * h)
        return [(-a + 8 * b - 8 * c + d) / (12 * h) for a, b, c, d in zip(f2, f1, m1, m2)]

    dx = diff(lambda s: fn(x + s, y), hx)
    dy = diff(lambda s: fn(x, y + s), hy)
    return dx, dy


@dataclass
class ForceField:
    """Planar force ``gauge * unit(x, y)``.

    Optional closed forms: ``unit_jets(xj, yj) -> (Xj, Yj)`` for exact
    partials, or ``unit_jacobian(x, y) -> (X, Y, X_x, X_y, Y_x, Y_y)``.
    """

    unit: Callable
    gauge: float = 1.0
    label: str = "force"
    anchor: tuple | None = None
    unit_jets: Callable | None = None
    unit_jacobian: Callable | None = None
    unit_potential: Callable | None = None
    unit_work: Callable | None = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x, y):
        X, Y = self.unit(x, y)
        return self.gauge * X, self.gauge * Y

    def scaled(self, factor) -> ForceField:
        return ForceField(self.unit, self.gauge * factor, self.label, self.anchor, self.unit_jets,
                          self.unit_jacobian, self.unit_potential, self.unit_work, dict(self.diagnostics))

    def jacobian(self, x, y):
        """``(X, Y, X_x, X_y, Y_x, Y_y)`` at ``(x, y)``."""
        if self.unit_jets is not None:
            xj, yj, _ = jets.seed_point(x, y, 0.0, 1)
            Xj, Yj = self.unit_jets(xj, yj)
            vals = (Xj.value, Yj.value, Xj.partial(1, 0, 0), Xj.partial(0, 1, 0),
                    Yj.partial(1, 0, 0), Yj.partial(0, 1, 0))
        elif self.unit_jacobian is not None:
            vals = self.unit_jacobian(x, y)
        else:
            X, Y = self.unit(x, y)
            (Xx, Yx), (Xy, Yy) = _fd4(self.unit, x, y)
            vals = (X, Y, Xx, Xy, Yx, Yy)
        return tuple(self.gauge * v for v in vals)

    def potential(self, x, y):
        if self.unit_potential is None:
            raise ValueError(f"{self.label}: no potential (call reconstruct_potential)")
        return self.gauge * self.unit_potential(x, y)


def newton_force(F0: float = 1.0) -> ForceField:
    def unit_jets(xj, yj):
        r3 = jets.pow_int(jets.sqrt(xj * xj + yj * yj), 3)
        return -xj / r3, -yj / r3

    def unit(x, y):
        r3 = math.hypot(x, y) ** 3
        return -x / r3, -y / r3

    return ForceField(unit, F0, "newton", unit_jets=unit_jets, unit_potential=lambda x, y: -1.0 / math.hypot(x, y))


def harmonic_force(k: float = 1.0) -> ForceField:
    return ForceField(lambda x, y: (-x, -y), k, "harmonic",
                      unit_jets=lambda xj, yj: (-xj, -yj),
                      unit_potential=lambda x, y: 0.5 * (x * x + y * y))


def expression_force(x_text: str, y_text: str, constants=None, label="expression") -> ForceField:
    """Force from two expression-language texts in ``x`` and ``y``."""
    ax, ay = exprlang.parse(x_text), exprlang.parse(y_text)
    consts = {k: float(v) for k, v in (constants or {}).items()}

    def unit(x, y):
        env = dict(consts, x=x, y=y)
        return exprlang.eval_float(ax, env), exprlang.eval_float(ay, env)

    def unit_jets(xj, yj):
        env = dict(consts, x=xj, y=yj, __order__=xj.order, __floats__=dict(consts, x=xj.value, y=yj.value))
        return exprlang._eval(ax, env), exprlang._eval(ay, env)

    return ForceField(unit, 1.0, label, unit_jets=unit_jets)


def _leg_integral(fn, a, b, epsabs=1e-10):
    if a == b:
        return 0.0
    val, _err = integrate.quad(fn, a, b, epsabs=epsabs, epsrel=1e-12, limit=200)
    return val


def log_gradient_force(P, Q, rho, anchor, X0=1.0, rho_grad=None, path="xy", label="derived",
                       epsabs=1e-10) -> ForceField:
    """Force with ``d log X = P dx + Q dy`` and ``Y = rho X``.

    ``X(x, y) = X0 * exp(integral from anchor)`` along an axis-aligned path:
    ``path="xy"`` runs along x first, ``"yx"`` along y first.
    """
    x0, y0 = anchor

    def log_unit(x, y):
        if path == "xy":
            return (_leg_integral(lambda s: P(s, y0), x0, x, epsabs)
                    + _leg_integral(lambda s: Q(x, s), y0, y, epsabs))
        return (_leg_integral(lambda s: Q(x0, s), y0, y, epsabs)
                + _leg_integral(lambda s: P(s, y), x0, x, epsabs))

    def unit(x, y):
        X = math.exp(log_unit(x, y))
        return X, rho(x, y) * X

    jac = None
    if rho_grad is not None:
        def jac(x, y):
            X = math.exp(log_unit(x, y))
            r, r_x, r_y = rho_grad(x, y)
            p, q = P(x, y), Q(x, y)
            return X, r * X, p * X, q * X, (r_x + r * p) * X, (r_y + r * q) * X

    return ForceField(unit, X0, label, anchor=(x0, y0), unit_jacobian=jac)


N_FRAMES = 16


class _LocalForms:
    """Frame-adaptive differential data of the derived force.

    With ``F = |F| (cos a, sin a)`` the force is carried by the two closed
    forms ``d log|F|`` and ``d a``; both are regular wherever ``F != 0``, also
    where ``X`` or ``Y`` vanish. At each point they are computed in the
    rotated frame (one of ``N_FRAMES``) in which the slope and the force
    direction are farthest from the axes, then rotated back. Since ``P``,
    ``Q`` and ``rho`` do not depend on the parameter, points where the member
    for ``b_values[0]`` is nearly straight (``Gamma ~ 0``) use another value.
    """

    def __init__(self, spec, b_values, order=PQ_ORDER, frames=N_FRAMES, straight_floor=0.05):
        self.spec, self.order = spec, order
        self.b_values = [float(b) for b in np.atleast_1d(b_values)]
        self.frames = [math.pi * k / frames for k in range(frames)]
        self.straight_floor = straight_floor
        self._cache = {}

    def _fields(self, x, y, b, frame):
        fl = _evaluate(self.spec, x, y, b, self.order, strict=False, frame=frame)
        ok = fl.status == "ok" and all(math.isfinite(v) for v in (fl.P, fl.Q, fl.rho, fl.rho_x, fl.rho_y))
        return fl if ok else None

    def _pick(self, x, y):
        best, best_q = None, -1.0
        for b in self.b_values:
            try:
                phi = gradient_angle(self.spec, x, y, b)
            except (SingularPoint, jets.JetError, ArithmeticError):
                continue
            frame = max(self.frames, key=lambda d: abs(math.sin(2.0 * (phi - d))))
            fl = self._fields(x, y, b, frame)
            if fl is None:
                continue
            q = straightness(fl)
            if q > best_q:
                best, best_q, best_phi = fl, q, phi
            if q >= self.straight_floor:
                break
        if best is None:
            raise SingularPoint("no usable frame", (x, y))
        fl, phi = best, best_phi
        alpha = fl.frame + math.atan(fl.rho)
        order = sorted(self.frames,
                       key=lambda d: -min(abs(math.sin(2.0 * (phi - d))), abs(math.cos(alpha - d))))
        for d in order:
            got = fl if d == fl.frame else self._fields(x, y, fl.b, d)
            if got is not None:
                return got
        raise SingularPoint("no usable frame", (x, y))

    def __call__(self, x, y):
        """``(m_x, m_y, a_x, a_y, alpha)``: gradients of ``log|F|`` and of the angle,
        and the force direction modulo pi."""
        key = (x, y)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        fl = self._pick(x, y)
        c, s = math.cos(fl.frame), math.sin(fl.frame)
        r = fl.rho
        k = 1.0 + r * r
        ax, ay = fl.rho_x / k, fl.rho_y / k
        mx, my = fl.P + r * ax, fl.Q + r * ay
        out = (c * mx - s * my, s * mx + c * my, c * ax - s * ay, s * ax + c * ay, fl.frame + math.atan(r))
        if len(self._cache) > 200000:
            self._cache.clear()
        self._cache[key] = out
        return out


def _legs(anchor, x, y, path):
    x0, y0 = anchor
    if path == "xy":
        return [((x0, y0), (x, y0)), ((x, y0), (x, y))]
    if path == "yx":
        return [((x0, y0), (x0, y)), ((x0, y), (x, y))]
    raise ValueError(f"path must be 'xy' or 'yx', got {path!r}")


def angle_form_force(forms: Callable, anchor, X0=1.0, path="xy", label="derived", rtol=1e-11,
                     atol=1e-12) -> ForceField:
    """Force from the closed forms ``d log|F|`` and ``d angle`` with ``X(anchor) = X0``.

    ``forms(x, y) -> (m_x, m_y, a_x, a_y, alpha)``. The forms are integrated,
    together with the work of the unit-gauge field, along the axis-aligned
    legs of ``path`` (``"xy"``: along x first).
    """
    _legs(anchor, 0.0, 0.0, path)
    x0, y0 = map(float, anchor)
    alpha = forms(x0, y0)[4]
    # unit gauge: X(anchor) = 1, so the anchor angle is alpha folded into (-pi/2, pi/2)
    a0 = (alpha + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    if abs(math.cos(a0)) < 1e-8:
        raise ValueError("X vanishes at the anchor; choose another anchor")
    log_mag0 = -math.log(abs(math.cos(a0)))

    @functools.lru_cache(maxsize=4096)
    def integrate_to(x, y):
        state = np.zeros(3)  # log|F| - log|F|(anchor), angle increment, work
        for (xa, ya), (xb, yb) in _legs((x0, y0), x, y, path):
            length = abs(xb - xa) + abs(yb - ya)
            if length == 0.0:
                continue
            ux, uy = (xb - xa) / length, (yb - ya) / length

            def rhs(t, u):
                px, py = xa + t * ux, ya + t * uy
                mx, my, ax, ay, _ = forms(px, py)
                mag = math.exp(log_mag0 + u[0])
                ang = a0 + u[1]
                return [mx * ux + my * uy, ax * ux + ay * uy,
                        mag * (math.cos(ang) * ux + math.sin(ang) * uy)]

            sol = integrate.solve_ivp(rhs, (0.0, length), state, method="DOP853", rtol=rtol, atol=atol)
            if not sol.success:
                raise SingularPoint(f"path integration failed: {sol.message}", (x, y))
            state = sol.y[:, -1]
        return tuple(float(v) for v in state)

    def unit(x, y):
        lm, da, _ = integrate_to(x, y)
        mag = math.exp(log_mag0 + lm)
        return mag * math.cos(a0 + da), mag * math.sin(a0 + da)

    def jac(x, y):
        X, Y = unit(x, y)
        mx, my, ax, ay, _ = forms(x, y)
        return X, Y, X * mx - Y * ax, X * my - Y * ay, Y * mx + X * ax, Y * my + X * ay

    def work(x, y):
        return integrate_to(x, y)[2]

    return ForceField(unit, X0, label, anchor=(x0, y0), unit_jacobian=jac, unit_work=work)


def solve_force(spec: FamilySpec, verdict: CompatibilityVerdict, anchor, X0: float = 1.0, grid=None,
                tolerances: Tolerances | None = None, path="xy") -> ForceField:
    """Integrate the force of a solvable family from ``anchor`` with ``X(anchor) = X0``."""
    if verdict.branch != SOLVABLE:
        raise NotSolvable(verdict)
    if X0 == 0:
        raise ValueError("X0 must be non-zero")
    tols = tolerances or verdict.tolerances
    grid = list(grid if grid is not None else verdict.grid)
    b_samples = verdict.b_samples
    if len(set(b_samples)) < 3:
        raise ValueError("b-independence of P, Q needs at least 3 distinct b samples")

    b_ref = sorted(b_samples)[len(b_samples) // 2]
    rows = [((x, y), [_evaluate(spec, x, y, b, PIPELINE_ORDER, strict=False) for b in b_samples])
            for x, y in grid]
    for _, row in rows:
        _mark_ill_conditioned(row, tols)
    oks = [fl for _, row in rows for fl in row if fl.status == "ok"]
    if not oks:
        raise TooManySingularPoints("no grid point yields P and Q")
    pq_scale = np.median([abs(fl.P) + abs(fl.Q) for fl in oks])
    d_scale = np.median([abs(fl.P_y) + abs(fl.Q_x) for fl in oks])
    worst_spread, worst_pt = 0.0, None
    worst_int, worst_int_pt = 0.0, None
    for (x, y), row in rows:
        ok = [fl for fl in row if fl.status == "ok"]
        if len(ok) < 2:
            continue
        for attr in ("P", "Q"):
            v = [getattr(fl, attr) for fl in ok]
            spread = (max(v) - min(v)) / pq_scale
            if spread > worst_spread:
                worst_spread, worst_pt = spread, (x, y)
        for fl in ok:
            res = abs(fl.P_y - fl.Q_x) / d_scale
            if res > worst_int:
                worst_int, worst_int_pt = res, (x, y, fl.b)
    if worst_spread > tols.pq_spread:
        raise PQDependsOnB(worst_pt, worst_spread)
    if worst_int > tols.pq_integrability:
        raise IntegrabilityViolated(worst_int_pt, worst_int)

    b_order = sorted(b_samples, key=lambda b: abs(b - b_ref))
    force = angle_form_force(_LocalForms(spec, b_order), anchor, X0, path=path, label=f"derived({spec.kind})")
    force.diagnostics.update(pq_spread=worst_spread, pq_integrability=worst_int, b_ref=b_ref)
    force.diagnostics.update(field_residuals(force, grid))
    return force


def field_residuals(force: ForceField, grid) -> dict:
    """Conservativity ``max|X_y - Y_x|`` and centrality ``max|x Y - y X|`` over the grid."""
    curl, cent, curl_n, cent_n = 0.0, 0.0, 0.0, 0.0
    for x, y in grid:
        X, Y, Xx, Xy, Yx, Yy = force.jacobian(x, y)
        c = abs(Xy - Yx)
        t = abs(x * Y - y * X)
        curl = max(curl, c)
        cent = max(cent, t)
        curl_n = max(curl_n, c / (abs(Xx) + abs(Xy) + abs(Yx) + abs(Yy) + 1e-300))
        cent_n = max(cent_n, t / (math.hypot(x, y) * math.hypot(X, Y) + 1e-300))
    return {"conservativity_residual": curl, "centrality_residual": cent,
            "conservativity_relative": curl_n, "centrality_relative": cent_n}


# verification ------------------------------------------------------------------------


@dataclass
class ResidualReport:
    per_b: dict
    max_normalized: float
    median_normalized: float
    evaluated: int
    dropped: int

    def as_dict(self):
        return asdict(self)


def force_pde_residual(fl: BozisFields, jac):
    X, Y, Xx, Xy, Yx, Yy = jac
    g = fl.gamma
    R = -Xx + Xy / g - g * Yx + Yy - fl.lam * X - fl.mu * Y
    norm = abs(fl.lam * X) + abs(fl.mu * Y) + 1e-300
    return R, abs(R) / norm


def check_force_against_family(spec: FamilySpec, force: ForceField, grid, b_samples,
                               order: int = 3) -> ResidualReport:
    """Normalized residual of the force PDE for every grid point and ``b``."""
    per_b = {}
    allv = []
    dropped = 0
    jac_cache = {}
    for b in b_samples:
        vals = []
        for x, y in grid:
            fl = _evaluate(spec, x, y, b, order, strict=False, lambda_mu_only=True)
            if fl.status != "ok":
                dropped += 1
                continue
            if (x, y) not in jac_cache:
                jac_cache[(x, y)] = force.jacobian(x, y)
            _, rn = force_pde_residual(fl, jac_cache[(x, y)])
            vals.append(rn)
        allv.extend(vals)
        per_b[repr(float(b))] = {
            "max": float(max(vals)) if vals else NAN,
            "median": float(np.median(vals)) if vals else NAN,
            "count": len(vals),
        }
    return ResidualReport(per_b, float(max(allv)) if allv else NAN,
                          float(np.median(allv)) if allv else NAN, len(allv), dropped)


def reconstruct_potential(force: ForceField, anchor, grid, tol: float = 1e-7, epsabs=1e-11):
    """Potential with ``force = -grad V`` and ``V(anchor) = 0``.

    Returns ``(V, diagnostics)``; the integral runs over the unit-gauge field
    and is scaled by the gauge afterwards, so ``V`` scales exactly with it.
    """
    worst, worst_pt = 0.0, None
    for x, y in grid:
        _, _, Xx, Xy, Yx, Yy = force.jacobian(x, y)
        rel = abs(Xy - Yx) / (abs(Xx) + abs(Xy) + abs(Yx) + abs(Yy) + 1e-300)
        if rel > worst:
            worst, worst_pt = rel, (x, y)
    if worst > tol:
        raise NotConservative(worst_pt, worst)
    x0, y0 = anchor

    if force.unit_work is not None:
        # work from the force's own anchor; path independent once conservative
        w0 = force.unit_work(x0, y0)

        def unit_potential(x, y):
            return w0 - force.unit_work(x, y)
    else:
        def unit_potential(x, y):
            a = _leg_integral(lambda s: force.unit(s, y0)[0], x0, x, epsabs)
            c = _leg_integral(lambda s: force.unit(x, s)[1], y0, y, epsabs)
            return -(a + c)

    gauge = force.gauge

    def V(x, y):
        return gauge * unit_potential(x, y)

    return V, {"conservativity_relative": worst, "anchor": (x0, y0)}
