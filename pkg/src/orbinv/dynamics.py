"""Forward dynamics: Manev forces, an adaptive Dormand-Prince integrator and
apsidal precession measurement.

Units are scale free; the defaults are ``F0 = 1`` and ``p = 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .families import OriginSingularity


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


class InsufficientRevolutions(ValueError):
    pass


# Manev force -------------------------------------------------------------------

BETA_MODES = ("binet", "printed")


@dataclass(frozen=True)
class ManevParams:
    """Potential ``V(r) = -alpha / r - beta / (2 r^2)``.

    ``beta_mode="binet"`` uses the coefficients for which every precessing
    conic ``r = p / (1 + e cos b(theta - theta0))`` is an exact orbit with
    ``h^2 = F0 p``: ``alpha = F0 b^2``, ``beta = F0 p (1 - b^2)``.
    ``"printed"`` swaps in ``beta = F0 p (1 - b)^2`` for comparison only.
    """

    F0: float = 1.0
    p: float = 1.0
    b: float = 1.0
    beta_mode: str = "binet"

    def __post_init__(self):
        if not self.F0 > 0:
            raise ValueError("F0 must be positive")
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.b > 0:
            raise ValueError("b must be positive")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"beta_mode must be one of {BETA_MODES}")

    @property
    def alpha(self) -> float:
        return self.F0 * self.b * self.b

    @property
    def beta(self) -> float:
        if self.beta_mode == "printed":
            return self.F0 * self.p * (1.0 - self.b) ** 2
        return self.F0 * self.p * (1.0 - self.b * self.b)

    @property
    def h(self) -> float:
        """Angular momentum of the matched conic orbits."""
        return math.sqrt(self.F0 * self.p)

    def potential(self, x, y):
        r = math.hypot(x, y)
        if r == 0.0:
            raise OriginSingularity("Manev potential at the origin")
        return -self.alpha / r - 0.5 * self.beta / (r * r)

    def radial_force(self, r):
        """Signed radial component ``-dV/dr`` (negative = attractive)."""
        return -self.alpha / (r * r) - self.beta / (r * r * r)


def manev_force(params: ManevParams, x: float, y: float):
    r = math.hypot(x, y)
    if r == 0.0:
        raise OriginSingularity("Manev force at the origin")
    k = params.radial_force(r) / r
    return k * x, k * y


def manev_field(params: ManevParams):
    """The Manev force as a :class:`orbinv.bozis.ForceField` with gauge ``F0``."""
    from . import jets
    from .bozis import ForceField

    unit_params = ManevParams(1.0, params.p, params.b, params.beta_mode)
    a, bt = unit_params.alpha, unit_params.beta

    def unit(x, y):
        return manev_force(unit_params, x, y)

    def unit_jets(xj, yj):
        r = jets.sqrt(xj * xj + yj * yj)
        k = -(a / jets.pow_int(r, 3) + bt / jets.pow_int(r, 4))
        return k * xj, k * yj

    return ForceField(unit, params.F0, f"manev(b={params.b})", unit_jets=unit_jets,
                      unit_potential=unit_params.potential)


def binet_residual(params: ManevParams, e: float, theta0: float, h: float, theta_samples) -> float:
    """Max ``|u'' + u + F_r(1/u) / (h^2 u^2)|`` along the conic ``u = (1 + e cos b(theta - theta0)) / p``."""
    if h == 0:
        raise ValueError("h must be non-zero")
    th = np.asarray(theta_samples, dtype=float)
    b, p = params.b, params.p
    c = np.cos(b * (th - theta0))
    u = (1.0 + e * c) / p
    upp = -e * b * b * c / p
    if np.any(u <= 0):
        raise ValueError("conic leaves the bounded branch at some samples")
    r = 1.0 / u
    res = upp + u + params.radial_force(r) / (h * h * u * u)
    return float(np.max(np.abs(res)))


def binet_match(F0: float, p: float, b: float, e: float = 0.3, theta0: float = 0.0, h=None, n: int = 64):
    """Least-squares ``(alpha, beta)`` making the conic satisfy the Binet equation.

    Independent of the closed forms in :class:`ManevParams`: the identity
    ``u'' + u = (alpha + beta u) / h^2`` is imposed at ``n`` sample angles.
    """
    h2 = F0 * p if h is None else h * h
    th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    c = np.cos(b * (th - theta0))
    u = (1.0 + e * c) / p
    lhs = u - e * b * b * c / p
    A = np.column_stack([np.ones_like(u), u]) / h2
    (alpha, beta), *_ = np.linalg.lstsq(A, lhs, rcond=None)
    return float(alpha), float(beta)


# trajectory container ---------------------------------------------------------------


@dataclass
class TrajectoryState:
    t: float
    x: float
    y: float
    vx: float
    vy: float
    theta: float = math.nan
    E: float = math.nan

    @property
    def r(self):
        return math.hypot(self.x, self.y)

    @property
    def h(self):
        return self.x * self.vy - self.y * self.vx


@dataclass
class Trajectory:
    """Accepted integrator steps as arrays; ``ax, ay`` are the accelerations."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    ax: np.ndarray | None = None
    ay: np.ndarray | None = None
    potential: Callable | None = None
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def r(self):
        return np.hypot(self.x, self.y)

    @property
    def theta(self):
        """Continuous (unwrapped) polar angle."""
        return np.unwrap(np.arctan2(self.y, self.x))

    @property
    def h(self):
        return self.x * self.vy - self.y * self.vx

    @property
    def E(self):
        kin = 0.5 * (self.vx**2 + self.vy**2)
        if self.potential is None:
            return np.full_like(kin, np.nan)
        return kin + np.array([self.potential(a, b) for a, b in zip(self.x, self.y)])

    def state(self, i) -> TrajectoryState:
        return TrajectoryState(float(self.t[i]), float(self.x[i]), float(self.y[i]), float(self.vx[i]),
                               float(self.vy[i]), float(self.theta[i]), float(self.E[i]))

    def to_csv(self, path):
        cols = [self.t, self.x, self.y, self.vx, self.vy, self.r, self.theta, self.E, self.h]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "vx", "vy", "r", "theta", "E", "h"])
            for row in zip(*cols):
                w.writerow([f"{v:.16e}" for v in row])


def initial_conditions_for_member(params: ManevParams, e: float, theta0: float) -> TrajectoryState:
    """Perihelion state of the conic with apse direction ``theta0``, moving counter-clockwise."""
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
    r0 = params.p / (1.0 + e)
    v = params.h / r0
    c, s = math.cos(theta0), math.sin(theta0)
    state = TrajectoryState(0.0, r0 * c, r0 * s, -v * s, v * c, theta0)
    state.E = 0.5 * v * v + params.potential(state.x, state.y)
    return state


# Dormand-Prince 5(4) -------------------------------------------------------------

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _rhs(force):
    def f(u):
        X, Y = force(u[0], u[1])
        return np.array([u[2], u[3], X, Y])

    return f


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-11
    atol: float = 1e-13
    h0: float | None = None
    h_min: float = 1e-14
    max_steps: int = 2_000_000
    safety: float = 0.9
    # PI controller exponents (Gustafsson): h_new = h * fac * err^-a * err_prev^b
    k_i: float = 0.7 / 5
    k_p: float = 0.4 / 5


def integrate(force: Callable, initial: TrajectoryState, t_end: float | None = None,
              theta_end: float | None = None, options: IntegratorOptions | None = None,
              potential: Callable | None = None) -> Trajectory:
    """Integrate ``x'' = force(x)`` from ``initial`` until ``t_end`` or the
    unwrapped polar angle reaches ``theta_end`` (whichever comes first).

    The last step is shortened to land on the stopping point; angle stops are
    located on a cubic Hermite interpolant of the step.
    """
    opts = options or IntegratorOptions()
    if not (opts.rtol > 0 and opts.atol > 0):
        raise ValueError("tolerances must be positive")
    if t_end is None and theta_end is None:
        raise ValueError("need t_end or theta_end")
    f = _rhs(force)
    t = float(initial.t)
    u = np.array([initial.x, initial.y, initial.vx, initial.vy], dtype=float)
    k1 = f(u)
    th = math.atan2(u[1], u[0]) if math.isnan(initial.theta) else float(initial.theta)
    # keep theta consistent with the position
    th += _wrap(math.atan2(u[1], u[0]) - th)
    ts, us, ks = [t], [u], [k1]
    thetas = [th]
    if theta_end is not None and theta_end <= th:
        raise ValueError("theta_end must exceed the initial angle")

    h = opts.h0 or _initial_step(f, u, k1, opts)
    if t_end is not None:
        h = min(h, t_end - t)
    err_prev = 1.0
    steps = rejected = 0
    done = False
    while not done:
        if steps + rejected >= opts.max_steps:
            raise MaxStepsExceeded(f"{opts.max_steps} steps reached at t={t}")
        if h < opts.h_min * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step {h:.3e} below minimum at t={t}, r={math.hypot(u[0], u[1]):.3e}")
        u_new, k_new, err = _dopri_step(f, u, k1, h, opts)
        if err > 1.0 or not np.isfinite(err):
            fac = 0.2 if not np.isfinite(err) else max(0.2, opts.safety * err ** (-1 / 5))
            h *= fac
            rejected += 1
            continue
        t_new = t + h
        th_new = th + _wrap(math.atan2(u_new[1], u_new[0]) - math.atan2(u[1], u[0]))
        if theta_end is not None and th_new >= theta_end:
            # shorten the step to land on the angle
            ts_star = _angle_crossing(t, u, k1, t_new, u_new, k_new, th, theta_end)
            h = ts_star - t
            u_new, k_new, _ = _dopri_step(f, u, k1, h, opts)
            # Newton on the stepped angle removes the interpolant's error
            for _ in range(3):
                miss = theta_end - (th + _wrap(math.atan2(u_new[1], u_new[0]) - math.atan2(u[1], u[0])))
                rate = (u_new[0] * u_new[3] - u_new[1] * u_new[2]) / (u_new[0] ** 2 + u_new[1] ** 2)
                if abs(miss) <= 1e-15 * max(1.0, abs(theta_end)) or rate == 0.0:
                    break
                h += miss / rate
                u_new, k_new, _ = _dopri_step(f, u, k1, h, opts)
            t_new = t + h
            th_new = theta_end
            done = True
        if t_end is not None and t_new >= t_end * (1 - 1e-15):
            done = True
        t, u, k1, th = t_new, u_new, k_new, th_new
        ts.append(t)
        us.append(u)
        ks.append(k1)
        thetas.append(th)
        steps += 1
        # PI step size control
        err = max(err, 1e-10)
        fac = opts.safety * err ** (-opts.k_i) * err_prev ** opts.k_p
        h *= min(5.0, max(0.2, fac))
        err_prev = err
        if t_end is not None and not done:
            h = min(h, t_end - t)

    U = np.array(us)
    K = np.array(ks)
    return Trajectory(np.array(ts), U[:, 0], U[:, 1], U[:, 2], U[:, 3], K[:, 2], K[:, 3], potential,
                      {"steps": steps, "rejected": rejected, "rtol": opts.rtol, "atol": opts.atol})


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _initial_step(f, u, k1, opts):
    scale = opts.atol + opts.rtol * np.abs(u)
    d0 = np.sqrt(np.mean((u / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    k2 = f(u + h0 * k1)
    d2 = np.sqrt(np.mean(((k2 - k1) / scale) ** 2)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _dopri_step(f, u, k1, h, opts):
    ks = [k1]
    for i in range(1, 7):
        a = _A[i]
        inc = a[0] * ks[0]
        for j in range(1, len(a)):
            if a[j] != 0.0:
                inc = inc + a[j] * ks[j]
        ks.append(f(u + h * inc))
    # stage 7 is evaluated at the 5th-order solution (FSAL)
    u_new = u + h * (_A[6][0] * ks[0] + _A[6][2] * ks[2] + _A[6][3] * ks[3] + _A[6][4] * ks[4] + _A[6][5] * ks[5])
    err_vec = h * sum(_E[i] * ks[i] for i in range(7) if _E[i] != 0.0)
    scale = opts.atol + opts.rtol * np.maximum(np.abs(u), np.abs(u_new))
    err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
    return u_new, ks[6], err


def _angle_crossing(t0, u0, f0, t1, u1, f1, th0, target):
    def angle(t):
        p = _hermite(t0, u0, f0, t1, u1, f1, t)
        return th0 + _wrap(math.atan2(p[1], p[0]) - math.atan2(u0[1], u0[0]))

    lo, hi = t0, t1
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if angle(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    return hi


def orbit_member(params: ManevParams, e: float, theta0: float = 0.0, revolutions: float = 3.0,
                 options: IntegratorOptions | None = None) -> Trajectory:
    """Integrate the Manev orbit that starts on the conic member ``(e, theta0)``."""
    init = initial_conditions_for_member(params, e, theta0)
    return integrate(lambda x, y: manev_force(params, x, y), init,
                     theta_end=theta0 + 2.0 * math.pi * revolutions, options=options,
                     potential=params.potential)


def tracking_error(traj: Trajectory, params: ManevParams, e: float, theta0: float) -> float:
    """Max ``|r - p / (1 + e cos b(theta - theta0))|`` along the trajectory."""
    model = params.p / (1.0 + e * np.cos(params.b * (traj.theta - theta0)))
    return float(np.max(np.abs(traj.r - model)))


# precession -------------------------------------------------------------------------


@dataclass
class PrecessionReport:
    perihelion_times: list
    perihelion_angles: list
    advances: list
    mean_advance: float
    spread: float
    predicted: float | None = None

    @property
    def relative_error(self):
        if self.predicted is None or self.predicted == 0.0:
            return None
        return abs(self.mean_advance - self.predicted) / abs(self.predicted)

    def as_dict(self):
        return {
            "perihelion_times": [float(v) for v in self.perihelion_times],
            "perihelion_angles": [float(v) for v in self.perihelion_angles],
            "advances": [float(v) for v in self.advances],
            "delta_varpi": self.mean_advance,
            "spread": self.spread,
            "predicted": self.predicted,
            "relative_error": self.relative_error,
        }


def _radial_velocity(x, y, vx, vy):
    return (x * vx + y * vy) / np.hypot(x, y)


def _radial_velocity_rate(x, y, vx, vy, ax, ay):
    r = np.hypot(x, y)
    vr = (x * vx + y * vy) / r
    return (vx * vx + vy * vy + x * ax + y * ay) / r - vr * vr / r


def measure_precession(traj: Trajectory, predicted: float | None = None) -> PrecessionReport:
    """Perihelion passages (radial velocity crossing from - to +) and the apse advance
    per radial period.

    Crossings are refined on the cubic Hermite interpolant of the radial
    velocity (endpoint values and rates from the stored accelerations) and the
    angle is interpolated the same way with ``dtheta/dt = h / r^2``.
    """
    if traj.ax is None or traj.ay is None:
        raise ValueError("trajectory needs accelerations for perihelion refinement")
    vr = _radial_velocity(traj.x, traj.y, traj.vx, traj.vy)
    dvr = _radial_velocity_rate(traj.x, traj.y, traj.vx, traj.vy, traj.ax, traj.ay)
    theta = traj.theta
    r2 = traj.x**2 + traj.y**2
    dth = (traj.x * traj.vy - traj.y * traj.vx) / r2
    times, angles = [], []
    for i in np.nonzero((vr[:-1] < 0.0) & (vr[1:] >= 0.0))[0]:
        t0, t1 = traj.t[i], traj.t[i + 1]

        def g(t, i=i, t0=t0, t1=t1):
            return _hermite(t0, vr[i], dvr[i], t1, vr[i + 1], dvr[i + 1], t)

        lo, hi = t0, t1
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4e-16 * max(1.0, abs(hi)):
                break
        ts = 0.5 * (lo + hi)
        times.append(float(ts))
        angles.append(float(_hermite(t0, theta[i], dth[i], t1, theta[i + 1], dth[i + 1], ts)))
    if len(angles) < 2:
        raise InsufficientRevolutions(f"found {len(angles)} perihelion passage(s); need at least 2")
    adv = [b - a - 2.0 * math.pi for a, b in zip(angles[:-1], angles[1:])]
    mean = (angles[-1] - angles[0]) / (len(angles) - 1) - 2.0 * math.pi
    spread = float(np.max(adv) - np.min(adv)) if len(adv) > 1 else 0.0
    return PrecessionReport(times, angles, adv, float(mean), spread, predicted)


def predicted_advance(b: float) -> float:
    """Apse advance per radial period of the precessing conic: ``2 pi (1/b - 1)``."""
    return 2.0 * math.pi * (1.0 / b - 1.0)


def mercury_b(arcsec_per_century: float = 43.0, orbits_per_century: float = 415.2) -> float:
    """Precession factor giving the stated perihelion advance."""
    dvarpi = arcsec_per_century * (math.pi / 648000.0) / orbits_per_century
    return 2.0 * math.pi / (2.0 * math.pi + dvarpi)
