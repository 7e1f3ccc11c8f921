"""Built-in precessing-conic families, the orbit sampler and the closed-form oracle.

Conventions
-----------
The polar angle used by the built-in families lives in ``[0, 2*pi)``: for
``b != 1`` the family function is only continuous away from that cut, so
grids should avoid the positive x-axis.

The oracle functions return the slope function ``gamma = f_y / f_x`` and its
derivatives with respect to ``z = y / x`` for the precessing family
``r (1 + e cos b(theta - theta0)) = p`` (and its square, which has the same
``gamma``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import exprlang, jets
from .jets import Jet

TWO_PI = 2.0 * math.pi

PRECESSING_CARTESIAN = "precessing_cartesian"
PRECESSING_BY_ECCENTRICITY = "precessing_by_eccentricity"
USER_EXPRESSION = "expression"
KINDS = (PRECESSING_CARTESIAN, PRECESSING_BY_ECCENTRICITY, USER_EXPRESSION)


class FamilyError(ValueError):
    pass


class OriginSingularity(FamilyError):
    pass


class UnboundedBranch(FamilyError):
    pass


class OracleSingularity(FamilyError):
    pass


@dataclass(frozen=True)
class FamilySpec:
    """A two-parametric family ``f(x, y, param) = value``.

    ``param`` names the in-equation parameter (third jet slot), ``value`` the
    family constant on the right-hand side.
    """

    kind: str
    constants: dict = field(default_factory=dict)
    expression: str | None = None
    param: str = "b"
    value: str = "c"
    description: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FamilyError(f"unknown family kind {self.kind!r}")
        if self.kind == USER_EXPRESSION:
            if not self.expression:
                raise FamilyError("expression family needs expression text")
            missing = exprlang.names(self.ast) - set(self.constants) - {self.param}
            if missing:
                raise FamilyError(f"unbound constants {sorted(missing)}")
            return
        c = self.constants
        for name in self.required_constants():
            if name not in c:
                raise FamilyError(f"{self.kind} needs constant {name!r}")
        if not 0.0 <= c["e"] < 1.0:
            raise FamilyError(f"eccentricity must lie in [0, 1), got {c['e']}")
        if "p" in c and not c["p"] > 0:
            raise FamilyError("p must be positive")
        if "b" in c and not c["b"] > 0:
            raise FamilyError("b must be positive")

    def required_constants(self):
        if self.kind == PRECESSING_CARTESIAN:
            return ("e", "theta0")
        if self.kind == PRECESSING_BY_ECCENTRICITY:
            return ("e", "p", "b")
        return ()

    @property
    def ast(self):
        return _parse_cached(self.expression)

    @property
    def homogeneous_hint(self) -> bool:
        return self.kind == PRECESSING_CARTESIAN


_AST_CACHE = {}


def _parse_cached(text):
    if text not in _AST_CACHE:
        _AST_CACHE[text] = exprlang.parse(text)
    return _AST_CACHE[text]


def precessing_cartesian(e: float, theta0: float) -> FamilySpec:
    return FamilySpec(
        PRECESSING_CARTESIAN,
        {"e": e, "theta0": theta0},
        param="b",
        value="p^2",
        description=f"(x^2+y^2)(1+e cos b(theta-theta0))^2 = p^2, e={e}, theta0={theta0}",
    )


def precessing_by_eccentricity(e: float, p: float = 1.0, b: float = 1.0) -> FamilySpec:
    """Family with the apse orientation as parameter and the eccentricity as value.

    ``e`` is only a reference value (used to place sample orbits); the family
    itself does not depend on it.
    """
    return FamilySpec(
        PRECESSING_BY_ECCENTRICITY,
        {"e": e, "p": p, "b": b},
        param="theta0",
        value="e",
        description=f"(p-r)/(r cos b(theta-theta0)) = e, p={p}, b={b}",
    )


def user_expression(text: str, constants=None, param: str = "b", value: str = "c") -> FamilySpec:
    return FamilySpec(USER_EXPRESSION, dict(constants or {}), expression=text, param=param, value=value)


def equivalent_expression(spec: FamilySpec) -> FamilySpec:
    """User-expression form of a built-in family.

    The expression language has no ``[0, 2 pi)`` angle, so the text uses
    ``atan2`` and is only equivalent on the upper half plane.
    """
    if spec.kind == PRECESSING_CARTESIAN:
        text = "(x^2+y^2)*(1+e*cos(b*(atan2(y,x)-theta0)))^2"
        return user_expression(text, spec.constants, param="b", value="p2")
    if spec.kind == PRECESSING_BY_ECCENTRICITY:
        text = "(p-sqrt(x^2+y^2))/(sqrt(x^2+y^2)*cos(b*(atan2(y,x)-theta0)))"
        consts = {k: v for k, v in spec.constants.items() if k != "e"}
        return user_expression(text, consts, param="theta0", value="e")
    return spec


def polar_angle(yj: Jet, xj: Jet) -> Jet:
    """``atan2`` jet shifted into ``[0, 2 pi)``."""
    th = jets.atan2(yj, xj)
    if th.value < 0.0:
        th = th + TWO_PI
    return th


def family_fraction(spec: FamilySpec, xj: Jet, yj: Jet, pj: Jet):
    """``(N, D)`` with ``f = N / D`` as jets of the given coordinate jets.

    Slope-type quantities only need ``N`` and ``D`` separately, which keeps
    them regular on the poles of ``f``.
    """
    if spec.kind == USER_EXPRESSION:
        env = dict(spec.constants)
        env.update(x=xj, y=yj)
        env[spec.param] = pj
        return exprlang.eval_env(spec.ast, env, xj.order), None
    if xj.value == 0.0 and yj.value == 0.0:
        raise OriginSingularity("polar angle undefined at the origin")
    c = spec.constants
    th = polar_angle(yj, xj)
    if spec.kind == PRECESSING_CARTESIAN:
        r2 = xj * xj + yj * yj
        g = 1.0 + c["e"] * jets.cos(pj * (th - c["theta0"]))
        return r2 * g * g, None
    # (p - r) / (r cos b(theta - theta0)), theta0 is the jet parameter
    r = jets.sqrt(xj * xj + yj * yj)
    return c["p"] - r, r * jets.cos(c["b"] * (th - pj))


def family_jets(spec: FamilySpec, xj: Jet, yj: Jet, pj: Jet) -> Jet:
    num, den = family_fraction(spec, xj, yj, pj)
    return num if den is None else num / den


def family_value(spec: FamilySpec, x: float, y: float, param: float, order: int = jets.DEFAULT_ORDER) -> Jet:
    """Jet of ``f`` at ``(x, y, param)``, the parameter seeded as third variable."""
    if spec.kind != USER_EXPRESSION and x == 0.0 and y == 0.0:
        raise OriginSingularity("polar angle undefined at the origin")
    return family_jets(spec, *jets.seed_point(x, y, param, order))


def family_constant(spec: FamilySpec, p: float, e: float) -> float:
    """Right-hand side value taken by members through the conic of size ``p``."""
    if spec.kind == PRECESSING_CARTESIAN:
        return p * p
    if spec.kind == PRECESSING_BY_ECCENTRICITY:
        return e
    raise FamilyError("no closed-form family constant for expression families")


def orbit_point(p: float, e: float, b: float, theta0: float, theta: float):
    """Point of the precessing conic at polar angle ``theta``; returns ``(x, y, r)``."""
    if not p > 0:
        raise FamilyError("p must be positive")
    den = 1.0 + e * math.cos(b * (theta - theta0))
    if den <= 0.0:
        raise UnboundedBranch(f"1 + e cos b(theta - theta0) = {den} at theta = {theta}")
    r = p / den
    return r * math.cos(theta), r * math.sin(theta), r


def orbit_radius(p, e, b, theta0, theta):
    return orbit_point(p, e, b, theta0, theta)[2]


# closed-form oracle ---------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticOracle:
    """Closed forms for ``gamma`` and its ``z``-derivatives.

    ``typeset_c2=True`` swaps in the variant of the quadratic coefficient
    with ``sin 2 theta`` where the exact expression has ``sin 2 theta'``;
    it is kept only so the two can be compared (see ``docs/validation.md``).
    """

    e: float
    theta0: float
    b: float
    typeset_c2: bool = False

    def angles(self, theta):
        tp = self.b * (theta - self.theta0)
        omega = math.atan2(self.b * self.e * math.sin(tp), 1.0 + self.e * math.cos(tp))
        return tp, omega

    def _denominator(self, theta, tp):
        e, b = self.e, self.b
        return math.cos(theta) + e * math.cos(theta) * math.cos(tp) + b * e * math.sin(theta) * math.sin(tp)

    def _check(self, theta, omega, floor=1e-12):
        if abs(math.cos(theta)) <= floor:
            raise OracleSingularity("cos(theta) vanishes")
        if abs(math.cos(theta - omega)) <= floor:
            raise OracleSingularity("cos(theta - omega) vanishes")

    def gamma(self, theta):
        _, omega = self.angles(theta)
        if abs(math.cos(theta - omega)) <= 1e-12:
            raise OracleSingularity("cos(theta - omega) vanishes")
        return math.tan(theta - omega)

    def Gamma(self, theta, r):
        e, b = self.e, self.b
        tp, omega = self.angles(theta)
        self._check(theta, omega)
        den = self._denominator(theta, tp)
        if abs(den) <= 1e-12:
            raise OracleSingularity("cos(theta) + e cos(theta) cos(theta') + b e sin(theta) sin(theta') vanishes")
        lead = -math.cos(omega) ** 2 / (r * math.cos(theta - omega) ** 2)
        return lead * (1.0 + e * math.cos(tp) - b * b * e * math.cos(tp)) / den

    def dgamma_dz(self, theta):
        e, b = self.e, self.b
        tp, omega = self.angles(theta)
        self._check(theta, omega)
        den = self._denominator(theta, tp)
        if abs(den) <= 1e-12:
            raise OracleSingularity("cos(theta) + e cos(theta) cos(theta') + e b sin(theta) sin(theta') vanishes")
        lead = math.cos(theta) ** 2 * math.cos(omega) / math.cos(theta - omega)
        return lead * (1.0 + e * (1.0 - b * b) * math.cos(tp)) / den

    def poly_coefficients(self, theta):
        e = self.e
        tp, omega = self.angles(theta)
        s2 = math.sin(2.0 * theta)
        cw = math.cos(omega)
        c3 = e * cw * s2
        s2p = s2 if self.typeset_c2 else math.sin(2.0 * tp)
        c2 = e * s2p * cw + math.sin(tp) * math.cos(theta) * math.cos(theta + omega)
        c1 = -s2 * cw * (math.cos(tp) + e)
        c0 = -2.0 * cw * math.sin(tp) * (e * math.cos(tp) + 1.0)
        return c0, c1, c2, c3

    def d2gamma_dz2(self, theta):
        e, b = self.e, self.b
        tp, omega = self.angles(theta)
        self._check(theta, omega)
        den = self._denominator(theta, tp)
        if abs(den) <= 1e-12:
            raise OracleSingularity("cos(theta) + e cos(theta) cos(theta') + e b sin(theta) sin(theta') vanishes")
        c0, c1, c2, c3 = self.poly_coefficients(theta)
        lead = e * b * math.cos(theta) ** 3 / math.cos(theta - omega)
        return lead * (c3 * b**3 + c2 * b**2 + c1 * b + c0) / den**2


def analytic_gamma(e, theta0, b, theta):
    return AnalyticOracle(e, theta0, b).gamma(theta)


def analytic_Gamma(e, theta0, b, theta, r=1.0):
    return AnalyticOracle(e, theta0, b).Gamma(theta, r)


def analytic_dgamma_dz(e, theta0, b, theta):
    return AnalyticOracle(e, theta0, b).dgamma_dz(theta)


def analytic_d2gamma_dz2(e, theta0, b, theta, typeset_c2=False):
    return AnalyticOracle(e, theta0, b, typeset_c2).d2gamma_dz2(theta)


def oracle_admissible(e, theta0, b, theta, margin=0.05) -> bool:
    """True away from the closed forms' singular lines."""
    _, omega = AnalyticOracle(e, theta0, b).angles(theta)
    return abs(math.cos(theta)) > margin and abs(math.cos(theta - omega)) > margin
