"""Admissible parameter region and derived Lebesgue/Sobolev exponents.

Everything here is exact: inputs are coerced to :class:`fractions.Fraction`
and every comparison is a rational comparison.  There are no tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Optional, Union

RationalLike = Union[int, str, Fraction]

__all__ = [
    "Params",
    "DerivedExponents",
    "Constraint",
    "AdmissibilityReport",
    "GammaInterval",
    "InfeasibleParams",
    "as_fraction",
    "check_constraints",
    "derive_exponents",
    "feasible_gamma_interval",
    "theoretical_decay",
]


class InfeasibleParams(ValueError):
    """Raised when exponents are requested for a point outside the region."""


def as_fraction(value: RationalLike | float) -> Fraction:
    """Coerce to an exact rational.

    Strings are parsed exactly (``"1.3"`` gives ``13/10``); floats are
    routed through ``repr`` so that ``1.3`` also gives ``13/10`` instead of
    its binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational")


@dataclass(frozen=True)
class Params:
    """The tuple ``(n, gamma, beta, k)``."""

    n: int
    gamma: Fraction
    beta: Fraction
    k: Fraction = Fraction(1)

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ValueError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("gamma", "beta", "k"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.n < 1:
            raise ValueError(f"spatial dimension must be >= 1, got {self.n}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")


@dataclass(frozen=True)
class DerivedExponents:
    """Exponents used to close the contraction estimate.

    ``p4`` doubles as the exponent written ``p_5`` in the H^{beta-2} bound;
    both are ``6n/(3n - 2 gamma)``.
    """

    q: Fraction
    mu: Fraction
    r: Fraction
    p: Fraction
    s: Fraction
    q_conj: Fraction
    r_conj: Fraction
    p1: Fraction
    p3: Fraction
    s3: Fraction
    p4: Fraction
    alpha: Fraction
    alpha3: Fraction
    delta: Fraction

    def as_dict(self) -> dict[str, Fraction]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Constraint:
    """One named inequality ``lhs <op> rhs`` with its verdict."""

    name: str
    lhs: Fraction
    op: str
    rhs: Optional[Fraction]  # None stands for +infinity
    satisfied: bool
    group: str = "region"

    def describe(self) -> str:
        rhs = "inf" if self.rhs is None else str(self.rhs)
        return f"{self.name}: {self.lhs} {self.op} {rhs}"


@dataclass(frozen=True)
class AdmissibilityReport:
    params: Params
    feasible: bool
    constraints: tuple[Constraint, ...]
    derived: Optional[DerivedExponents]
    delta: Fraction
    delta_positive: bool
    exponent_checks: tuple[Constraint, ...] = field(default=())

    @property
    def region_feasible(self) -> bool:
        """Verdict of the literal (gamma, beta) region alone, without the derived chain."""
        return all(c.satisfied for c in self.constraints if c.group == "region")

    @property
    def violations(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if not c.satisfied)


@dataclass(frozen=True)
class GammaInterval:
    """Open interval ``(lower, upper)``; empty when ``upper <= lower``."""

    lower: Fraction
    upper: Fraction

    @property
    def empty(self) -> bool:
        return self.upper <= self.lower

    def __contains__(self, gamma) -> bool:
        g = as_fraction(gamma)
        return self.lower < g < self.upper


_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _check(name, lhs, op, rhs, group="region") -> Constraint:
    if rhs is None:
        ok = op in ("<", "<=")
    else:
        ok = _OPS[op](lhs, rhs)
    return Constraint(name, Fraction(lhs), op, None if rhs is None else Fraction(rhs), ok, group)


def feasible_gamma_interval(n: int) -> GammaInterval:
    if n < 1:
        raise ValueError(f"spatial dimension must be >= 1, got {n}")
    upper = min(Fraction(2 * (n + 1), n + 2), Fraction(3 * n - 2, n + 2))
    return GammaInterval(Fraction(1), upper)


def theoretical_decay(n: int, beta: RationalLike) -> Fraction:
    """``2 n beta / (n + 2) - 2``.  Not clipped; may be zero or negative."""
    if n < 1:
        raise ValueError(f"spatial dimension must be >= 1, got {n}")
    beta = as_fraction(beta)
    return Fraction(2 * n) * beta / (n + 2) - 2


def beta_interval(n: int, gamma: RationalLike) -> tuple[Fraction, Fraction]:
    g = as_fraction(gamma)
    lo = Fraction(n + 2) * (g + 1) / (4 * n) + Fraction(1, 2)
    hi = Fraction(n + 2) * (g + 1) / (2 * n)
    return lo, hi


def _inverse_q(n: int, gamma: Fraction, beta: Fraction) -> Fraction:
    return 2 * beta / (n + 2) + Fraction(1, 2) - (gamma + 1) / n


def _exponents(n: int, gamma: Fraction, beta: Fraction) -> DerivedExponents:
    # Caller guarantees 1/q > 0 and q, r, p, ... finite and positive.
    q = 1 / _inverse_q(n, gamma, beta)
    one_minus = 1 - 2 / q
    mu = Fraction(1, 2) * (1 + Fraction(n, 2)) * one_minus
    r = 2 / (Fraction(n, 2) * one_minus)
    p = 2 / (2 - 2 / q - gamma / n)
    s = 2 / (1 - 2 / r)
    p1 = 3 / (Fraction(3, 2) - gamma / n)
    p3 = 2 / (Fraction(3, 2) - 1 / q - (gamma + 1) / n)
    s3 = 2 / (1 - 1 / r)
    p4 = Fraction(6 * n) / (3 * n - 2 * gamma)
    return DerivedExponents(
        q=q,
        mu=mu,
        r=r,
        p=p,
        s=s,
        q_conj=q / (q - 1),
        r_conj=r / (r - 1),
        p1=p1,
        p3=p3,
        s3=s3,
        p4=p4,
        alpha=(1 + Fraction(n, 2)) * (1 - 2 / p),
        alpha3=(1 + Fraction(n, 2)) * (1 - 2 / p3),
        delta=theoretical_decay(n, beta),
    )


def _exponent_checks(n: int, gamma: Fraction, beta: Fraction, d: DerivedExponents):
    """Auxiliary inequalities the estimates lean on.

    Reported alongside the region checks, but they do not enter the
    feasibility verdict.
    """
    half_n = Fraction(n, 2)
    sobolev_p4 = None if n <= 2 * beta else Fraction(2 * n) / (n - 2 * beta)
    return (
        _check("alpha <= beta", d.alpha, "<=", beta, "exponent"),
        _check("alpha3 <= beta", d.alpha3, "<=", beta, "exponent"),
        _check("decay(p) > 1/s", half_n * (1 - 2 / d.p), ">", 1 / d.s, "exponent"),
        _check("decay(p3) > 1/s3", half_n * (1 - 2 / d.p3), ">", 1 / d.s3, "exponent"),
        _check("p > 2", d.p, ">", 2, "exponent"),
        _check("p1 > 2", d.p1, ">", 2, "exponent"),
        _check("p3 > 2", d.p3, ">", 2, "exponent"),
        _check("s3 > 2", d.s3, ">", 2, "exponent"),
        _check("p4 > 2", d.p4, ">", 2, "exponent"),
        _check("p4 <= 2n/(n-2beta)", d.p4, "<=", sobolev_p4, "exponent"),
        _check("decay(p4) >= 1/3", half_n * (1 - 2 / d.p4), ">=", Fraction(1, 3), "exponent"),
        _check("(1+n/2)(1-2/p4) <= beta", (1 + half_n) * (1 - 2 / d.p4), "<=", beta, "exponent"),
    )


def check_constraints(params: Params) -> AdmissibilityReport:
    n, gamma, beta = params.n, params.gamma, params.beta
    interval = feasible_gamma_interval(n)
    upper_a = Fraction(2 * (n + 1), n + 2)
    upper_b = Fraction(3 * n - 2, n + 2)
    b_lo, b_hi = beta_interval(n, gamma)

    checks = [
        _check("empty gamma interval", interval.lower, "<", interval.upper),
        _check("gamma > 1", gamma, ">", 1),
        _check("gamma < 2(n+1)/(n+2)", gamma, "<", upper_a),
        _check("gamma < (3n-2)/(n+2)", gamma, "<", upper_b),
        _check("gamma < n", gamma, "<", n),
        _check("beta > (n+2)(gamma+1)/(4n) + 1/2", beta, ">", b_lo),
        _check("beta < (n+2)(gamma+1)/(2n)", beta, "<", b_hi),
    ]

    inv_q = _inverse_q(n, gamma, beta)
    q_ok = _check("1/q > 0", inv_q, ">", 0, "derived")
    checks.append(q_ok)
    derived = None
    if q_ok.satisfied:
        q = 1 / inv_q
        mu = Fraction(1, 2) * (1 + Fraction(n, 2)) * (1 - 2 / q)
        denom = n + 2 * (1 - gamma)
        q_upper = Fraction(2 * n) / denom if denom > 0 else None
        checks += [
            _check("beta >= 1", beta, ">=", 1, "derived"),
            _check("beta <= 2", beta, "<=", 2, "derived"),
            _check("q > 2", q, ">", 2, "derived"),
            _check("q < 2n/(n+2(1-gamma))", q, "<", q_upper, "derived"),
            _check("gamma < 3n beta/(n+2)", gamma, "<", Fraction(3 * n) * beta / (n + 2), "derived"),
            _check("mu + beta - 2 <= 0", mu + beta - 2, "<=", 0, "derived"),
            _check("mu <= beta - 1", mu, "<=", beta - 1, "derived"),
            _check("mu > 0", mu, ">", 0, "derived"),
            _check("mu <= 1/2", mu, "<=", Fraction(1, 2), "derived"),
        ]

    feasible = all(c.satisfied for c in checks)
    exponent_checks: tuple[Constraint, ...] = ()
    if feasible:
        derived = _exponents(n, gamma, beta)
        exponent_checks = _exponent_checks(n, gamma, beta, derived)
    delta = theoretical_decay(n, beta)
    return AdmissibilityReport(
        params=params,
        feasible=feasible,
        constraints=tuple(checks),
        derived=derived,
        delta=delta,
        delta_positive=delta > 0,
        exponent_checks=exponent_checks,
    )


def derive_exponents(params: Params) -> DerivedExponents:
    report = check_constraints(params)
    if not report.feasible:
        names = ", ".join(c.name for c in report.violations)
        raise InfeasibleParams(f"parameters outside the admissible region ({names})")
    return report.derived


def fraction_json(value: Optional[Fraction]):
    """Render a rational as ``{"exact": "num/den", "approx": float}``."""
    if value is None:
        return {"exact": "inf", "approx": None}
    return {"exact": f"{value.numerator}/{value.denominator}", "approx": float(value)}


def report_to_json(report: AdmissibilityReport) -> dict:
    def constraint(c: Constraint) -> dict:
        return {
            "name": c.name,
            "group": c.group,
            "lhs": fraction_json(c.lhs),
            "op": c.op,
            "rhs": fraction_json(c.rhs),
            "satisfied": c.satisfied,
        }

    p = report.params
    return {
        "params": {
            "n": p.n,
            "gamma": fraction_json(p.gamma),
            "beta": fraction_json(p.beta),
            "k": fraction_json(p.k),
        },
        "feasible": report.feasible,
        "region_feasible": report.region_feasible,
        "violations": [constraint(c) for c in report.violations],
        "constraints": [constraint(c) for c in report.constraints],
        "exponent_checks": [constraint(c) for c in report.exponent_checks],
        "derived": None
        if report.derived is None
        else {k: fraction_json(v) for k, v in report.derived.as_dict().items()},
        "delta": fraction_json(report.delta),
        "delta_positive": report.delta_positive,
        "gamma_interval": {
            k: fraction_json(v)
            for k, v in zip(("lower", "upper"), _interval_tuple(p.n))
        },
    }


def _interval_tuple(n):
    iv = feasible_gamma_interval(n)
    return iv.lower, iv.upper
