"""Canonical hardness instances, ratio bounds, closed-form values, dual certificates.

The six canonical instances pin down the gap between online policies and the
benchmark: two prophet-style two-period instances (one of which also shows
why directly following an ex-ante solution fails), two homogeneous many-
volunteer instances behind the hardness curve, and two small instances that
separate the three ex-ante candidates. The kappa curve caps the competitive
ratio of every online policy as a function of the minimum discrete hazard
rate; the dual certificate verifies the per-volunteer value-to-go floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Deterministic,
    FractionalSolution,
    Geometric,
    Instance,
    ValidationError,
    check_feasible,
)

__all__ = [
    "CanonicalInstanceSpec",
    "make_instance",
    "parse_canonical_spec",
    "kappa",
    "sn_guarantee",
    "kappa_grid",
    "closed_form_value",
    "DualCertificate",
    "verify_dual_certificate",
]

KINDS = ("I1", "I2", "I3", "I4", "I5", "I6")


@dataclass(frozen=True)
class CanonicalInstanceSpec:
    """Selector for one canonical instance; params depend on the kind.

    I1: q, eps (eps <= (1-q)/100; q == 0 uses a deterministic duration of
        det_length >= 2, the zero-hazard analogue of the geometric case).
    I2, I3: n (volunteer count; the hazard rate is 1/n for I2).
    I4: q, eps (eps <= q/10).
    I5: eps. I6: no params.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown canonical instance {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))


def _two_period(lam11: float, lam22: float, p_row, dist) -> Instance:
    lam = np.zeros((2, 2))
    lam[0, 0] = lam11
    lam[1, 1] = lam22
    return Instance(arrival_rates=lam, match_probs=np.array([p_row]), dist=dist)


def make_instance(spec: CanonicalInstanceSpec) -> Instance:
    """Materialize a canonical instance exactly as defined."""
    p = spec.params
    kind = spec.kind

    if kind == "I1":
        q = float(p.get("q", 0.5))
        eps = float(p.get("eps", 1e-3))
        if not 0.0 <= q < 1.0:
            raise ValidationError(f"I1 needs q in [0, 1), got {q}")
        if eps <= 0.0 or eps > (1.0 - q) / 100.0:
            raise ValidationError(f"I1 needs 0 < eps <= (1-q)/100, got eps={eps}")
        if q == 0.0:
            det = int(p.get("det_length", 2))
            if det < 2:
                raise ValidationError("the zero-hazard I1 variant needs det_length >= 2")
            dist = Deterministic(det)
        else:
            dist = Geometric(q)
        return _two_period(1.0, eps / (1.0 - q), [eps, 1.0], dist)

    if kind == "I2":
        n = p.get("n", 4)
        if not (float(n).is_integer() and int(n) >= 1):
            raise ValidationError(f"I2 needs an integer volunteer count n >= 1, got {n}")
        n = int(n)
        q = 1.0 / n
        lam = np.full((n * n + 1, 1), q)
        lam[0, 0] = 1.0
        return Instance(arrival_rates=lam, match_probs=np.full((n, 1), q), dist=Geometric(q))

    if kind == "I3":
        n = p.get("n", 20)
        if not (float(n).is_integer() and int(n) >= 2):
            raise ValidationError(f"I3 needs an integer volunteer count n >= 2, got {n}")
        n = int(n)
        lam = np.full((n * n, 1), 1.0 / n)
        return Instance(arrival_rates=lam, match_probs=np.full((n, 1), 1.0 / n),
                        dist=Deterministic(n))

    if kind == "I4":
        q = float(p.get("q", 0.1))
        eps = float(p.get("eps", 1e-3))
        if not 0.0 < q <= 1.0:
            raise ValidationError(f"I4 needs q in (0, 1], got {q}")
        if eps <= 0.0 or eps > q / 10.0:
            raise ValidationError(f"I4 needs 0 < eps <= q/10, got eps={eps}")
        return _two_period(1.0, q, [eps, 1.0], Geometric(q))

    if kind == "I5":
        eps = float(p.get("eps", 1e-3))
        if not 0.0 < eps < 0.5:
            raise ValidationError(f"I5 needs eps in (0, 0.5), got {eps}")
        lam = np.array([[1.0, 0.0], [0.0, 1.0]])
        probs = np.array([[0.5, 0.0], [0.5, 0.5 - eps]])
        return Instance(arrival_rates=lam, match_probs=probs, dist=Deterministic(2))

    # I6
    if p:
        raise ValidationError("I6 takes no parameters")
    lam = np.array([[1.0, 0.0], [0.0, 1.0]])
    third = 1.0 / 3.0
    probs = np.array([
        [third, 0.0],
        [third, 0.0],
        [third, third - 1e-3],
        [0.0, 11.0 / 18.0],
    ])
    return Instance(arrival_rates=lam, match_probs=probs, dist=Deterministic(2))


def parse_canonical_spec(text: str) -> CanonicalInstanceSpec:
    """Parse 'I4' or 'I4:q=0.1,eps=1e-3' (case-insensitive) into a spec."""
    head, _, arg = text.strip().partition(":")
    kind = head.upper()
    if kind not in KINDS:
        raise ValidationError(f"unknown canonical instance {head!r}")
    params = {}
    if arg:
        for item in arg.split(","):
            key, _, value = item.partition("=")
            if not _:
                raise ValidationError(f"bad canonical parameter {item!r}")
            key = key.strip()
            try:
                params[key] = int(value) if key in ("n", "det_length") else float(value)
            except ValueError:
                raise ValidationError(f"bad canonical parameter {item!r}") from None
    return CanonicalInstanceSpec(kind=kind, params=params)


# ---------------------------------------------------------------------------
# Ratio bounds
# ---------------------------------------------------------------------------


def kappa(q: float) -> float:
    """Upper bound on any online policy's competitive ratio at hazard rate q.

    The two branches come from the prophet-style two-period instance and the
    homogeneous many-volunteer instance; the endpoints are pinned at 0.334
    (zero hazard) and 1 (unit hazard). Values of q below 1/16 outside {1/n}
    are evaluated by the same formula as an extrapolation.
    """
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"hazard rate must lie in [0, 1], got {q}")
    if q == 0.0:
        return 0.334
    if q == 1.0:
        return 1.0
    prophet = 1.0 / (2.0 - q)
    crowd = 1.0 + q - (q * (1.0 - q) / (math.log(1.0 / (1.0 - q)) * (1.0 + q))) \
        * (1.0 - math.exp(-1.0))
    return min(prophet, crowd)


def sn_guarantee(q: float) -> float:
    """Competitive ratio guaranteed by the sparse-notification policy."""
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"hazard rate must lie in [0, 1], got {q}")
    return (1.0 - math.exp(-1.0)) / (2.0 - q)


def kappa_grid(step: float = 0.05) -> list[dict]:
    """Rows (q, sn_lower, kappa) over the grid {0, step, 2 step, ..., 1}."""
    if not 0.0 < step <= 1.0:
        raise ValidationError(f"grid step must lie in (0, 1], got {step}")
    qs = []
    i = 0
    while True:
        q = i * step
        if q >= 1.0 - 1e-12:
            break
        qs.append(q)
        i += 1
    qs.append(1.0)
    return [{"q": q, "sn_lower": sn_guarantee(q), "kappa": kappa(q)} for q in qs]


# ---------------------------------------------------------------------------
# Closed-form reference values
# ---------------------------------------------------------------------------


def closed_form_value(kind: str, policy_name: str, params: dict) -> float:
    """Analytic expected values for canonical (instance, policy) pairs.

    Centralizes the constants used by verification suites so no test embeds a
    magic number inline. Supported pairs: (I1, lp_lower), (I1, online_opt),
    (I4, lp), (I4, follow_exante), (I4, sn), (I4, sdn), (I2, lp_lower).
    """
    key = (kind, policy_name)
    if key == ("I1", "lp_lower"):
        q, eps = float(params["q"]), float(params["eps"])
        return eps * (2.0 - q - (1.0 - q) * eps) / (1.0 - q)
    if key == ("I1", "online_opt"):
        q, eps = float(params["q"]), float(params["eps"])
        return eps / (1.0 - q)
    if key == ("I4", "lp"):
        return float(params["q"]) + float(params["eps"])
    if key == ("I4", "follow_exante"):
        q, eps = float(params["q"]), float(params["eps"])
        return eps + q * q
    if key == ("I4", "sn"):
        return float(params["q"])
    if key == ("I4", "sdn"):
        q, eps = float(params["q"]), float(params["eps"])
        return (eps + q) / (2.0 - q)
    if key == ("I2", "lp_lower"):
        return float(params["n"])
    raise ValidationError(f"no closed form for {kind} / {policy_name}")


# ---------------------------------------------------------------------------
# Dual certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualCertificate:
    """Certificate for the per-volunteer value-to-go floor.

    mu = 1/(2-q); gamma is constant at mu; alpha starts at 1 - mu and evolves
    by the balance between a volunteer's notification mass and the mass
    returning from inactivity. Feasibility means every alpha entry is
    nonnegative (within 1e-9), which holds for any feasible solution.
    """

    mu: float
    gamma: np.ndarray
    alpha: np.ndarray

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.alpha >= -1e-9))


def verify_dual_certificate(instance: Instance, solution: FractionalSolution,
                            v: int) -> tuple[DualCertificate, bool]:
    """Construct the dual certificate for volunteer v (1-based) and report feasibility."""
    report = check_feasible(instance, solution)
    if report:
        raise ValidationError(
            f"solution must be feasible to certify ({len(report)} violations)")
    if not 1 <= v <= instance.V:
        raise ValidationError(f"volunteer index {v} out of range 1..{instance.V}")
    T = instance.T
    q = instance.dist.mdhr()
    mu = 1.0 / (2.0 - q)
    weights = np.einsum("ts,st->t", instance.arrival_rates, solution.x[v - 1])
    g = [instance.dist.pmf(k) for k in range(1, T + 1)] if T else []
    alpha = np.empty(T)
    alpha[0] = 1.0 - mu
    for t in range(1, T):
        returned = sum(weights[tp] * g[t - tp - 1] for tp in range(t))
        alpha[t] = alpha[t - 1] - mu * (weights[t - 1] - returned)
    cert = DualCertificate(mu=mu, gamma=np.full(T, mu), alpha=alpha)
    return cert, cert.feasible
