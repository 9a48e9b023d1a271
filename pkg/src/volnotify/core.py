"""Problem primitives: inter-activity distributions, instances, fractional solutions.

A problem instance couples time-varying task arrival rates, per-pair match
probabilities, and the distribution of the inactivity period that a
notification triggers. Everything here is immutable after construction and
all evaluation helpers are pure functions, so instances and solutions can be
shared freely across concurrent readers.

Indexing convention: public operations take 1-based volunteer/type/period
indices (v, s, t) matching the usual mathematical notation; the underlying
arrays are 0-based with shapes (T, S) for arrival rates, (V, S) for match
probabilities, and (V, S, T) for notification tensors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

FEASIBILITY_TOL = 1e-7  # absolute slack granted to solver output

__all__ = [
    "ValidationError",
    "InterActivityDistribution",
    "Geometric",
    "Deterministic",
    "Tabulated",
    "Instance",
    "FractionalSolution",
    "Violation",
    "check_feasible",
    "evaluate_f",
    "evaluate_fv",
    "survival_matrix",
    "instance_to_json",
    "instance_from_json",
    "dist_to_dict",
    "dist_from_dict",
]


class ValidationError(ValueError):
    """Raised when instance data, parameters, or solution tensors are malformed."""


# ---------------------------------------------------------------------------
# Inter-activity time distributions
# ---------------------------------------------------------------------------


class InterActivityDistribution:
    """Distribution of the inactivity duration triggered by notifying an active volunteer.

    Durations are integers >= 1. Subclasses provide the pmf, the cdf, the
    minimum discrete hazard rate (the smallest per-period probability of
    returning to the active state, with 0/0 hazards treated as 1), and a
    sampler that inverts the cdf on a single uniform draw.
    """

    def pmf(self, tau: int) -> float:
        raise NotImplementedError

    def cdf(self, tau: int) -> float:
        raise NotImplementedError

    def sf(self, tau: int) -> float:
        """Survival function 1 - cdf(tau); sf(0) == 1."""
        return 1.0 - self.cdf(tau)

    def mdhr(self) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    @property
    def support_max(self) -> int | None:
        """Largest duration with positive mass, or None when unbounded."""
        raise NotImplementedError

    def sample(self, rng) -> int:
        raise NotImplementedError

    @staticmethod
    def _require_positive(tau: int) -> None:
        if tau < 1:
            raise ValidationError(f"inactivity duration must be >= 1, got {tau}")


@dataclass(frozen=True)
class Geometric(InterActivityDistribution):
    """Memoryless duration: pmf(tau) = q (1-q)^(tau-1) on an unbounded support."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValidationError(f"geometric success probability must be in (0, 1], got {self.q}")

    def pmf(self, tau: int) -> float:
        self._require_positive(tau)
        return self.q * (1.0 - self.q) ** (tau - 1)

    def cdf(self, tau: int) -> float:
        # Closed form rather than summation: exact and O(1).
        if tau <= 0:
            return 0.0
        return 1.0 - (1.0 - self.q) ** tau

    def mdhr(self) -> float:
        # Hazard is constant at q for every duration.
        return self.q

    def mean(self) -> float:
        return 1.0 / self.q

    @property
    def support_max(self) -> int | None:
        return None

    def sample(self, rng) -> int:
        if self.q >= 1.0:
            return 1
        u = rng.random()
        # Smallest z with cdf(z) >= u; untruncated inverse-cdf on one draw.
        z = math.ceil(math.log1p(-u) / math.log1p(-self.q))
        return max(1, z)


@dataclass(frozen=True)
class Deterministic(InterActivityDistribution):
    """Fixed duration of d periods."""

    d: int

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ValidationError(f"deterministic length must be an integer >= 1, got {self.d}")

    def pmf(self, tau: int) -> float:
        self._require_positive(tau)
        return 1.0 if tau == self.d else 0.0

    def cdf(self, tau: int) -> float:
        return 1.0 if tau >= self.d else 0.0

    def mdhr(self) -> float:
        # Hazard is 0 before d and 1 at d, so the minimum is 0 unless d == 1.
        return 1.0 if self.d == 1 else 0.0

    def mean(self) -> float:
        return float(self.d)

    @property
    def support_max(self) -> int | None:
        return self.d

    def sample(self, rng) -> int:
        return self.d


@dataclass(frozen=True)
class Tabulated(InterActivityDistribution):
    """Explicit pmf on durations 1..len(probs); masses must sum to 1 within 1e-9."""

    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if not probs:
            raise ValidationError("tabulated distribution needs at least one mass")
        if any(p < 0.0 for p in probs):
            raise ValidationError("tabulated masses must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValidationError(f"tabulated masses must sum to 1, got {sum(probs)}")
        object.__setattr__(self, "probs", probs)
        cum = []
        acc = 0.0
        for p in probs:
            acc += p
            cum.append(acc)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", tuple(cum))

    def pmf(self, tau: int) -> float:
        self._require_positive(tau)
        if tau > len(self.probs):
            return 0.0
        return self.probs[tau - 1]

    def cdf(self, tau: int) -> float:
        if tau <= 0:
            return 0.0
        if tau >= len(self.probs):
            return 1.0
        return self._cum[tau - 1]

    def mdhr(self) -> float:
        # Skip durations whose survival is already exhausted (the 0/0 case,
        # treated as hazard 1); if everything is skipped the rate is 1.
        best = None
        surv = 1.0
        for p in self.probs:
            if surv > 1e-12:
                h = p / surv
                best = h if best is None else min(best, h)
            surv -= p
        if best is None:
            return 1.0
        return min(max(best, 0.0), 1.0)

    def mean(self) -> float:
        return sum((i + 1) * p for i, p in enumerate(self.probs))

    @property
    def support_max(self) -> int | None:
        return len(self.probs)

    def sample(self, rng) -> int:
        u = rng.random()
        for tau, c in enumerate(self._cum, start=1):
            if u < c:
                return tau
        return len(self.probs)


# ---------------------------------------------------------------------------
# Instance and fractional solutions
# ---------------------------------------------------------------------------


def _readonly_array(values, shape_name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValidationError(f"{shape_name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """One problem instance: arrival rates (T x S), match probabilities (V x S), duration distribution.

    At most one task arrives per period, so every arrival-rate row must sum to
    at most 1; the slack is the no-arrival probability of that period. Rows
    that violate the sum constraint are rejected outright rather than
    renormalized, so stored instances are reproduced exactly.
    """

    arrival_rates: np.ndarray
    match_probs: np.ndarray
    dist: InterActivityDistribution

    def __post_init__(self):
        lam = _readonly_array(self.arrival_rates, "arrival_rates", 2)
        p = _readonly_array(self.match_probs, "match_probs", 2)
        if lam.shape[1] != p.shape[1]:
            raise ValidationError(
                f"arrival_rates has {lam.shape[1]} task types but match_probs has {p.shape[1]}"
            )
        if lam.shape[0] < 1 or p.shape[0] < 1 or lam.shape[1] < 1:
            raise ValidationError("instance needs at least one period, volunteer, and task type")
        if np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ValidationError("arrival rates must lie in [0, 1]")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValidationError("match probabilities must lie in [0, 1]")
        row_sums = lam.sum(axis=1)
        bad = np.nonzero(row_sums > 1.0 + 1e-9)[0]
        if bad.size:
            t = int(bad[0])
            raise ValidationError(
                f"arrival rates in period {t + 1} sum to {row_sums[t]:.12g} > 1"
            )
        if not isinstance(self.dist, InterActivityDistribution):
            raise ValidationError("dist must be an InterActivityDistribution")
        object.__setattr__(self, "arrival_rates", lam)
        object.__setattr__(self, "match_probs", p)

    @property
    def T(self) -> int:
        return self.arrival_rates.shape[0]

    @property
    def V(self) -> int:
        return self.match_probs.shape[0]

    @property
    def S(self) -> int:
        return self.arrival_rates.shape[1]

    def no_arrival_rates(self) -> np.ndarray:
        """Per-period probability that no task arrives (the row slack)."""
        return np.clip(1.0 - self.arrival_rates.sum(axis=1), 0.0, 1.0)


@dataclass(frozen=True)
class FractionalSolution:
    """A V x S x T tensor of notification probabilities."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly_array(self.x, "solution tensor", 3))

    @classmethod
    def zeros(cls, instance: Instance) -> "FractionalSolution":
        return cls(np.zeros((instance.V, instance.S, instance.T)))

    def shape_matches(self, instance: Instance) -> bool:
        return self.x.shape == (instance.V, instance.S, instance.T)


def _require_shape(instance: Instance, solution: FractionalSolution) -> np.ndarray:
    if not solution.shape_matches(instance):
        raise ValidationError(
            f"solution tensor shape {solution.x.shape} does not match instance "
            f"({instance.V}, {instance.S}, {instance.T})"
        )
    return solution.x


def survival_matrix(dist: InterActivityDistribution, T: int) -> np.ndarray:
    """Lower-triangular (T x T) matrix M[t, tau] = P(duration > t - tau) for tau <= t (0-based)."""
    sf = np.array([dist.sf(k) for k in range(T)])
    idx = np.subtract.outer(np.arange(T), np.arange(T))
    return np.where(idx >= 0, sf[np.clip(idx, 0, T - 1)], 0.0)


@dataclass(frozen=True)
class Violation:
    """One feasibility violation; kind is 'range' (box) or 'load' (notification budget)."""

    kind: str
    v: int
    s: int | None
    t: int
    value: float


def check_feasible(instance: Instance, solution: FractionalSolution,
                   tol: float = FEASIBILITY_TOL) -> list[Violation]:
    """Report violations of the box constraints and per-volunteer notification budgets.

    The budget constraint requires, for every volunteer v and period t, that
    the expected number of v's notifications still pending (weighted by the
    probability the triggered inactivity outlasts period t) not exceed 1.
    Returns an empty list iff the solution is feasible within ``tol``.
    """
    x = _require_shape(instance, solution)
    out: list[Violation] = []
    bad = np.argwhere((x < -tol) | (x > 1.0 + tol))
    for v, s, t in bad:
        out.append(Violation("range", int(v) + 1, int(s) + 1, int(t) + 1, float(x[v, s, t])))
    # loads[v, t] = sum_{tau <= t} sum_s lambda[tau, s] x[v, s, tau] sf(t - tau)
    weights = np.einsum("ts,vst->vt", instance.arrival_rates, x)
    loads = weights @ survival_matrix(instance.dist, instance.T).T
    for v, t in np.argwhere(loads > 1.0 + tol):
        out.append(Violation("load", int(v) + 1, None, int(t) + 1, float(loads[v, t])))
    return out


def evaluate_f(instance: Instance, solution: FractionalSolution) -> float:
    """Expected completions if volunteers were always active and notified per the tensor.

    Sums lambda[t, s] * (1 - prod_v (1 - x[v, s, t] p[v, s])) over all arrival slots.
    """
    x = _require_shape(instance, solution)
    miss = np.prod(1.0 - x * instance.match_probs[:, :, None], axis=0)  # (S, T)
    return float(np.sum(instance.arrival_rates * (1.0 - miss).T))


def evaluate_fv(instance: Instance, solution: FractionalSolution, v: int) -> float:
    """Volunteer v's contribution when lower-indexed volunteers take priority (v is 1-based).

    The per-slot term is lambda[t, s] * prod_{u<v} (1 - p[u, s] x[u, s, t]) * p[v, s] x[v, s, t];
    summing contributions over all v recovers evaluate_f.
    """
    x = _require_shape(instance, solution)
    if not 1 <= v <= instance.V:
        raise ValidationError(f"volunteer index {v} out of range 1..{instance.V}")
    i = v - 1
    prefix = np.prod(1.0 - x[:i] * instance.match_probs[:i, :, None], axis=0)  # (S, T)
    own = x[i] * instance.match_probs[i][:, None]  # (S, T)
    return float(np.sum(instance.arrival_rates * (prefix * own).T))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def dist_to_dict(dist: InterActivityDistribution) -> dict:
    if isinstance(dist, Geometric):
        return {"type": "geometric", "q": dist.q}
    if isinstance(dist, Deterministic):
        return {"type": "deterministic", "d": dist.d}
    if isinstance(dist, Tabulated):
        return {"type": "tabulated", "probs": list(dist.probs)}
    raise ValidationError(f"cannot serialize distribution {dist!r}")


def dist_from_dict(data: dict) -> InterActivityDistribution:
    try:
        kind = data["type"]
    except (TypeError, KeyError):
        raise ValidationError("distribution object needs a 'type' field") from None
    if kind == "geometric":
        return Geometric(float(data["q"]))
    if kind == "deterministic":
        return Deterministic(int(data["d"]))
    if kind == "tabulated":
        return Tabulated(tuple(data["probs"]))
    raise ValidationError(f"unknown distribution type {kind!r}")


def instance_to_json(instance: Instance, indent: int | None = None) -> str:
    """Serialize an instance; rates round-trip bit-exactly as decimal literals.

    Arrival rates are written as sparse 1-indexed [t, s, rate] triples when
    more than half the slots are empty, and as a dense T x S array otherwise.
    """
    lam = instance.arrival_rates
    nonzero = np.argwhere(lam != 0.0)
    # A sparse triple list that is exactly T x 3 would be indistinguishable
    # from a dense matrix with S == 3, so force dense in that case.
    ambiguous = instance.S == 3 and nonzero.shape[0] == instance.T
    if nonzero.shape[0] * 2 <= lam.size and not ambiguous:
        arrivals = [[int(t) + 1, int(s) + 1, float(lam[t, s])] for t, s in nonzero]
    else:
        arrivals = [list(map(float, row)) for row in lam]
    doc = {
        "T": instance.T,
        "V": instance.V,
        "S": instance.S,
        "arrivals": arrivals,
        "match": [list(map(float, row)) for row in instance.match_probs],
        "dist": dist_to_dict(instance.dist),
    }
    return json.dumps(doc, indent=indent, sort_keys=True)


def instance_from_json(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid instance JSON: {exc}") from None
    try:
        T, V, S = int(doc["T"]), int(doc["V"]), int(doc["S"])
        arrivals = doc["arrivals"]
        match = doc["match"]
        dist = dist_from_dict(doc["dist"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"instance JSON missing field: {exc}") from None
    lam = np.zeros((T, S))
    if arrivals and all(len(row) == 3 for row in arrivals) and (T, S) != (len(arrivals), 3):
        seen = set()
        for t, s, rate in arrivals:
            t, s = int(t), int(s)
            if not (1 <= t <= T and 1 <= s <= S):
                raise ValidationError(f"arrival triple ({t}, {s}) out of range")
            if (t, s) in seen:
                raise ValidationError(f"duplicate arrival triple for period {t}, type {s}")
            seen.add((t, s))
            lam[t - 1, s - 1] = float(rate)
    else:
        lam = np.array(arrivals, dtype=float)
        if lam.shape != (T, S):
            raise ValidationError(f"dense arrivals must be {T} x {S}, got {lam.shape}")
    p = np.array(match, dtype=float)
    if p.shape != (V, S):
        raise ValidationError(f"match matrix must be {V} x {S}, got {p.shape}")
    return Instance(arrival_rates=lam, match_probs=p, dist=dist)
