"""Notification policies: plan-based randomized policies, belief tracking, heuristics.

The sparse-notification policy prunes an ex-ante solution with one backward
dynamic program per volunteer, processed in priority order; the scaled-down
policy divides the ex-ante probabilities by the exact activity probability it
induces. Both are non-adaptive: their plans are computed offline, are
immutable, and can be shared across concurrent simulation workers. Heuristic
policies are adaptive through an exact per-episode belief filter over each
volunteer's hidden active/inactive state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FractionalSolution,
    Instance,
    ValidationError,
    check_feasible,
)
from . import exante

__all__ = [
    "SNPlan",
    "sn_offline",
    "sn_decide",
    "SDNPlan",
    "sdn_offline",
    "sdn_decide",
    "BeliefState",
    "belief_step",
    "belief_notify",
    "eligible_volunteers",
    "heuristic_decide",
    "Policy",
    "StaticPlanPolicy",
    "HeuristicPolicy",
    "RollingHorizonPolicy",
    "parse_policy_spec",
    "make_policy",
    "POLICY_GRAMMAR",
]


def _require_feasible(instance: Instance, x_star: FractionalSolution) -> np.ndarray:
    report = check_feasible(instance, x_star)
    if report:
        first = report[0]
        raise ValidationError(
            f"ex-ante solution is infeasible ({len(report)} violations; first: {first})")
    return x_star.x


# ---------------------------------------------------------------------------
# Sparse notification policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SNPlan:
    """Sparsified notification plan.

    x_tilde keeps each ex-ante entry or zeroes it; J[v, t] is volunteer v's
    value-to-go from period t+1 on (0-based, J[v, T] == 0); r[v, s, t] is the
    per-arrival reward credited to v given the already-fixed plans of
    higher-priority volunteers.
    """

    x_tilde: np.ndarray
    J: np.ndarray
    r: np.ndarray

    @property
    def V(self) -> int:
        return self.x_tilde.shape[0]

    @property
    def T(self) -> int:
        return self.x_tilde.shape[2]


def sn_offline(instance: Instance, x_star: FractionalSolution) -> SNPlan:
    """Run the per-volunteer backward dynamic programs that sparsify x_star.

    For each volunteer in priority order, notifying at (s, t) is kept exactly
    when the immediate reward plus the expected value after reactivating is at
    least the value of staying active into t+1 (kept on ties). Reactivations
    past the horizon earn nothing, and periods without an arrival contribute
    the no-arrival mass times the next period's value.
    """
    x = _require_feasible(instance, x_star)
    V, S, T = instance.V, instance.S, instance.T
    lam = instance.arrival_rates
    lam0 = instance.no_arrival_rates()
    g = np.array([instance.dist.pmf(k) for k in range(1, T + 1)]) if T else np.zeros(0)

    x_tilde = np.zeros((V, S, T))
    J = np.zeros((V, T + 1))
    r = np.zeros((V, S, T))
    prefix = np.ones((S, T))  # prod over higher-priority volunteers of (1 - x_tilde p)
    for v in range(V):
        r[v] = instance.match_probs[v][:, None] * prefix
        for t in range(T - 1, -1, -1):
            future = 0.0
            for tau in range(t + 1, T):
                future += g[tau - t - 1] * J[v, tau]
            stay = J[v, t + 1]
            value = lam0[t] * stay
            for s in range(S):
                notify_value = r[v, s, t] + future
                if notify_value >= stay:
                    x_tilde[v, s, t] = x[v, s, t]
                    value += lam[t, s] * (
                        (1.0 - x[v, s, t]) * stay + x[v, s, t] * notify_value)
                else:
                    value += lam[t, s] * stay
            J[v, t] = value
        prefix = prefix * (1.0 - instance.match_probs[v][:, None] * x_tilde[v])
    return SNPlan(x_tilde=x_tilde, J=J, r=r)


def sn_decide(plan: SNPlan, t: int, s: int | None) -> np.ndarray:
    """Notification probabilities for an arrival of type s at period t (1-based); stateless."""
    if s is None:
        return np.zeros(0)
    if not 1 <= t <= plan.T:
        raise ValidationError(f"period {t} out of range 1..{plan.T}")
    if not 1 <= s <= plan.x_tilde.shape[1]:
        raise ValidationError(f"task type {s} out of range 1..{plan.x_tilde.shape[1]}")
    return plan.x_tilde[:, s - 1, t - 1].copy()


# ---------------------------------------------------------------------------
# Scaled-down notification policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SDNPlan:
    """Activity probabilities and scale data for the scaled-down policy."""

    beta: np.ndarray  # (V, T); beta[v, 0] == 1
    q: float
    x_star: np.ndarray

    @property
    def T(self) -> int:
        return self.beta.shape[1]


def sdn_offline(instance: Instance, x_star: FractionalSolution) -> SDNPlan:
    """Compute each volunteer's exact activity probability under the policy itself.

    beta[v, t] discounts 1 by the chance an earlier scaled-down notification
    still keeps v inactive at t. Feasibility of x_star guarantees
    beta >= 1/(2 - q); a violation beyond 1e-9 is reported as an error.
    """
    x = _require_feasible(instance, x_star)
    V, T = instance.V, instance.T
    q = instance.dist.mdhr()
    mu = 1.0 / (2.0 - q)
    weights = np.einsum("ts,vst->vt", instance.arrival_rates, x)  # (V, T)
    sf = np.array([instance.dist.sf(k) for k in range(T + 1)])
    beta = np.ones((V, T))
    for t in range(1, T):
        # survival offsets are t - t' >= 1 for earlier periods t' < t
        beta[:, t] = 1.0 - mu * (weights[:, :t] @ sf[t:0:-1])
    floor = mu - 1e-9
    if np.any(beta < floor):
        v, t = np.argwhere(beta < floor)[0]
        raise ValidationError(
            f"activity probability beta[{v + 1}, {t + 1}] = {beta[v, t]:.12g} "
            f"fell below 1/(2-q) = {mu:.12g}")
    probs = np.divide(x, (2.0 - q) * beta[:, None, :])
    if np.any(probs > 1.0 + 1e-9):
        raise ValidationError("scaled-down notification probability exceeded 1")
    return SDNPlan(beta=beta, q=q, x_star=x)


def sdn_decide(plan: SDNPlan, t: int, s: int | None) -> np.ndarray:
    """Notification probabilities x*[v, s, t] / ((2-q) beta[v, t]); non-adaptive."""
    if s is None:
        return np.zeros(0)
    if not 1 <= t <= plan.T:
        raise ValidationError(f"period {t} out of range 1..{plan.T}")
    if not 1 <= s <= plan.x_star.shape[1]:
        raise ValidationError(f"task type {s} out of range 1..{plan.x_star.shape[1]}")
    raw = plan.x_star[:, s - 1, t - 1] / ((2.0 - plan.q) * plan.beta[:, t - 1])
    return np.clip(raw, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Belief filter
# ---------------------------------------------------------------------------


@dataclass
class BeliefState:
    """Exact marginal over each volunteer's hidden state given the notification history.

    active[v] is the probability v is active; pending[v] maps the period of a
    past notification to the probability mass still inactive from it. The
    masses of a volunteer and her active probability always sum to 1.
    """

    active: list
    pending: list

    @classmethod
    def all_active(cls, V: int) -> "BeliefState":
        return cls(active=[1.0] * V, pending=[{} for _ in range(V)])

    def copy(self) -> "BeliefState":
        return BeliefState(active=list(self.active),
                           pending=[dict(d) for d in self.pending])


def belief_step(state: BeliefState, instance: Instance, t: int) -> BeliefState:
    """Advance beliefs to the start of period t >= 2.

    Each pending mass notified at tau moves to active with the hazard of the
    elapsed duration t - tau (0/0 hazards count as 1); masses whose survival
    is exhausted return to active entirely.
    """
    if t < 2:
        raise ValidationError(f"belief advance needs t >= 2, got {t}")
    dist = instance.dist
    out = state.copy()
    for v in range(len(out.active)):
        masses = out.pending[v]
        if not masses:
            continue
        moved = 0.0
        kept = {}
        for tau, mass in masses.items():
            elapsed = t - tau
            if dist.sf(elapsed) <= 1e-12:
                moved += mass
                continue
            prior = dist.sf(elapsed - 1)
            hazard = 1.0 if prior <= 1e-12 else min(dist.pmf(elapsed) / prior, 1.0)
            moved += hazard * mass
            remain = (1.0 - hazard) * mass
            if remain > 0.0:
                kept[tau] = remain
        out.active[v] += moved
        out.pending[v] = kept
    return out


def belief_notify(state: BeliefState, v: int, t: int) -> BeliefState:
    """Record a realized notification of volunteer v (1-based) at period t.

    The active mass moves to a pending entry tagged t; mass already inactive
    is unaffected because inactive volunteers ignore notifications.
    """
    if not 1 <= v <= len(state.active):
        raise ValidationError(f"volunteer index {v} out of range 1..{len(state.active)}")
    out = state.copy()
    a = out.active[v - 1]
    if a > 0.0:
        out.active[v - 1] = 0.0
        out.pending[v - 1][t] = out.pending[v - 1].get(t, 0.0) + a
    return out


def eligible_volunteers(state: BeliefState, theta: float = 1.0) -> list[int]:
    """1-based indices of volunteers believed active with probability >= theta."""
    return [v + 1 for v, a in enumerate(state.active) if a >= theta - 1e-9]


# ---------------------------------------------------------------------------
# Heuristic decisions
# ---------------------------------------------------------------------------

HEURISTIC_KINDS = (
    "notify_all",
    "notify_random_n",
    "notify_best_n",
    "notify_upto_rho",
    "rolling_horizon",
    "follow_ex_ante",
)


def _by_descending_match(instance: Instance, s: int, candidates) -> list[int]:
    # ties go to the lower index
    return sorted(candidates, key=lambda v: (-instance.match_probs[v, s], v))


def _rolling_horizon_probs(instance: Instance, eligible0: list[int], t: int, s: int,
                           horizon: int) -> np.ndarray:
    """First-period notification probabilities of a truncated benchmark LP.

    The program covers periods t .. min(t + horizon - 1, T) with only the
    eligible volunteers, all treated as active at the start of the window.
    """
    probs = np.zeros(instance.V)
    if not eligible0 or instance.arrival_rates[t - 1, s - 1] <= 0.0:
        return probs
    t_end = min(t + horizon - 1, instance.T)
    sub = Instance(
        arrival_rates=instance.arrival_rates[t - 1:t_end],
        match_probs=instance.match_probs[eligible0],
        dist=instance.dist,
    )
    x_sub = exante.benchmark_lp(sub).x_lp.x
    for row, v in enumerate(eligible0):
        probs[v] = x_sub[row, s - 1, 0]
    return probs


def heuristic_decide(kind: str, params: dict, beliefs: BeliefState, instance: Instance,
                     t: int, s: int | None, rng) -> np.ndarray:
    """Per-volunteer notification probabilities for one arrival (t, s 1-based).

    Eligibility means a belief of being active of at least theta
    (params["theta"], default 1). Random draws consume the caller's stream
    before any downstream response coins: subset sampling happens here.
    """
    if kind not in HEURISTIC_KINDS:
        raise ValidationError(f"unknown heuristic kind {kind!r}")
    if s is None:
        return np.zeros(0)
    V = instance.V
    if not (1 <= t <= instance.T and 1 <= s <= instance.S):
        raise ValidationError(f"indices (t={t}, s={s}) out of range")
    theta = params.get("theta", 1.0)
    probs = np.zeros(V)

    if kind == "notify_all":
        probs[:] = 1.0
        return probs

    if kind == "follow_ex_ante":
        x_star = params["x_star"]
        x = x_star.x if isinstance(x_star, FractionalSolution) else np.asarray(x_star)
        return np.array(x[:, s - 1, t - 1], dtype=float)

    eligible0 = [v - 1 for v in eligible_volunteers(beliefs, theta)]

    if kind == "notify_random_n":
        n = int(params["n"])
        chosen = eligible0 if len(eligible0) <= n else rng.sample(eligible0, n)
        probs[list(chosen)] = 1.0
        return probs

    if kind == "notify_best_n":
        n = int(params["n"])
        top = _by_descending_match(instance, s - 1, eligible0)[:n]
        probs[top] = 1.0
        return probs

    if kind == "notify_upto_rho":
        rho = float(params["rho"])
        surviving = 1.0
        for v in _by_descending_match(instance, s - 1, range(V)):
            if 1.0 - surviving >= rho:
                break
            pa = instance.match_probs[v, s - 1] * beliefs.active[v]
            if pa <= 0.0:
                continue
            probs[v] = 1.0
            surviving *= 1.0 - pa
        return probs

    # rolling_horizon
    horizon = int(params["horizon"])
    if horizon < 1:
        raise ValidationError(f"rolling horizon must be >= 1, got {horizon}")
    return _rolling_horizon_probs(instance, eligible0, t, s, horizon)


# ---------------------------------------------------------------------------
# Policy objects for the simulator
# ---------------------------------------------------------------------------


class Policy:
    """Episode-facing protocol used by the simulator.

    The simulator threads an opaque per-episode state through advance (start
    of each period from 2 on), decide (on an arrival; may consume the episode
    stream), and record (after the realized notifications of the period).
    Non-adaptive policies keep no state.
    """

    name = "policy"

    def new_state(self):
        return None

    def advance(self, state, t: int):
        return state

    def decide(self, state, t: int, s: int, rng):
        raise NotImplementedError

    def record(self, state, t: int, notified0):
        return state


class StaticPlanPolicy(Policy):
    """Notifies with fixed per-(period, type) probabilities from a precomputed tensor."""

    def __init__(self, name: str, probs: np.ndarray):
        self.name = name
        V, S, T = probs.shape
        self._V = V
        self._probs = [[probs[:, s, t].tolist() for s in range(S)] for t in range(T)]

    def decide(self, state, t: int, s: int, rng):
        return self._probs[t - 1][s - 1]


class HeuristicPolicy(Policy):
    """Belief-tracking wrapper around heuristic_decide."""

    def __init__(self, name: str, kind: str, params: dict, instance: Instance):
        if kind not in HEURISTIC_KINDS:
            raise ValidationError(f"unknown heuristic kind {kind!r}")
        self.name = name
        self.kind = kind
        self.params = dict(params)
        self.instance = instance

    def new_state(self):
        return BeliefState.all_active(self.instance.V)

    def advance(self, state, t: int):
        return belief_step(state, self.instance, t)

    def decide(self, state, t: int, s: int, rng):
        return heuristic_decide(self.kind, self.params, state, self.instance, t, s, rng)

    def record(self, state, t: int, notified0):
        for v in notified0:
            state = belief_notify(state, v + 1, t)
        return state


class RollingHorizonPolicy(HeuristicPolicy):
    """Rolling-horizon heuristic with memoized window programs.

    The truncated program depends only on the period and the eligible set, so
    repeat arrivals reuse the solved plan.
    """

    def __init__(self, name: str, instance: Instance, horizon: int, theta: float = 1.0):
        super().__init__(name, "rolling_horizon", {"horizon": horizon, "theta": theta}, instance)
        self._cache: dict = {}

    def decide(self, state, t: int, s: int, rng):
        theta = self.params["theta"]
        eligible0 = tuple(v - 1 for v in eligible_volunteers(state, theta))
        key = (t, eligible0)
        plan = self._cache.get(key)
        if plan is None:
            # solve once per (t, eligible) and keep all first-period columns
            plan = {}
            t_end = min(t + self.params["horizon"] - 1, self.instance.T)
            if eligible0:
                sub = Instance(
                    arrival_rates=self.instance.arrival_rates[t - 1:t_end],
                    match_probs=self.instance.match_probs[list(eligible0)],
                    dist=self.instance.dist,
                )
                x_sub = exante.benchmark_lp(sub).x_lp.x
            else:
                x_sub = None
            plan["x"] = x_sub
            self._cache[key] = plan
        probs = np.zeros(self.instance.V)
        if plan["x"] is not None:
            for row, v in enumerate(eligible0):
                probs[v] = plan["x"][row, s - 1, 0]
        return probs


# ---------------------------------------------------------------------------
# Policy specification grammar
# ---------------------------------------------------------------------------

POLICY_GRAMMAR = "sn | sdn | exante | all | random:n | best:n | upto:rho | rolling:H"


def parse_policy_spec(text: str) -> tuple[str, dict]:
    """Parse a policy spec string into (kind, params); see POLICY_GRAMMAR."""
    head, _, arg = text.strip().partition(":")
    head = head.lower()
    try:
        if head in ("sn", "sdn", "exante", "all"):
            if arg:
                raise ValidationError(f"policy {head!r} takes no parameter")
            return head, {}
        if head == "random":
            return head, {"n": int(arg)}
        if head == "best":
            return head, {"n": int(arg)}
        if head == "upto":
            return head, {"rho": float(arg)}
        if head == "rolling":
            return head, {"horizon": int(arg)} if arg else {}
    except ValueError:
        raise ValidationError(f"bad parameter in policy spec {text!r}") from None
    raise ValidationError(f"unknown policy spec {text!r}; grammar: {POLICY_GRAMMAR}")


def default_rolling_horizon(instance: Instance) -> int:
    """Mean inactivity duration rounded to the nearest integer, at least 1."""
    return max(1, int(instance.dist.mean() + 0.5))


def make_policy(text: str, instance: Instance, x_star: FractionalSolution | None = None,
                m: int = exante.DEFAULT_STEP_COUNT, theta: float = 1.0) -> Policy:
    """Build a simulator-ready policy from a spec string.

    Plan-based policies (sn, sdn, exante) need the ex-ante solution; when
    x_star is not supplied it is computed here with step count m.
    """
    kind, params = parse_policy_spec(text)
    if kind in ("sn", "sdn", "exante"):
        if x_star is None:
            x_star = exante.select_ex_ante(instance, m).solution
        if kind == "sn":
            return StaticPlanPolicy(text, sn_offline(instance, x_star).x_tilde)
        if kind == "sdn":
            plan = sdn_offline(instance, x_star)
            probs = np.clip(plan.x_star / ((2.0 - plan.q) * plan.beta[:, None, :]), 0.0, 1.0)
            return StaticPlanPolicy(text, probs)
        return StaticPlanPolicy(text, np.asarray(x_star.x))
    if kind == "all":
        # notification probability 1 everywhere; no belief tracking needed
        return StaticPlanPolicy(text, np.ones((instance.V, instance.S, instance.T)))
    if kind == "random":
        return HeuristicPolicy(text, "notify_random_n", {"n": params["n"], "theta": theta},
                               instance)
    if kind == "best":
        return HeuristicPolicy(text, "notify_best_n", {"n": params["n"], "theta": theta},
                               instance)
    if kind == "upto":
        return HeuristicPolicy(text, "notify_upto_rho", {"rho": params["rho"], "theta": theta},
                               instance)
    horizon = params.get("horizon", default_rolling_horizon(instance))
    return RollingHorizonPolicy(text, instance, horizon, theta)
