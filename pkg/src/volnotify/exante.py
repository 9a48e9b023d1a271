"""Benchmark linear program and the three ex-ante fractional solution candidates.

The benchmark linearizes the piecewise objective with one auxiliary variable
per arrival slot and upper-bounds every online policy. The candidates are the
benchmark optimizer itself, a fixed-step conditional-gradient ascent on the
true submodular objective, and a sequence of per-volunteer linear programs
that account for the externality of higher-priority volunteers. The selected
ex-ante solution is whichever candidate scores best on the true objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import (
    FractionalSolution,
    Instance,
    ValidationError,
    evaluate_f,
    survival_matrix,
)

__all__ = [
    "LpError",
    "LpInfeasibleError",
    "LpUnboundedError",
    "LpProblem",
    "solve_lp",
    "BenchmarkResult",
    "benchmark_lp",
    "frank_wolfe_aa",
    "sequential_sq",
    "ExAnteSolution",
    "select_ex_ante",
    "solution_to_triples",
]

DEFAULT_STEP_COUNT = 100


class LpError(RuntimeError):
    """Linear program could not be solved."""


class LpInfeasibleError(LpError):
    pass


class LpUnboundedError(LpError):
    pass


@dataclass(frozen=True)
class LpProblem:
    """Maximize objective @ x subject to constraint_matrix @ x <= rhs and lower <= x <= upper."""

    objective: np.ndarray
    constraint_matrix: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        A = np.atleast_2d(np.asarray(self.constraint_matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        n = c.size
        if A.size and A.shape[1] != n:
            raise ValidationError(f"constraint matrix has {A.shape[1]} columns for {n} variables")
        if A.shape[0] != b.size:
            raise ValidationError("constraint row count does not match rhs length")
        if lo.size != n or hi.size != n:
            raise ValidationError("bound vectors must match the variable count")
        if not np.all(np.isfinite(b)):
            raise ValidationError("right-hand sides must be finite")
        if np.any(lo > hi):
            raise ValidationError("lower bounds must not exceed upper bounds")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraint_matrix", A)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def num_variables(self) -> int:
        return self.objective.size


def solve_lp(problem: LpProblem) -> tuple[np.ndarray, float]:
    """Solve a maximization LP; deterministic for identical inputs.

    Returns (solution, optimal value) with constraints met within 1e-7 and the
    objective within 1e-6 of optimal. Raises LpInfeasibleError or
    LpUnboundedError for pathological programs.
    """
    bounds = list(zip(problem.lower, problem.upper))
    res = linprog(
        -problem.objective,
        A_ub=problem.constraint_matrix if problem.constraint_matrix.size else None,
        b_ub=problem.rhs if problem.rhs.size else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        raise LpInfeasibleError(f"infeasible linear program: {res.message}")
    if res.status == 3:
        raise LpUnboundedError(f"unbounded linear program: {res.message}")
    if res.status != 0 or res.x is None:
        raise LpError(f"linear program failed: {res.message}")
    return np.asarray(res.x), float(-res.fun)


# ---------------------------------------------------------------------------
# Benchmark LP
# ---------------------------------------------------------------------------


def _arrival_slots(instance: Instance) -> list[tuple[int, int]]:
    """(t, s) pairs (0-based) with positive arrival rate, row-major order."""
    return [(t, s) for t, s in np.argwhere(instance.arrival_rates > 0.0)]


def _budget_matrix(instance: Instance, slots: list[tuple[int, int]]) -> np.ndarray:
    """T x K matrix of one volunteer's notification-budget coefficients.

    Row t, column k carries lambda[t_k, s_k] * P(duration > t - t_k) when the
    slot is at or before t; the budget rows are identical for every volunteer.
    """
    T = instance.T
    surv = survival_matrix(instance.dist, T)
    A = np.zeros((T, len(slots)))
    for k, (tk, sk) in enumerate(slots):
        A[tk:, k] = instance.arrival_rates[tk, sk] * surv[tk:, tk]
    return A


@dataclass(frozen=True)
class BenchmarkResult:
    """Benchmark optimizer and its optimal value."""

    x_lp: FractionalSolution
    lp_value: float


def benchmark_lp(instance: Instance) -> BenchmarkResult:
    """Build and solve the benchmark LP that upper-bounds every online policy.

    Variables are notification probabilities per (volunteer, arrival slot)
    plus one auxiliary completion variable per slot, capped at the expected
    number of responses and at 1. Slots with zero arrival rate get no
    variables and their tensor entries stay 0.
    """
    slots = _arrival_slots(instance)
    V, K, T = instance.V, len(slots), instance.T
    if K == 0:
        return BenchmarkResult(FractionalSolution.zeros(instance), 0.0)
    n = V * K + K  # x variables then y variables
    c = np.zeros(n)
    for k, (tk, sk) in enumerate(slots):
        c[V * K + k] = instance.arrival_rates[tk, sk]

    rows = []
    # y_k <= sum_v p[v, s_k] x[v, k]
    for k, (tk, sk) in enumerate(slots):
        row = np.zeros(n)
        row[V * K + k] = 1.0
        for v in range(V):
            row[v * K + k] = -instance.match_probs[v, sk]
        rows.append(row)
    # per-volunteer notification budgets
    budget = _budget_matrix(instance, slots)
    for v in range(V):
        for t in range(T):
            row = np.zeros(n)
            row[v * K:(v + 1) * K] = budget[t]
            rows.append(row)
    A = np.vstack(rows)
    b = np.ones(A.shape[0])
    b[:K] = 0.0

    problem = LpProblem(objective=c, constraint_matrix=A, rhs=b,
                        lower=np.zeros(n), upper=np.ones(n))
    sol, value = solve_lp(problem)

    x = np.zeros((V, instance.S, T))
    for v in range(V):
        for k, (tk, sk) in enumerate(slots):
            x[v, sk, tk] = min(max(sol[v * K + k], 0.0), 1.0)
    return BenchmarkResult(FractionalSolution(x), value)


# ---------------------------------------------------------------------------
# Conditional-gradient candidate
# ---------------------------------------------------------------------------


def objective_gradient(instance: Instance, x: np.ndarray) -> np.ndarray:
    """Gradient of the expected-completions objective at x.

    Entry (v, s, t) is lambda[t, s] p[v, s] * prod_{u != v} (1 - x[u, s, t] p[u, s]),
    computed with prefix/suffix products so unit entries cause no division issues.
    """
    V = instance.V
    miss = 1.0 - x * instance.match_probs[:, :, None]  # (V, S, T)
    prefix = np.ones_like(miss)
    for v in range(1, V):
        prefix[v] = prefix[v - 1] * miss[v - 1]
    suffix = np.ones_like(miss)
    for v in range(V - 2, -1, -1):
        suffix[v] = suffix[v + 1] * miss[v + 1]
    return instance.arrival_rates.T[None, :, :] * instance.match_probs[:, :, None] * prefix * suffix


def _argmax_linear(instance: Instance, weights: np.ndarray,
                   slots: list[tuple[int, int]], budget: np.ndarray) -> np.ndarray:
    """Maximize <weights, x> over the feasible set, one small LP per volunteer.

    The budget constraints couple slots only within a volunteer, so the joint
    argmax decomposes exactly into V independent programs.
    """
    V = instance.V
    K = len(slots)
    y = np.zeros((V, instance.S, instance.T))
    ones = np.ones(instance.T)
    for v in range(V):
        c = np.array([weights[v, sk, tk] for (tk, sk) in slots])
        problem = LpProblem(objective=c, constraint_matrix=budget, rhs=ones,
                            lower=np.zeros(K), upper=np.ones(K))
        sol, _ = solve_lp(problem)
        for k, (tk, sk) in enumerate(slots):
            y[v, sk, tk] = min(max(sol[k], 0.0), 1.0)
    return y


def frank_wolfe_aa(instance: Instance, m: int = DEFAULT_STEP_COUNT) -> FractionalSolution:
    """Conditional-gradient ascent with fixed step 1/m on the true objective.

    Starts from zero and adds one m-th of a feasible-set vertex per step, so
    the result is an average of feasible points and itself feasible.
    """
    if m < 1:
        raise ValidationError(f"step count must be >= 1, got {m}")
    slots = _arrival_slots(instance)
    x = np.zeros((instance.V, instance.S, instance.T))
    if not slots:
        return FractionalSolution(x)
    budget = _budget_matrix(instance, slots)
    for _ in range(m):
        grad = objective_gradient(instance, x)
        y = _argmax_linear(instance, grad, slots, budget)
        x = x + y / m
    return FractionalSolution(x)


# ---------------------------------------------------------------------------
# Sequential per-volunteer candidate
# ---------------------------------------------------------------------------


def sequential_sq(instance: Instance) -> FractionalSolution:
    """Volunteers maximize their own priority-scheme contribution in index order.

    Volunteer v solves a linear program whose objective discounts each slot by
    the probability that no higher-priority volunteer (with already-fixed
    probabilities) grabs it, subject to v's own notification budget.
    """
    slots = _arrival_slots(instance)
    x = np.zeros((instance.V, instance.S, instance.T))
    if not slots:
        return FractionalSolution(x)
    budget = _budget_matrix(instance, slots)
    ones = np.ones(instance.T)
    K = len(slots)
    prefix = np.ones((instance.S, instance.T))
    for v in range(instance.V):
        c = np.array([
            instance.arrival_rates[tk, sk] * prefix[sk, tk] * instance.match_probs[v, sk]
            for (tk, sk) in slots
        ])
        problem = LpProblem(objective=c, constraint_matrix=budget, rhs=ones,
                            lower=np.zeros(K), upper=np.ones(K))
        sol, _ = solve_lp(problem)
        for k, (tk, sk) in enumerate(slots):
            x[v, sk, tk] = min(max(sol[k], 0.0), 1.0)
        prefix = prefix * (1.0 - instance.match_probs[v][:, None] * x[v])
    return FractionalSolution(x)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExAnteSolution:
    """The selected ex-ante solution with its provenance tag and objective value."""

    solution: FractionalSolution
    tag: str  # "LP", "AA", or "SQ"
    f_value: float


def select_ex_ante(instance: Instance, m: int = DEFAULT_STEP_COUNT) -> ExAnteSolution:
    """Evaluate all three candidates on the true objective and keep the best.

    Ties break in the order LP, AA, SQ.
    """
    if m < 1:
        raise ValidationError(f"step count must be >= 1, got {m}")
    candidates = [
        ("LP", benchmark_lp(instance).x_lp),
        ("AA", frank_wolfe_aa(instance, m)),
        ("SQ", sequential_sq(instance)),
    ]
    best_tag, best_sol = candidates[0]
    best_val = evaluate_f(instance, best_sol)
    for tag, sol in candidates[1:]:
        val = evaluate_f(instance, sol)
        if val > best_val:
            best_tag, best_sol, best_val = tag, sol, val
    return ExAnteSolution(solution=best_sol, tag=best_tag, f_value=best_val)


def solution_to_triples(solution: FractionalSolution) -> list[dict]:
    """Sparse 1-indexed export of a solution tensor, zeros omitted, 12 significant digits."""
    out = []
    for v, s, t in np.argwhere(solution.x != 0.0):
        out.append({
            "v": int(v) + 1,
            "s": int(s) + 1,
            "t": int(t) + 1,
            "value": float(f"{solution.x[v, s, t]:.12g}"),
        })
    return out
