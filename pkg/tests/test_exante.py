import math
import random

import numpy as np
import pytest

from conftest import feasible_tensor, random_instance
from volnotify.core import (
    Deterministic,
    FractionalSolution,
    Geometric,
    Instance,
    ValidationError,
    check_feasible,
    evaluate_f,
)
from volnotify.exante import (
    LpInfeasibleError,
    LpProblem,
    LpUnboundedError,
    _argmax_linear,
    _arrival_slots,
    _budget_matrix,
    benchmark_lp,
    frank_wolfe_aa,
    objective_gradient,
    select_ex_ante,
    sequential_sq,
    solution_to_triples,
    solve_lp,
)


def make_i1(q=0.5, eps=1e-3):
    lam = np.zeros((2, 2))
    lam[0, 0] = 1.0
    lam[1, 1] = eps / (1.0 - q)
    return Instance(arrival_rates=lam, match_probs=np.array([[eps, 1.0]]), dist=Geometric(q))


def make_i4(q=0.1, eps=1e-3):
    lam = np.zeros((2, 2))
    lam[0, 0] = 1.0
    lam[1, 1] = q
    return Instance(arrival_rates=lam, match_probs=np.array([[eps, 1.0]]), dist=Geometric(q))


def make_i5(eps=0.01):
    lam = np.array([[1.0, 0.0], [0.0, 1.0]])
    p = np.array([[0.5, 0.0], [0.5, 0.5 - eps]])
    return Instance(arrival_rates=lam, match_probs=p, dist=Deterministic(2))


def make_i6():
    lam = np.array([[1.0, 0.0], [0.0, 1.0]])
    third = 1.0 / 3.0
    p = np.array([
        [third, 0.0],
        [third, 0.0],
        [third, third - 1e-3],
        [0.0, 11.0 / 18.0],
    ])
    return Instance(arrival_rates=lam, match_probs=p, dist=Deterministic(2))


def make_i2(n=4):
    q = 1.0 / n
    lam = np.full((n * n + 1, 1), q)
    lam[0, 0] = 1.0
    return Instance(arrival_rates=lam, match_probs=np.full((n, 1), q), dist=Geometric(q))


class TestSolveLp:
    def test_single_variable(self):
        prob = LpProblem(objective=[1.0], constraint_matrix=np.zeros((0, 1)), rhs=[],
                         lower=[0.0], upper=[1.0])
        sol, val = solve_lp(prob)
        assert sol[0] == pytest.approx(1.0, abs=1e-9)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_simplex_face(self):
        prob = LpProblem(objective=[1.0, 1.0], constraint_matrix=[[1.0, 1.0]], rhs=[1.0],
                         lower=[0.0, 0.0], upper=[1.0, 1.0])
        _, val = solve_lp(prob)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_infeasible(self):
        prob = LpProblem(objective=[1.0], constraint_matrix=[[1.0]], rhs=[-1.0],
                         lower=[0.0], upper=[1.0])
        with pytest.raises(LpInfeasibleError):
            solve_lp(prob)

    def test_unbounded(self):
        prob = LpProblem(objective=[1.0], constraint_matrix=np.zeros((0, 1)), rhs=[],
                         lower=[0.0], upper=[np.inf])
        with pytest.raises(LpUnboundedError):
            solve_lp(prob)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ValidationError):
            LpProblem(objective=[1.0], constraint_matrix=np.zeros((0, 1)), rhs=[],
                      lower=[2.0], upper=[1.0])

    def test_deterministic_resolve(self):
        rng = random.Random(5)
        c = [rng.random() for _ in range(6)]
        A = [[rng.random() for _ in range(6)] for _ in range(4)]
        prob = LpProblem(objective=c, constraint_matrix=A, rhs=[1.0] * 4,
                         lower=[0.0] * 6, upper=[1.0] * 6)
        first, val1 = solve_lp(prob)
        second, val2 = solve_lp(prob)
        assert first.tolist() == second.tolist()
        assert val1 == val2


class TestBenchmark:
    def test_i4_value_and_optimizer(self):
        res = benchmark_lp(make_i4(0.1, 1e-3))
        assert res.lp_value == pytest.approx(0.101, abs=1e-6)
        assert res.x_lp.x[0, 0, 0] == pytest.approx(1.0, abs=1e-7)
        assert res.x_lp.x[0, 1, 1] == pytest.approx(1.0, abs=1e-7)

    def test_i2_value(self):
        res = benchmark_lp(make_i2(4))
        assert res.lp_value == pytest.approx(5.0, abs=1e-6)
        assert res.lp_value >= 4.0

    def test_zero_match_probs(self):
        inst = Instance(arrival_rates=np.array([[0.5], [0.5]]),
                        match_probs=np.zeros((2, 1)), dist=Deterministic(2))
        assert benchmark_lp(inst).lp_value == pytest.approx(0.0, abs=1e-9)

    def test_i1_lower_bound(self):
        q, eps = 0.5, 1e-3
        res = benchmark_lp(make_i1(q, eps))
        feasible_value = eps * (2.0 - q - (1.0 - q) * eps) / (1.0 - q)
        assert res.lp_value >= feasible_value - 1e-6

    def test_optimizer_is_feasible_and_consistent(self):
        rng = random.Random(41)
        for _ in range(10):
            inst = random_instance(rng)
            res = benchmark_lp(inst)
            assert check_feasible(inst, res.x_lp) == []
            # objective recomputed from the tensor matches the reported value
            slots = _arrival_slots(inst)
            expected = sum(
                inst.arrival_rates[t, s] * min(
                    1.0, float(inst.match_probs[:, s] @ res.x_lp.x[:, s, t]))
                for t, s in slots)
            assert res.lp_value == pytest.approx(expected, abs=1e-6)

    def test_lp_dominates_objective(self):
        rng = random.Random(43)
        for _ in range(10):
            inst = random_instance(rng)
            res = benchmark_lp(inst)
            x = FractionalSolution(feasible_tensor(rng, inst))
            assert res.lp_value >= evaluate_f(inst, x) - 1e-9


class TestFrankWolfe:
    def test_i5_two_steps_exact(self):
        eps = 0.01
        sol = frank_wolfe_aa(make_i5(eps), m=2)
        assert sol.x[0, 0, 0] == pytest.approx(1.0, abs=1e-9)
        assert sol.x[1, 0, 0] == pytest.approx(0.5, abs=1e-9)
        assert sol.x[1, 1, 1] == pytest.approx(0.5, abs=1e-9)
        assert evaluate_f(make_i5(eps), sol) == pytest.approx(0.875 - 0.5 * eps, abs=1e-9)

    def test_i6_five_steps(self):
        inst = make_i6()
        sol = frank_wolfe_aa(inst, m=5)
        assert evaluate_f(inst, sol) == pytest.approx(1.307, abs=1e-3)

    def test_zero_match_probs(self):
        inst = Instance(arrival_rates=np.array([[0.5], [0.5]]),
                        match_probs=np.zeros((2, 1)), dist=Deterministic(2))
        assert evaluate_f(inst, frank_wolfe_aa(inst, m=3)) == 0.0

    def test_iterates_feasible(self):
        rng = random.Random(47)
        inst = random_instance(rng, max_v=4, max_s=3, max_t=8)
        for m in range(1, 5):
            assert check_feasible(inst, frank_wolfe_aa(inst, m)) == []

    def test_invalid_step_count(self):
        with pytest.raises(ValidationError):
            frank_wolfe_aa(make_i5(), m=0)

    def test_argmax_decomposition_matches_joint_lp(self):
        # Per-volunteer argmax must equal one joint LP over all volunteers.
        rng = random.Random(53)
        for _ in range(5):
            inst = random_instance(rng, max_v=4, max_s=3, max_t=6)
            slots = _arrival_slots(inst)
            if not slots:
                continue
            budget = _budget_matrix(inst, slots)
            weights = objective_gradient(inst, feasible_tensor(rng, inst))
            y = _argmax_linear(inst, weights, slots, budget)
            split_obj = float(np.sum(weights * y))

            V, K = inst.V, len(slots)
            c = np.concatenate([
                np.array([weights[v, sk, tk] for (tk, sk) in slots]) for v in range(V)])
            A = np.zeros((V * inst.T, V * K))
            for v in range(V):
                A[v * inst.T:(v + 1) * inst.T, v * K:(v + 1) * K] = budget
            joint = LpProblem(objective=c, constraint_matrix=A, rhs=np.ones(V * inst.T),
                              lower=np.zeros(V * K), upper=np.ones(V * K))
            _, joint_obj = solve_lp(joint)
            assert split_obj == pytest.approx(joint_obj, abs=1e-6)


class TestSequential:
    def test_i5_exact(self):
        eps = 0.01
        inst = make_i5(eps)
        sol = sequential_sq(inst)
        assert sol.x[0, 0, 0] == pytest.approx(1.0, abs=1e-9)
        assert sol.x[1, 0, 0] == pytest.approx(0.0, abs=1e-9)
        assert sol.x[1, 1, 1] == pytest.approx(1.0, abs=1e-9)
        assert evaluate_f(inst, sol) == pytest.approx(1.0 - eps, abs=1e-9)

    def test_i6_value(self):
        inst = make_i6()
        assert evaluate_f(inst, sequential_sq(inst)) == pytest.approx(1.296, abs=1e-3)

    def test_single_volunteer_matches_benchmark(self):
        # With one volunteer the completion cap never binds, so the greedy
        # program and the benchmark agree in value.
        rng = random.Random(59)
        inst = random_instance(rng, max_v=1, max_s=2, max_t=4)
        sq = sequential_sq(inst)
        assert evaluate_f(inst, sq) == pytest.approx(benchmark_lp(inst).lp_value, abs=1e-6)

    def test_feasible(self):
        rng = random.Random(61)
        for _ in range(5):
            inst = random_instance(rng)
            assert check_feasible(inst, sequential_sq(inst)) == []


class TestSelect:
    def test_i5_picks_sequential(self):
        eps = 0.01
        res = select_ex_ante(make_i5(eps), m=2)
        assert res.tag == "SQ"
        assert res.f_value == pytest.approx(1.0 - eps, abs=1e-9)

    def test_i6_picks_benchmark(self):
        res = select_ex_ante(make_i6(), m=5)
        assert res.tag == "LP"
        assert res.f_value == pytest.approx(1.315, abs=1e-3)

    def test_i4_tie_breaks_to_lp(self):
        q, eps = 0.1, 1e-3
        inst = make_i4(q, eps)
        lp_f = evaluate_f(inst, benchmark_lp(inst).x_lp)
        aa_f = evaluate_f(inst, frank_wolfe_aa(inst, m=3))
        sq_f = evaluate_f(inst, sequential_sq(inst))
        assert lp_f == pytest.approx(eps + q, abs=1e-9)
        assert aa_f == pytest.approx(eps + q, abs=1e-9)
        assert sq_f == pytest.approx(eps + q, abs=1e-9)
        res = select_ex_ante(inst, m=3)
        assert res.tag == "LP"

    def test_guarantee_fraction_of_benchmark(self):
        rng = random.Random(67)
        for _ in range(8):
            inst = random_instance(rng)
            res = select_ex_ante(inst, m=4)
            lp = benchmark_lp(inst).lp_value
            assert res.f_value >= (1.0 - 1.0 / math.e) * lp - 1e-6
            assert check_feasible(inst, res.solution) == []


class TestExport:
    def test_sparse_triples(self):
        x = np.zeros((2, 2, 2))
        x[0, 0, 0] = 1.0
        x[1, 1, 1] = 0.123456789012345
        triples = solution_to_triples(FractionalSolution(x))
        assert {"v": 1, "s": 1, "t": 1, "value": 1.0} in triples
        assert len(triples) == 2
        val = [d for d in triples if d["v"] == 2][0]["value"]
        assert val == pytest.approx(0.123456789012345, abs=1e-12)
