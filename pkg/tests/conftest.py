import random

import numpy as np

from volnotify.core import Deterministic, Geometric, Instance, Tabulated

VARIANTS = ("geometric", "deterministic", "tabulated")


def random_dist(rng: random.Random, variant: str):
    if variant == "geometric":
        return Geometric(rng.uniform(0.05, 1.0))
    if variant == "deterministic":
        return Deterministic(rng.randint(1, 4))
    if variant == "tabulated":
        k = rng.randint(1, 4)
        raw = np.array([rng.uniform(0.05, 1.0) for _ in range(k)])
        return Tabulated(tuple(raw / raw.sum()))
    raise ValueError(variant)


def random_instance(rng: random.Random, max_v=5, max_s=4, max_t=10, variant=None) -> Instance:
    """Random instance with valid arrival rows and a mixed distribution variant."""
    V = rng.randint(1, max_v)
    S = rng.randint(1, max_s)
    T = rng.randint(1, max_t)
    lam = np.zeros((T, S))
    for t in range(T):
        raw = np.array([rng.random() for _ in range(S)])
        # Random slack keeps row sums strictly inside [0, 1].
        scale = rng.random() / max(raw.sum(), 1e-12)
        lam[t] = raw * min(scale, 1.0 / max(raw.sum(), 1e-12))
    p = np.array([[rng.random() for _ in range(S)] for _ in range(V)])
    variant = variant or VARIANTS[rng.randrange(3)]
    return Instance(arrival_rates=lam, match_probs=p, dist=random_dist(rng, variant))


def random_tensor(rng: random.Random, instance: Instance) -> np.ndarray:
    shape = (instance.V, instance.S, instance.T)
    return np.array([rng.random() for _ in range(int(np.prod(shape)))]).reshape(shape)


def feasible_tensor(rng: random.Random, instance: Instance) -> np.ndarray:
    """Random tensor scaled into the feasible set."""
    from volnotify.core import survival_matrix

    x = random_tensor(rng, instance)
    weights = np.einsum("ts,vst->vt", instance.arrival_rates, x)
    loads = weights @ survival_matrix(instance.dist, instance.T).T
    worst = loads.max(initial=0.0)
    if worst > 1.0:
        x = x / worst
    return x
