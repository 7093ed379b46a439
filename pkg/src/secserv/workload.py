"""Random task-set generation for the evaluation experiments.

Task counts, periods, and base utilizations are drawn uniformly from the
configured ranges; per-task utilizations come from the UUniFast split and
execution times follow as utilization times period (the desired period,
for security tasks, since their real period is the optimizer's output).
The PRNG is counter-based (numpy Philox4x64-10) so batches can be
generated independently per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .taskmodel import RtTask, SecTask, make_taskset

PRNG_ALGORITHM = "Philox4x64-10"


@dataclass(frozen=True)
class GenSpec:
    rt_count: tuple = (3, 10)
    sec_count: tuple = (2, 5)
    rt_period: tuple = (10.0, 100.0)
    t_des: tuple = (250.0, 500.0)
    t_max: tuple = (5000.0, 5050.0)
    rt_base_util: tuple = (0.31, 0.4)
    sec_base_util: tuple = (0.11, 0.2)
    seed: int = 0

    def __post_init__(self):
        for name in ("rt_count", "sec_count", "rt_period", "t_des", "t_max",
                     "rt_base_util", "sec_base_util"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name}: bad range ({lo}, {hi})")
        for name in ("rt_base_util", "sec_base_util"):
            if getattr(self, name)[1] >= 1:
                raise ValueError(f"{name}: utilizations must stay below 1")


def util_group(i):
    "Base-utilization bin i: [0.01 + 0.1*i, 0.1 + 0.1*i]."
    return (0.01 + 0.1 * i, 0.1 + 0.1 * i)


def uunifast(n, u_total, rng):
    """n utilizations summing to u_total, uniform over the simplex.

    Classic recursion: the running remainder is scaled by r^(1/(n-i))
    with r uniform on (0, 1).
    """
    if n < 1:
        raise ValueError("need at least one task")
    out = []
    remaining = float(u_total)
    for i in range(1, n):
        nxt = remaining * float(rng.uniform(0.0, 1.0)) ** (1.0 / (n - i))
        out.append(remaining - nxt)
        remaining = nxt
    out.append(remaining)
    return out


def _uniform_half_open(rng, lo, hi, size=None):
    "Uniform on (lo, hi]: numpy's uniform is [lo, hi), so flip the ends."
    return hi - rng.uniform(0.0, hi - lo, size)


def rng_for_seed(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_seed(master, index):
    "Deterministic per-set child seed for batch generation."
    state = np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1)
    return int(state[0])


def generate(spec):
    """Generate one TaskSet; identical seeds give identical sets."""
    rng = rng_for_seed(spec.seed)
    m = int(rng.integers(spec.rt_count[0], spec.rt_count[1] + 1))
    n = int(rng.integers(spec.sec_count[0], spec.sec_count[1] + 1))
    rt_total = float(_uniform_half_open(rng, *spec.rt_base_util))
    sec_total = float(_uniform_half_open(rng, *spec.sec_base_util))
    for _ in range(100):
        rt_periods = rng.uniform(*spec.rt_period, m)
        rt_utils = uunifast(m, rt_total, rng)
        t_des = rng.uniform(*spec.t_des, n)
        t_max = rng.uniform(*spec.t_max, n)
        sec_utils = uunifast(n, sec_total, rng)
        weights = _uniform_half_open(rng, 0.0, 1.0, n)
        rt_ok = all(0 < u * p <= p for u, p in zip(rt_utils, rt_periods))
        sec_ok = all(0 < u * d and d <= x
                     for u, d, x in zip(sec_utils, t_des, t_max))
        if rt_ok and sec_ok:
            break
    else:
        raise RuntimeError(f"no valid draw in 100 attempts (seed {spec.seed})")
    rt = [RtTask(f"rt{i + 1}", u * p, float(p))
          for i, (u, p) in enumerate(zip(rt_utils, rt_periods))]
    sec = [SecTask(f"sec{j + 1}", u * d, float(d), float(x), float(w))
           for j, (u, d, x, w) in enumerate(zip(sec_utils, t_des, t_max,
                                                weights))]
    return make_taskset(rt, sec)


def generate_batch(spec, count):
    """Yield (set_id, seed, TaskSet) with per-set seeds derived from the
    spec seed; generation order does not matter for reproducibility."""
    for i in range(count):
        seed = derive_seed(spec.seed, i)
        yield i, seed, generate(replace(spec, seed=seed))


def gen_metadata(spec):
    "Provenance block recorded next to generated task sets."
    return {"generator": PRNG_ALGORITHM, "seed": spec.seed,
            "sec_wcet_base": "t_des"}
