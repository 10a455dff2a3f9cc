"""Halving initialisation and the self-initializing combined runner.

A halving probe needs no prior knowledge: at its local step t it allocates
2^-t and stops at the first failure, returning nu_lower0 = 2^-t, which is
a valid lower bound because failures are only possible below the cut-off.
The looseness eta = min(1, nu) / nu_lower0 has expectation at most 4.

Run in parallel with offsets (job k's probe starts at global step k), the
probes' combined consumption at global step t is
sum_k 1{t >= k} 2^(k-t-1) <= min(1, 2^(K-t)), so the main policy always
keeps a positive share of the budget and regains all of it exponentially
fast. The combined runner gives the main policy whatever the probes do not
actually consume and lets it allocate only to jobs whose probe finished;
estimator updates use only main-policy allocations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .allocator import PolicyOptions, RunTrace, _allocate_raw, default_delta
from .estimator import EstimatorState
from .model import ProblemInstance, optimal_profile, split_rng

# 2^-64 is the smallest probe allocation; beyond that the schedule is
# meaningless at double precision.
MAX_HALVING_STEPS = 64


@dataclass(frozen=True)
class InitRecord:
    """Outcome of one halving probe: the job it served, how many steps it
    ran, the lower bound it produced (2^-steps_used) and what it consumed
    at each of its local steps. ``capped`` marks a probe stopped by the
    64-iteration guard instead of an observed failure."""

    job: int
    steps_used: int
    nu_lower0: float
    consumption: tuple
    capped: bool = False

    def to_dict(self) -> dict:
        return {
            "job": self.job,
            "steps_used": self.steps_used,
            "nu_lower0": self.nu_lower0,
            "consumption": list(self.consumption),
            "capped": self.capped,
        }


def halving_init(nu: Optional[float], rng: np.random.Generator, job: int = 0) -> InitRecord:
    """Probe a single job: allocate 2^-t until the first failure.

    ``nu`` is the
    true difficulty (None for unbounded). Each local step consumes one
    uniform draw from ``rng``.
    """
    if nu is not None and not nu > 0:
        raise ValueError(f"difficulty must be positive or None, got {nu}")
    recip = 0.0 if nu is None else 1.0 / nu
    consumption = []
    for t in range(1, MAX_HALVING_STEPS + 1):
        m = 2.0**-t
        consumption.append(m)
        if not rng.random() < m * recip:
            return InitRecord(job, t, m, tuple(consumption))
    return InitRecord(job, MAX_HALVING_STEPS, 2.0**-MAX_HALVING_STEPS, tuple(consumption), capped=True)


def sample_eta(nu: Optional[float], nu_lower0: float) -> float:
    """Looseness of an initial lower bound: min(1, nu) / nu_lower0."""
    if not nu_lower0 > 0:
        raise ValueError(f"lower bound must be positive, got {nu_lower0}")
    top = 1.0 if nu is None else min(1.0, nu)
    return top / nu_lower0


def init_budget(t: int, num_jobs: int) -> float:
    """Worst-case combined probe consumption at global step t, assuming
    every probe is still active: sum_{k<=min(K,t)} 2^(k-t-1)."""
    if t < 1:
        raise ValueError(f"step must be >= 1, got {t}")
    return sum(2.0 ** (k - t - 1) for k in range(1, min(num_jobs, t) + 1))


def run_modified(instance: ProblemInstance, options: PolicyOptions = PolicyOptions()) -> RunTrace:
    """Self-initializing episode: offset halving probes plus the optimistic
    policy on whatever budget the probes leave.

    Per global step t: active probes (job k's starts at step k) consume
    their scheduled 2^(k-t-1); the main policy allocates the remaining
    budget among jobs whose probe has finished; one outcome is sampled per
    job from its total allocation; probe outcomes feed only the probe,
    main-policy outcomes feed only the estimators. Pseudo-regret is charged
    against the true optimum from step 1, initialisation included.
    """
    K = instance.num_jobs
    n = instance.horizon
    delta = options.delta_override if options.delta_override is not None else default_delta(n, K)
    weighted = options.mode == "weighted"
    profile = optimal_profile(instance)
    recips = instance.recips
    rho_star = profile.rho_star
    rng = split_rng(instance.base_seed, options.seed)

    states = [None] * K
    init_done = [False] * K
    init_consumption = [[] for _ in range(K)]
    records = [None] * K

    allocations = np.empty((n, K))
    observations = np.empty((n, K), dtype=np.uint8)
    regrets = np.empty(n)
    lower_hist = np.empty((n, K)) if options.record_intervals else None
    upper_hist = np.empty((n, K)) if options.record_intervals else None

    block = 1024
    draws: list = []
    pos = 0
    for t in range(1, n + 1):
        probe_m = [0.0] * K
        probe_total = 0.0
        for k in range(K):
            if not init_done[k] and t >= k + 1:
                local = t - k
                m = 2.0**-local
                probe_m[k] = m
                probe_total += m
        budget = 1.0 - probe_total
        if budget < 0.0:
            budget = 0.0
        main_m = _allocate_raw(
            [states[k].lower_recip if init_done[k] else 0.0 for k in range(K)],
            budget,
        )

        if pos >= len(draws):
            draws = rng.random(block * K).tolist()
            pos = 0
        reward = 0.0
        row = allocations[t - 1]
        for k in range(K):
            mk = probe_m[k] + main_m[k]
            row[k] = mk
            x = 1 if draws[pos] < mk * recips[k] else 0
            pos += 1
            observations[t - 1, k] = x
            if mk > 0.0:
                p = mk * recips[k]
                reward += p if p < 1.0 else 1.0
            if probe_m[k] > 0.0:
                init_consumption[k].append(probe_m[k])
                local = t - k
                capped = x == 1 and local >= MAX_HALVING_STEPS
                if x == 0 or capped:
                    nu_lower0 = 2.0**-local if x == 0 else 2.0**-MAX_HALVING_STEPS
                    records[k] = InitRecord(
                        k, local, nu_lower0, tuple(init_consumption[k]), capped=capped
                    )
                    states[k] = EstimatorState(
                        nu_lower0, delta, options.u_alpha_levels, weighted=weighted
                    )
                    init_done[k] = True
            elif init_done[k] and main_m[k] > 0.0:
                states[k].update(main_m[k], x)
        regrets[t - 1] = rho_star - reward
        if options.record_intervals:
            for k in range(K):
                if states[k] is not None:
                    lower_hist[t - 1, k] = states[k].lower_recip
                    upper_hist[t - 1, k] = states[k].upper_recip
                else:
                    lower_hist[t - 1, k] = 0.0
                    upper_hist[t - 1, k] = 0.0

    metadata = {
        "instance": instance.digest(),
        "nus": list(instance.nus),
        "horizon": n,
        "base_seed": instance.base_seed,
        "seed": options.seed,
        "mode": options.mode,
        "delta": delta,
        "init_records": [r.to_dict() for r in records if r is not None],
    }
    return RunTrace(
        allocations=allocations,
        observations=observations,
        regrets=regrets,
        cum_regrets=np.cumsum(regrets),
        estimators=states,
        metadata=metadata,
        lower_recips=lower_hist,
        upper_recips=upper_hist,
    )
