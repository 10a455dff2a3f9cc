"""Optimistic allocation policy and episode runner.

Each step the policy acts as if every job is as easy as its confidence
interval allows: jobs are filled greedily in increasing order of their
current optimistic lower bounds, each receiving
``min(nu_lower, remaining budget)``. Estimators are then updated with the
realized (allocation, outcome) pairs. The unweighted baseline runs the
identical code path with every sample weight pinned to 1, so comparisons
isolate the estimator.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimator import EstimatorState
from .model import (
    Allocation,
    ProblemInstance,
    optimal_profile,
    split_rng,
)

MODES = ("weighted", "unweighted")

# Uniform draws are pre-generated in blocks of this many steps; the stream
# order (step-major, job-minor) is identical to per-step sampling.
_DRAW_BLOCK = 1024


@dataclass(frozen=True)
class PolicyOptions:
    """Knobs for one episode: estimator mode, confidence override, interval
    recording, and the stream index used to derive the episode RNG."""

    mode: str = "weighted"
    delta_override: Optional[float] = None
    record_intervals: bool = False
    seed: int = 0
    u_alpha_levels: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.delta_override is not None and not (0.0 < self.delta_override < 1.0):
            raise ValueError(f"delta_override must lie in (0, 1), got {self.delta_override}")


@dataclass
class RunTrace:
    """Full record of one episode.

    ``allocations[t]`` is the realized per-job allocation at step t+1
    (including any initializer consumption for the self-initializing
    runner), ``observations[t]`` the outcomes, ``regrets[t]`` the per-step
    pseudo-regret and ``cum_regrets`` its running sum. ``lower_recips`` /
    ``upper_recips`` hold post-update interval snapshots when recorded
    (0.0 marks a job whose estimator does not exist yet).
    """

    allocations: np.ndarray
    observations: np.ndarray
    regrets: np.ndarray
    cum_regrets: np.ndarray
    estimators: list
    metadata: dict
    lower_recips: Optional[np.ndarray] = None
    upper_recips: Optional[np.ndarray] = None

    @property
    def final_regret(self) -> float:
        return float(self.cum_regrets[-1])

    def to_csv(self, path: str) -> None:
        """Write one row per step: t, M_k, X_k, r_t, cumregret[, L_k, U_k].

        Written atomically (temp file + rename); floats use shortest
        round-trip decimals so re-emission is byte-identical.
        """
        n, K = self.allocations.shape
        cols = ["t"]
        cols += [f"M_{k + 1}" for k in range(K)]
        cols += [f"X_{k + 1}" for k in range(K)]
        cols += ["r_t", "cumregret"]
        with_intervals = self.lower_recips is not None
        if with_intervals:
            cols += [f"L_{k + 1}" for k in range(K)]
            cols += [f"U_{k + 1}" for k in range(K)]
        lines = [",".join(cols)]
        for t in range(n):
            row = [str(t + 1)]
            row += [repr(float(v)) for v in self.allocations[t]]
            row += [str(int(v)) for v in self.observations[t]]
            row.append(repr(float(self.regrets[t])))
            row.append(repr(float(self.cum_regrets[t])))
            if with_intervals:
                row += [repr(float(v)) for v in self.lower_recips[t]]
                row += [repr(float(v)) for v in self.upper_recips[t]]
            lines.append(",".join(row))
        atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory and rename into place,
    so failures never leave partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _allocate_raw(lower_recips: Sequence[float], budget: float = 1.0) -> list:
    """Greedy fill in increasing order of optimistic lower bound.

    A job with lower_recip 0 is excluded (no bound yet): it receives 0 and
    consumes no budget. Ties break toward the lowest job index.
    """
    m = [0.0] * len(lower_recips)
    order = sorted(
        (1.0 / L, k) for k, L in enumerate(lower_recips) if L > 0.0
    )
    remaining = budget
    for nu_low, k in order:
        if remaining <= 0.0:
            break
        take = nu_low if nu_low < remaining else remaining
        m[k] = take
        remaining -= take
        if remaining < 0.0:
            remaining = 0.0
    return m


def allocate(lower_recips: Sequence[float], budget: float = 1.0) -> Allocation:
    """Optimistic allocation for the given reciprocal lower bounds."""
    return Allocation(tuple(_allocate_raw(lower_recips, budget)))


def default_delta(horizon: int, num_jobs: int) -> float:
    """Per-update confidence level (n K)^-2."""
    return float(horizon * num_jobs) ** -2


def run_episode(
    instance: ProblemInstance,
    initial_lower_bounds: Sequence[float],
    options: PolicyOptions = PolicyOptions(),
) -> RunTrace:
    """Run the optimistic policy for the full horizon from known lower
    bounds 0 < nu_lower0_k <= nu_k.

    Violated initial bounds void the confidence guarantees but the runner
    still executes. Jobs receiving zero allocation at a step contribute no
    information and their estimator is not updated. Deterministic given
    (instance.base_seed, options.seed).
    """
    K = instance.num_jobs
    n = instance.horizon
    lbs = [float(v) for v in initial_lower_bounds]
    if len(lbs) != K:
        raise ValueError(f"expected {K} initial lower bounds, got {len(lbs)}")
    for v in lbs:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"initial lower bounds must be positive, got {v}")

    delta = options.delta_override if options.delta_override is not None else default_delta(n, K)
    weighted = options.mode == "weighted"
    states = [
        EstimatorState(lb, delta, options.u_alpha_levels, weighted=weighted) for lb in lbs
    ]
    profile = optimal_profile(instance)
    recips = instance.recips
    rho_star = profile.rho_star
    rng = split_rng(instance.base_seed, options.seed)

    allocations = np.empty((n, K))
    observations = np.empty((n, K), dtype=np.uint8)
    regrets = np.empty(n)
    lower_hist = np.empty((n, K)) if options.record_intervals else None
    upper_hist = np.empty((n, K)) if options.record_intervals else None

    draws: list = []
    pos = 0
    for t in range(n):
        if pos >= len(draws):
            draws = rng.random(_DRAW_BLOCK * K).tolist()
            pos = 0
        m = _allocate_raw([s.lower_recip for s in states])
        reward = 0.0
        for k in range(K):
            mk = m[k]
            x = 1 if draws[pos] < mk * recips[k] else 0
            pos += 1
            observations[t, k] = x
            if mk > 0.0:
                states[k].update(mk, x)
                p = mk * recips[k]
                reward += p if p < 1.0 else 1.0
        allocations[t] = m
        regrets[t] = rho_star - reward
        if options.record_intervals:
            for k in range(K):
                lower_hist[t, k] = states[k].lower_recip
                upper_hist[t, k] = states[k].upper_recip

    metadata = {
        "instance": instance.digest(),
        "nus": list(instance.nus),
        "horizon": n,
        "base_seed": instance.base_seed,
        "seed": options.seed,
        "mode": options.mode,
        "delta": delta,
        "initial_lower_bounds": lbs,
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


def regret_upper_bound(
    instance: ProblemInstance,
    initial_lower_bounds: Sequence[float],
    n: int,
) -> float:
    """Closed-form regret bound for the optimistic policy, evaluated from
    the true difficulties (reference curve only; the policy never sees nu).

    With delta = (nK)^-2, eta_k = min(1, nu_k) / nu_lower0_k,
    delta~_k = delta / (48 eta_k^4 n^6), c_{k,1} = 27 log(2/delta~_k),
    c_{k,2} = 6 log(2/delta~_k) and u_{j,k} = c_{k,1} / (nu_lower0_k D_{j,k})
    over sorted ranks with gaps D_{j,k} = 1/nu_j - 1/nu_k:

        1 + sum_{k<=ell} c_{k,1} eta_k (1 + log n)
        + [ell < K] ( sum_{k>=ell+2} c_{k,2} / (nu_lower0_k D_{ell+1,k})
                      + sum_{k<=ell+1} c_{k,1} eta_k (1 + log n)
                      + sum_{k>=ell+2} c_{k,1} eta_k (1 + log u_{ell+1,k})
                      + sum_{k>=ell+1} c_{k,1} eta_k (1 + log u_{ell,k}) )

    Returns +inf whenever a divided-by gap is non-positive or refers to a
    rank below 1 (ties or ell = 0 make those terms undefined).
    """
    K = instance.num_jobs
    if len(initial_lower_bounds) != K:
        raise ValueError(f"expected {K} initial lower bounds, got {len(initial_lower_bounds)}")
    profile = optimal_profile(instance)
    ell = profile.ell
    order = profile.sort_order
    delta = default_delta(n, K)
    log_n = math.log(n)

    nu_sorted = [instance.nus[k] for k in order]
    lb_sorted = [float(initial_lower_bounds[k]) for k in order]
    eta = [
        (1.0 if nu is None else min(1.0, nu)) / lb for nu, lb in zip(nu_sorted, lb_sorted)
    ]
    c1 = [27.0 * math.log(2.0 * 48.0 * e**4 * float(n) ** 6 / delta) for e in eta]
    c2 = [v * 6.0 / 27.0 for v in c1]

    total = 1.0 + sum(c1[k] * eta[k] * (1.0 + log_n) for k in range(ell))
    if ell == K:
        return total

    def gap(j: int, k: int) -> float:
        if j < 1:
            return -math.inf
        return profile.gap(j, k)

    bracket = 0.0
    for k in range(ell + 2, K + 1):
        d = gap(ell + 1, k)
        if d <= 0.0:
            return math.inf
        bracket += c2[k - 1] / (lb_sorted[k - 1] * d)
    for k in range(1, ell + 2):
        bracket += c1[k - 1] * eta[k - 1] * (1.0 + log_n)
    for k in range(ell + 2, K + 1):
        d = gap(ell + 1, k)
        if d <= 0.0:
            return math.inf
        u = c1[k - 1] / (lb_sorted[k - 1] * d)
        bracket += c1[k - 1] * eta[k - 1] * (1.0 + math.log(u))
    for k in range(ell + 1, K + 1):
        d = gap(ell, k)
        if d <= 0.0:
            return math.inf
        u = c1[k - 1] / (lb_sorted[k - 1] * d)
        bracket += c1[k - 1] * eta[k - 1] * (1.0 + math.log(u))
    return total + bracket
