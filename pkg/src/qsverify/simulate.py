"""Monte Carlo simulation of the SQSV and DQSV verification protocols.

One round draws a branch from the source mixture, picks the tested systems,
draws a measurement setting per test according to the strategy weights, and
samples each outcome from the per-setting pass probability of the tested
copy.  DQSV rounds additionally leave one uniformly chosen system untested
and record its ground-truth target fidelity (known only to the simulator)
plus an optional probe test on it, which drives the measurement-faithful
conditional-fidelity estimator.

Reproducibility: the stream for round ``i`` is derived as
``PCG64(SeedSequence([master_seed, experiment_id, i]))``, so results are
bit-identical for a fixed master seed and independent of how rounds are
scheduled across workers.  Within a round the draw order is: branch, leftover
(DQSV), settings, outcomes, probe (DQSV).  Aggregation uses only sums and
counts, so it is insensitive to completion order.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from .certificates import CertificateQuery, dqsv_certificate, sqsv_certificate
from .linalg import overlap
from .sources import NoiseSpec, ProductSequenceMixture, honest_iid
from .strategy import HomogeneousStrategy, fidelity_from_pass_rate

PROTOCOLS = ("sqsv", "dqsv")
ROUNDS_CSV_SCHEMA = "qsverify.rounds/1"


class RandomPlan:
    """Deterministic per-round random streams.

    ``round_rng(i)`` is a pure function of (master_seed, experiment_id, i);
    see the module docstring.  experiment_id defaults to 0 and is usually the
    CRC32 of an experiment name.
    """

    def __init__(self, master_seed: int, experiment_id: int = 0):
        self.master_seed = int(master_seed)
        self.experiment_id = int(experiment_id)

    @classmethod
    def for_experiment(cls, master_seed: int, name: str) -> "RandomPlan":
        return cls(master_seed, zlib.crc32(name.encode("utf-8")))

    def round_rng(self, round_index: int) -> np.random.Generator:
        seq = np.random.SeedSequence(
            [self.master_seed, self.experiment_id, int(round_index)]
        )
        return np.random.Generator(np.random.PCG64(seq))


def _as_plan(rng) -> RandomPlan:
    if isinstance(rng, RandomPlan):
        return rng
    return RandomPlan(int(rng))


@dataclass(frozen=True)
class RunOutcome:
    """One simulated verification round.

    ``settings`` holds indices into ``strategy.tests`` (one per test, in test
    order) and ``passes`` the corresponding outcomes.  DQSV-only fields are
    None for SQSV rounds.  ``tested_truth_mean`` is the ground-truth mean
    target fidelity of the tested copies, used for unconditional benchmarks.
    """

    settings: np.ndarray
    passes: np.ndarray
    failures: int
    branch_index: int
    tested_truth_mean: float
    leftover_index: int | None = None
    leftover_truth_fidelity: float | None = None
    probe_passed: bool | None = None

    def __post_init__(self):
        if self.failures != int(np.sum(~self.passes)):
            raise ValueError("failure count does not match the pass record")

    def settings_digest(self, strat: HomogeneousStrategy) -> str:
        labels = ",".join(strat.tests[i].label for i in self.settings)
        return hashlib.sha1(labels.encode("ascii")).hexdigest()[:12]


@dataclass(frozen=True)
class ExperimentSummary:
    protocol: str
    n: int
    k: int
    rounds: int
    accepted: int
    p_hat: float
    p_hat_ci: tuple[float, float]
    per_k_histogram: dict[int, int]
    conditional_fidelity_truth: float | None = None
    conditional_truth_std: float | None = None
    conditional_truth_stderr: float | None = None
    conditional_fidelity_measured: float | None = None
    conditional_measured_stderr: float | None = None
    unconditional_fidelity_truth: float | None = None
    unconditional_fidelity_measured: float | None = None
    unconditional_measured_stderr: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "n": self.n,
            "k": self.k,
            "rounds": self.rounds,
            "accepted": self.accepted,
            "p_hat": self.p_hat,
            "p_hat_ci95": list(self.p_hat_ci),
            "per_k_histogram": {str(f): c for f, c in sorted(self.per_k_histogram.items())},
            "conditional_fidelity_truth": self.conditional_fidelity_truth,
            "conditional_truth_std": self.conditional_truth_std,
            "conditional_truth_stderr": self.conditional_truth_stderr,
            "conditional_fidelity_measured": self.conditional_fidelity_measured,
            "conditional_measured_stderr": self.conditional_measured_stderr,
            "unconditional_fidelity_truth": self.unconditional_fidelity_truth,
            "unconditional_fidelity_measured": self.unconditional_fidelity_measured,
            "unconditional_measured_stderr": self.unconditional_measured_stderr,
            "meta": self.meta,
        }


def clopper_pearson(successes: int, trials: int, confidence: float = 0.95):
    """Exact two-sided binomial confidence interval for a proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    alpha = 1.0 - confidence
    lo = 0.0
    hi = 1.0
    if successes > 0:
        lo = float(_scipy_stats.beta.ppf(alpha / 2.0, successes, trials - successes + 1))
    if successes < trials:
        hi = float(_scipy_stats.beta.ppf(1.0 - alpha / 2.0, successes + 1, trials - successes))
    return lo, hi


def _compile_source(m: ProductSequenceMixture, strat: HomogeneousStrategy):
    """Per-branch tables: (L, T) per-test pass probabilities and (L,) fidelities."""
    from .strategy import test_pass_probabilities

    probs = []
    fids = []
    for _, seq in m.branches:
        probs.append(np.array([test_pass_probabilities(strat, s) for s in seq.states]))
        fids.append(np.array([overlap(strat.target, s) for s in seq.states]))
    cum_weights = np.cumsum(m.weights)
    return probs, fids, cum_weights


def _sample_branch(cum_weights: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(cum_weights, rng.random(), side="right"))
    return min(idx, len(cum_weights) - 1)


def _run_round(
    probs,
    fids,
    cum_weights,
    cum_setting_weights,
    n: int,
    protocol: str,
    rng: np.random.Generator,
    probe_tests: int,
) -> RunOutcome:
    branch = _sample_branch(cum_weights, rng)
    table = probs[branch]
    fid = fids[branch]
    if protocol == "dqsv":
        leftover = int(rng.integers(0, n + 1))
        tested = np.concatenate([np.arange(leftover), np.arange(leftover + 1, n + 1)])
    else:
        leftover = None
        tested = np.arange(n)
    settings = np.searchsorted(cum_setting_weights, rng.random(n), side="right")
    np.minimum(settings, len(cum_setting_weights) - 1, out=settings)
    outcome_probs = table[tested, settings]
    passes = rng.random(n) < outcome_probs
    failures = int(n - passes.sum())
    probe_passed = None
    if protocol == "dqsv" and probe_tests > 0:
        psettings = np.searchsorted(
            cum_setting_weights, rng.random(probe_tests), side="right"
        )
        np.minimum(psettings, len(cum_setting_weights) - 1, out=psettings)
        ppasses = rng.random(probe_tests) < table[leftover, psettings]
        # A single probe is the experiment-faithful default; more probes only
        # tighten the simulation-side estimator.
        probe_passed = bool(ppasses[0]) if probe_tests == 1 else ppasses
    return RunOutcome(
        settings=settings.astype(np.int8),
        passes=passes,
        failures=failures,
        branch_index=branch,
        tested_truth_mean=float(fid[tested].mean()),
        leftover_index=leftover,
        leftover_truth_fidelity=None if leftover is None else float(fid[leftover]),
        probe_passed=probe_passed,
    )


def run_sqsv_round(
    m: ProductSequenceMixture,
    n: int,
    strat: HomogeneousStrategy,
    rng: np.random.Generator,
) -> RunOutcome:
    """Test the first n systems of a freshly drawn sequence."""
    if m.num_systems < n:
        raise ValueError(f"mixture has {m.num_systems} systems, need at least {n}")
    probs, fids, cw = _compile_source(m, strat)
    csw = np.cumsum(strat.weights)
    return _run_round(probs, fids, cw, csw, n, "sqsv", rng, probe_tests=0)


def run_dqsv_round(
    m: ProductSequenceMixture,
    n: int,
    strat: HomogeneousStrategy,
    rng: np.random.Generator,
    probe_tests: int = 1,
) -> RunOutcome:
    """Leave one uniformly chosen system untested and test the other n."""
    if m.num_systems != n + 1:
        raise ValueError(f"mixture has {m.num_systems} systems, need exactly {n + 1}")
    probs, fids, cw = _compile_source(m, strat)
    csw = np.cumsum(strat.weights)
    return _run_round(probs, fids, cw, csw, n, "dqsv", rng, probe_tests=probe_tests)


def run_rounds(
    m: ProductSequenceMixture,
    n: int,
    strat: HomogeneousStrategy,
    rounds: int,
    protocol: str,
    plan: RandomPlan,
    threads: int = 1,
    probe_tests: int = 1,
    first_round: int = 0,
) -> list[RunOutcome]:
    """Run a fixed number of independent rounds, optionally across threads."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if protocol == "dqsv" and m.num_systems != n + 1:
        raise ValueError(f"mixture has {m.num_systems} systems, need exactly {n + 1}")
    if protocol == "sqsv" and m.num_systems < n:
        raise ValueError(f"mixture has {m.num_systems} systems, need at least {n}")
    probs, fids, cw = _compile_source(m, strat)
    csw = np.cumsum(strat.weights)
    probe = probe_tests if protocol == "dqsv" else 0

    def one(i: int) -> RunOutcome:
        return _run_round(probs, fids, cw, csw, n, protocol, plan.round_rng(i), probe)

    indices = range(first_round, first_round + rounds)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, indices))
    return [one(i) for i in indices]


def summarize(
    outcomes: list[RunOutcome],
    k: int,
    strat: HomogeneousStrategy,
    protocol: str,
    meta: dict | None = None,
) -> ExperimentSummary:
    """Aggregate rounds into acceptance and fidelity estimates at threshold k."""
    rounds = len(outcomes)
    if rounds == 0:
        raise ValueError("no rounds to summarize")
    failures = np.array([o.failures for o in outcomes])
    accepted_mask = failures <= k
    accepted = int(accepted_mask.sum())
    hist: dict[int, int] = {}
    for f in failures:
        hist[int(f)] = hist.get(int(f), 0) + 1
    n = len(outcomes[0].passes)
    lam = strat.lam

    summary = {
        "protocol": protocol,
        "n": n,
        "k": k,
        "rounds": rounds,
        "accepted": accepted,
        "p_hat": accepted / rounds,
        "p_hat_ci": clopper_pearson(accepted, rounds),
        "per_k_histogram": hist,
        "meta": meta or {},
    }

    if protocol == "dqsv":
        if accepted > 0:
            truth = np.array(
                [o.leftover_truth_fidelity for o, a in zip(outcomes, accepted_mask) if a]
            )
            std = float(truth.std(ddof=1)) if accepted > 1 else 0.0
            summary["conditional_fidelity_truth"] = float(truth.mean())
            summary["conditional_truth_std"] = std
            summary["conditional_truth_stderr"] = std / math.sqrt(accepted)
            probes = [
                o.probe_passed
                for o, a in zip(outcomes, accepted_mask)
                if a and o.probe_passed is not None
            ]
            if probes:
                flat = np.concatenate([np.atleast_1d(p) for p in probes]).astype(float)
                rate = float(flat.mean())
                summary["conditional_fidelity_measured"] = fidelity_from_pass_rate(rate, lam)
                summary["conditional_measured_stderr"] = math.sqrt(
                    max(rate * (1.0 - rate), 0.0) / len(flat)
                ) / (1.0 - lam)
    else:
        tested_truth = np.array([o.tested_truth_mean for o in outcomes])
        summary["unconditional_fidelity_truth"] = float(tested_truth.mean())
        total_tests = rounds * n
        total_passes = int(sum(int(o.passes.sum()) for o in outcomes))
        rate = total_passes / total_tests
        summary["unconditional_fidelity_measured"] = fidelity_from_pass_rate(rate, lam)
        summary["unconditional_measured_stderr"] = math.sqrt(
            max(rate * (1.0 - rate), 0.0) / total_tests
        ) / (1.0 - lam)
    return ExperimentSummary(**summary)


def run_experiment(
    m: ProductSequenceMixture,
    n: int,
    k: int,
    strat: HomogeneousStrategy,
    rounds: int | None,
    protocol: str,
    rng,
    target_acceptances: int | None = None,
    max_rounds: int | None = None,
    threads: int = 1,
    probe_tests: int = 1,
    meta: dict | None = None,
) -> ExperimentSummary:
    """Run a full experiment under one of two stopping rules.

    Fixed mode (``rounds`` given): run exactly that many rounds.  Acceptance
    mode (``target_acceptances`` given): keep running until that many rounds
    were accepted at threshold k, hard-capped at ``max_rounds``.

    ``rng`` is a master seed (int) or a RandomPlan.
    """
    plan = _as_plan(rng)
    if (rounds is None) == (target_acceptances is None):
        raise ValueError("give exactly one of rounds or target_acceptances")
    if rounds is not None:
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        outcomes = run_rounds(
            m, n, strat, rounds, protocol, plan, threads=threads, probe_tests=probe_tests
        )
    else:
        cap = max_rounds if max_rounds is not None else 1000 * target_acceptances
        outcomes = []
        accepted = 0
        index = 0
        chunk = max(16, target_acceptances)
        while accepted < target_acceptances and index < cap:
            take = min(chunk, cap - index)
            batch = run_rounds(
                m, n, strat, take, protocol, plan,
                threads=threads, probe_tests=probe_tests, first_round=index,
            )
            for o in batch:
                outcomes.append(o)
                index += 1
                if o.failures <= k:
                    accepted += 1
                if accepted >= target_acceptances:
                    break
    return summarize(outcomes, k, strat, protocol, meta=meta)


def scaling_experiment(
    noise: NoiseSpec,
    delta: float,
    n_grid: list[int],
    strat: HomogeneousStrategy,
    rng,
    rounds: int = 1,
) -> dict:
    """Certificate scaling on a growing honest run.

    Each round performs max(n_grid) tests on IID noisy singlet copies; at
    every grid point N the number k of failures observed so far is plugged
    into both certificates at significance delta.  Returns per-round arrays
    so callers can report single-round or round-averaged scalings.
    """
    n_grid = [int(x) for x in n_grid]
    if n_grid != sorted(n_grid) or n_grid[0] < 1:
        raise ValueError("n_grid must be ascending positive integers")
    plan = _as_plan(rng)
    max_n = n_grid[-1]
    source = honest_iid(max(max_n, 2), noise)
    probs, _, cw = _compile_source(source, strat)
    csw = np.cumsum(strat.weights)
    table = probs[0]

    ks = np.zeros((rounds, len(n_grid)), dtype=int)
    eps_s = np.zeros((rounds, len(n_grid)))
    eps_d = np.zeros((rounds, len(n_grid)))
    for r in range(rounds):
        rng_r = plan.round_rng(r)
        settings = np.searchsorted(csw, rng_r.random(max_n), side="right")
        np.minimum(settings, len(csw) - 1, out=settings)
        passes = rng_r.random(max_n) < table[np.arange(max_n), settings]
        cum_failures = np.cumsum(~passes)
        for j, n in enumerate(n_grid):
            k = int(cum_failures[n - 1])
            if k > n - 1:
                # Every test failed; no certificate is defined at k = n.
                eps_s[r, j] = 1.0
                eps_d[r, j] = 1.0
                ks[r, j] = k
                continue
            ks[r, j] = k
            eps_s[r, j] = sqsv_certificate(
                CertificateQuery("sqsv", n, k, delta, strat.lam)
            ).infidelity_bound
            eps_d[r, j] = dqsv_certificate(
                CertificateQuery("dqsv", n, k, delta, strat.lam)
            ).infidelity_bound
    return {
        "n_grid": n_grid,
        "delta": delta,
        "fidelity": noise.fidelity,
        "rounds": rounds,
        "k": ks,
        "eps_sqsv": eps_s,
        "eps_dqsv": eps_d,
    }


def summary_to_json(summary: ExperimentSummary) -> str:
    """Stable-key-order JSON rendering of a summary."""
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True)


def write_rounds_csv(path, outcomes: list[RunOutcome], k: int, strat: HomogeneousStrategy):
    """Per-round records with the frozen column set (see README)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={ROUNDS_CSV_SCHEMA}\n")
        fh.write(
            "round,branch,failures,accepted,leftover_index,"
            "leftover_truth_fidelity,settings_digest\n"
        )
        for i, o in enumerate(outcomes):
            left = "" if o.leftover_index is None else str(o.leftover_index)
            fid = (
                ""
                if o.leftover_truth_fidelity is None
                else f"{o.leftover_truth_fidelity:.12g}"
            )
            fh.write(
                f"{i},{o.branch_index},{o.failures},{int(o.failures <= k)},"
                f"{left},{fid},{o.settings_digest(strat)}\n"
            )
