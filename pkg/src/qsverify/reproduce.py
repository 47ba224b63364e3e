"""Preconfigured experiment grids that regenerate the packaged datasets.

fig3  Correlated two-branch source (rho1, N = 100): acceptance probability,
      unconditional and conditional true fidelities, and both certificates
      evaluated at delta = p_hat(k) for a range of failure thresholds k.
      Shows the IID certificate failing on a correlated source while the
      defensive certificate stays a valid lower bound.

fig4  Rotated-copy source (rho2): exact acceptance probability and
      conditional fidelity from the reference computation over two grids
      (phase sweep at N = 5 and size sweep at phi = pi, both at k = 1),
      against both certificates at delta = p_k.

fig5  Honest noisy source: certificate infidelity versus the number of tests
      on one growing run, single-round and round-averaged.

Each function returns plain row dictionaries; ``write_csv`` renders them with
a schema-version header.  Output is bit-stable for a fixed seed: floats are
formatted with 12 significant digits and no timestamps enter the data files.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np

from .certificates import CertificateQuery, dqsv_certificate, sqsv_certificate
from .exact import exact_stats
from .simulate import (
    RandomPlan,
    run_rounds,
    scaling_experiment,
    summarize,
)
from .sources import NoiseSpec, rho1, rho2, unconditional_fidelity
from .strategy import build_singlet_strategy

FIG3_SCHEMA = "qsverify.fig3/1"
FIG4_SCHEMA = "qsverify.fig4/1"
FIG5_SCHEMA = "qsverify.fig5/1"

FIG3_COLUMNS = [
    "k",
    "sqsv_p_hat", "sqsv_p_lo95",
    "sqsv_bound_at_p_hat", "sqsv_bound_at_p_lo95",
    "uncond_fidelity_truth", "uncond_fidelity_measured", "uncond_measured_stderr",
    "dqsv_p_hat", "dqsv_p_lo95",
    "dqsv_bound_at_p_hat", "dqsv_bound_at_p_lo95",
    "cond_fidelity_truth", "cond_truth_stderr",
    "cond_fidelity_measured", "cond_measured_stderr",
]

FIG4_COLUMNS = [
    "grid", "n", "phi", "k",
    "p_k_exact", "F_k_exact", "uncond_fidelity_exact",
    "sqsv_bound_at_p_k", "dqsv_bound_at_p_k", "dqsv_slack",
]

FIG5_COLUMNS = [
    "n",
    "k_single", "eps_sqsv_single", "eps_dqsv_single",
    "k_mean", "eps_sqsv_avg", "eps_dqsv_avg",
]


def fig3_rows(
    seed: int = 42,
    rounds: int = 200,
    n: int = 100,
    k_max: int = 10,
    prep_fidelity: float = 1.0,
    threads: int = 1,
) -> list[dict]:
    """Per-k comparison of both protocols on the two-branch correlated source."""
    strat = build_singlet_strategy()
    lam = strat.lam
    source = rho1(n, NoiseSpec(prep_fidelity))
    sq = run_rounds(
        source, n, strat, rounds, "sqsv",
        RandomPlan.for_experiment(seed, "fig3-sqsv"), threads=threads,
    )
    dq = run_rounds(
        source, n, strat, rounds, "dqsv",
        RandomPlan.for_experiment(seed, "fig3-dqsv"), threads=threads,
    )
    rows = []
    for k in range(k_max + 1):
        s_sum = summarize(sq, k, strat, "sqsv")
        d_sum = summarize(dq, k, strat, "dqsv")
        row = {"k": k}
        for proto, summ in (("sqsv", s_sum), ("dqsv", d_sum)):
            p_hat = summ.p_hat
            p_lo = summ.p_hat_ci[0]
            row[f"{proto}_p_hat"] = p_hat
            row[f"{proto}_p_lo95"] = p_lo
            make = sqsv_certificate if proto == "sqsv" else dqsv_certificate
            for tag, d in (("p_hat", p_hat), ("p_lo95", p_lo)):
                if d > 0.0:
                    bound = make(CertificateQuery(proto, n, k, d, lam)).fidelity_bound
                else:
                    bound = float("nan")
                row[f"{proto}_bound_at_{tag}"] = bound
        row["uncond_fidelity_truth"] = s_sum.unconditional_fidelity_truth
        row["uncond_fidelity_measured"] = s_sum.unconditional_fidelity_measured
        row["uncond_measured_stderr"] = s_sum.unconditional_measured_stderr
        row["cond_fidelity_truth"] = d_sum.conditional_fidelity_truth
        row["cond_truth_stderr"] = d_sum.conditional_truth_stderr
        row["cond_fidelity_measured"] = d_sum.conditional_fidelity_measured
        row["cond_measured_stderr"] = d_sum.conditional_measured_stderr
        rows.append(row)
    return rows


def fig4_rows(
    k: int = 1,
    n_fixed: int = 5,
    phi_grid: tuple[float, ...] = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi),
    n_grid: tuple[int, ...] = tuple(range(2, 11)),
    phi_fixed: float = math.pi,
    prep_fidelity: float = 1.0,
) -> list[dict]:
    """Exact certificates-versus-truth grids for the rotated-copy source."""
    strat = build_singlet_strategy()
    lam = strat.lam
    prep = NoiseSpec(prep_fidelity)
    rows = []

    def one(grid: str, n: int, phi: float) -> dict:
        source = rho2(n, phi, prep)
        stats = exact_stats(source, k, strat)
        uncond = unconditional_fidelity(source, strat.target)
        delta = min(1.0, stats.p_k)
        sq = sqsv_certificate(CertificateQuery("sqsv", n, k, delta, lam)).fidelity_bound
        dq = dqsv_certificate(CertificateQuery("dqsv", n, k, delta, lam)).fidelity_bound
        return {
            "grid": grid,
            "n": n,
            "phi": phi,
            "k": k,
            "p_k_exact": stats.p_k,
            "F_k_exact": stats.F_k,
            "uncond_fidelity_exact": uncond,
            "sqsv_bound_at_p_k": sq,
            "dqsv_bound_at_p_k": dq,
            "dqsv_slack": (stats.F_k - dq) if stats.F_k is not None else float("nan"),
        }

    for phi in phi_grid:
        rows.append(one("phi", n_fixed, phi))
    for n in n_grid:
        rows.append(one("n", n, phi_fixed))
    return rows


def default_fig5_grid(n_max: int = 1000) -> list[int]:
    grid = sorted(set(np.unique(np.round(np.logspace(0, math.log10(n_max), 28))).astype(int)))
    for anchor in (10, 100, n_max):
        if anchor <= n_max and anchor not in grid:
            grid.append(anchor)
    return sorted(grid)


def fig5_rows(
    seed: int = 42,
    fidelity: float = 0.99,
    delta: float = 0.05,
    avg_rounds: int = 80,
    n_grid: list[int] | None = None,
) -> list[dict]:
    """Certificate infidelity versus N on an honest noisy run.

    The single-round columns use round 0 of the same run that the averaged
    columns aggregate over.
    """
    strat = build_singlet_strategy()
    if n_grid is None:
        n_grid = default_fig5_grid()
    result = scaling_experiment(
        NoiseSpec(fidelity), delta, n_grid, strat,
        RandomPlan.for_experiment(seed, "fig5"), rounds=avg_rounds,
    )
    rows = []
    for j, n in enumerate(result["n_grid"]):
        rows.append(
            {
                "n": n,
                "k_single": int(result["k"][0, j]),
                "eps_sqsv_single": float(result["eps_sqsv"][0, j]),
                "eps_dqsv_single": float(result["eps_dqsv"][0, j]),
                "k_mean": float(result["k"][:, j].mean()),
                "eps_sqsv_avg": float(result["eps_sqsv"][:, j].mean()),
                "eps_dqsv_avg": float(result["eps_dqsv"][:, j].mean()),
            }
        )
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.12g}"
    return str(value)


def write_csv(path, schema: str, columns: list[str], rows: list[dict]) -> None:
    """Render rows with a schema-version header line; no timestamps."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row.get(c)) for c in columns) + "\n")


def write_manifest(path, config: dict) -> None:
    """Run metadata; the timestamp lives here, never in the data files."""
    payload = dict(config)
    payload["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
