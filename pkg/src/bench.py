"""
Monte Carlo experiment engine

Every trial draws its own dataset from a seed derived from (master_seed, s, o, rep),
so records do not depend on execution order or on the number of worker threads.
"""

import asyncio
import math
import sys
import time
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from generator import generate, make_beta, make_covariance, sqrt_psd
from models import (
    CellSummary,
    ContaminationSpec,
    ExperimentConfig,
    FitResult,
    LineFit,
    NumericalWarning,
    RateShapeFit,
    TrialRecord,
)
from solver import fit, fit_lasso_baseline
from tuning import minimax_rate, resolve_penalties
from utils.seeding import trial_rng


class ExperimentRun(BaseModel):
    """Everything one run_experiment call produced"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: List[TrialRecord]
    baseline: List[TrialRecord] = []
    failures: List[str] = []
    rules_used: dict[str, str] = {}


def default_experiment_config(**overrides) -> ExperimentConfig:
    """The published study: n=1000, p=100, s in {5,15,25}, o = 0..250 step 5, 20 repetitions"""
    return ExperimentConfig(**overrides)


def resolve_cells(config: ExperimentConfig) -> list[tuple[int, int]]:
    """(s, o) grid; rejects cells the tuning rule cannot handle before any trial runs"""
    cells = [(s, o) for s in config.s_values for o in config.outlier_counts()]
    for s, o in cells:
        if config.lambda_rule.kind == "experiment":
            if o == config.n:
                raise ValueError(f"cell s={s}, o={o}: experiment rule is degenerate at o = n (log(n/o) = 0)")
            if s < 1:
                raise ValueError(f"cell s={s}, o={o}: experiment rule needs s >= 1")
            if o == 0 and config.sigma <= 0:
                raise ValueError("o = 0 cells fall back to theorem3, which needs sigma > 0")
        elif config.lambda_rule.kind in ("theorem3", "empirical") and config.sigma <= 0:
            raise ValueError(f"rule '{config.lambda_rule.label()}' needs sigma > 0")
    return cells


def _support_f1(beta_hat: np.ndarray, beta_star: np.ndarray) -> float:
    est, true = beta_hat != 0.0, beta_star != 0.0
    denom = int(est.sum() + true.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((est & true).sum()) / denom


def _record(config, s, o, rep, seed, penalties, result: FitResult, data, root, runtime_ms) -> TrialRecord:
    truth = data.truth
    diff = result.beta_hat - truth.beta_star
    return TrialRecord(
        n=config.n,
        p=config.p,
        s=s,
        o=o,
        eps=o / config.n,
        rep=rep,
        seed=seed,
        lambda_s=penalties.lambda_s,
        lambda_o=penalties.lambda_o,
        err_mahalanobis=float(np.linalg.norm(root @ diff)),
        err_l2=float(np.linalg.norm(diff)),
        err_l1=float(np.abs(diff).sum()),
        theta_err_l2=float(np.linalg.norm(result.theta_hat - truth.theta_star)),
        support_f1=_support_f1(result.beta_hat, truth.beta_star),
        kkt_residual=result.kkt_residual,
        sweeps=result.sweeps_used,
        converged=result.converged,
        runtime_ms=runtime_ms,
    )


def run_trial(
    config: ExperimentConfig,
    s: int,
    o: int,
    rep: int,
    sigma_matrix: Optional[np.ndarray] = None,
    baseline: bool = False,
):
    """
    One replication of cell (s, o)

    Returns:
        (record, baseline_record or None, label of the tuning rule used)
    """
    sigma_matrix = sigma_matrix if sigma_matrix is not None else make_covariance(config.covariance, config.p)
    root = sqrt_psd(sigma_matrix)
    seed, rng = trial_rng(config.master_seed, s, o, rep)

    data = generate(
        config.n,
        config.p,
        config.covariance,
        make_beta(config.p, s, config.amplitude),
        config.sigma,
        ContaminationSpec(o=o, mechanism=config.mechanism, magnitude=config.amplitude,
                          index_rule=config.index_rule),
        rng,
        covariance_matrix=sigma_matrix,
    )
    penalties, rule_used = resolve_penalties(config.lambda_rule, data.X, s, o, config.sigma, sigma_matrix)

    start = time.perf_counter()
    result = fit(data, penalties, config.solver)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    record = _record(config, s, o, rep, seed, penalties, result, data, root, runtime_ms)

    base = None
    if baseline:
        start = time.perf_counter()
        lasso = fit_lasso_baseline(data, penalties.lambda_s, config.solver)
        base = _record(config, s, o, rep, seed, penalties, lasso, data, root,
                       (time.perf_counter() - start) * 1000.0)
    return record, base, rule_used


async def _run_all(config: ExperimentConfig, cells, sigma_matrix, threads: int):
    loop = asyncio.get_running_loop()
    reps = config.repetitions
    pending = {cell: reps for cell in cells}
    outcomes, failures = [], []

    def job(s, o, rep):
        try:
            return (s, o, rep), run_trial(config, s, o, rep, sigma_matrix, config.include_baseline), None
        except Exception as e:  # a failed trial must not sink the whole study
            return (s, o, rep), None, f"s={s}, o={o}, rep={rep}: {type(e).__name__}: {e}"

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            loop.run_in_executor(pool, job, s, o, rep)
            for s, o in cells
            for rep in range(reps)
        ]
        done_cells = 0
        for fut in asyncio.as_completed(futures):
            (s, o, rep), outcome, error = await fut
            if error:
                failures.append(error)
            else:
                outcomes.append(((s, o, rep), outcome))
            pending[(s, o)] -= 1
            if pending[(s, o)] == 0:
                done_cells += 1
                print(f"📊 cell s={s}, o={o} done ({done_cells}/{len(cells)})", file=sys.stderr)
    return outcomes, failures


def execute(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentRun:
    """Run every (cell, repetition) pair; trial failures are collected, config errors raise"""
    cells = resolve_cells(config)
    sigma_matrix = make_covariance(config.covariance, config.p)
    workers = threads or config.threads
    print(
        f"🚀 Running {len(cells)} cells x {config.repetitions} repetitions on {workers} thread(s)",
        file=sys.stderr,
    )

    with warnings.catch_warnings():
        # non-convergence is carried by each record's converged flag
        warnings.simplefilter("ignore", NumericalWarning)
        outcomes, failures = asyncio.run(_run_all(config, cells, sigma_matrix, workers))
    outcomes.sort(key=lambda item: item[0])

    records = [outcome[0] for _, outcome in outcomes]
    baseline = [outcome[1] for _, outcome in outcomes if outcome[1] is not None]
    rules = {f"s={s},o={o}": outcome[2] for (s, o, _), outcome in outcomes}

    nonconverged = sum(not r.converged for r in records)
    status = "✅" if not failures and not nonconverged else "⚠️"
    print(
        f"{status} {len(records)} trials finished, {nonconverged} not converged, {len(failures)} failed",
        file=sys.stderr,
    )
    for failure in failures:
        print(f"❌ {failure}", file=sys.stderr)
    return ExperimentRun(records=records, baseline=baseline, failures=failures, rules_used=rules)


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> List[TrialRecord]:
    return execute(config, threads).records


def summarize(records: Iterable[TrialRecord], expected_cells: Optional[Iterable[tuple[int, int]]] = None) -> List[CellSummary]:
    """Per (s, o) cell: mean, std and root-mean-square of the l2 and Mahalanobis errors"""
    groups = defaultdict(list)
    for record in records:
        groups[(record.s, record.o)].append(record)
    if not groups:
        raise ValueError("cannot summarize an empty record set")

    if expected_cells is not None:
        missing = sorted(set(expected_cells) - set(groups))
        if missing:
            warnings.warn(f"cells without records omitted from the summary: {missing}", NumericalWarning, stacklevel=2)

    summary = []
    for (s, o), group in sorted(groups.items()):
        l2 = np.array([r.err_l2 for r in group])
        mah = np.array([r.err_mahalanobis for r in group])
        converged = sum(r.converged for r in group)
        summary.append(CellSummary(
            s=s,
            o=o,
            eps=group[0].eps,
            count=len(group),
            mean_err_l2=float(l2.mean()),
            std_err_l2=float(l2.std()),
            rmse_l2=float(math.sqrt(np.mean(l2 ** 2))),
            mean_err_mahalanobis=float(mah.mean()),
            std_err_mahalanobis=float(mah.std()),
            rmse_mahalanobis=float(math.sqrt(np.mean(mah ** 2))),
            convergence_rate=converged / len(group),
            n_nonconverged=len(group) - converged,
        ))
    return summary


def _ols(x: np.ndarray, y: np.ndarray):
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return coef, float(resid @ resid)


def linear_fit_sqrt_mse(summary: Iterable[CellSummary], s: int) -> LineFit:
    """Least-squares line of sqrt(MSE) against eps for one sparsity level"""
    cells = sorted((c for c in summary if c.s == s), key=lambda c: c.eps)
    if len(cells) < 3:
        raise ValueError(f"need at least 3 eps points for s={s}, got {len(cells)}")
    x = np.array([c.eps for c in cells])
    y = np.array([c.rmse_l2 for c in cells])
    (intercept, slope), rss = _ols(x, y)
    tss = float(np.sum((y - y.mean()) ** 2))
    degenerate = bool(np.all(y == y[0]))
    if degenerate:
        warnings.warn(f"sqrt(MSE) is constant for s={s}; r^2 set to 1 by convention", NumericalWarning, stacklevel=2)
    return LineFit(
        s=s,
        slope=float(slope),
        intercept=float(intercept),
        r2=1.0 if degenerate else 1.0 - rss / tss,
        n_points=len(cells),
        degenerate=degenerate,
    )


def compare_rate_shapes(summary: Iterable[CellSummary], s: int) -> RateShapeFit:
    """Does the mean error grow like o or like sqrt(o)?"""
    cells = sorted((c for c in summary if c.s == s), key=lambda c: c.o)
    if len(cells) < 3:
        raise ValueError(f"need at least 3 outlier levels for s={s}, got {len(cells)}")
    o = np.array([c.o for c in cells], dtype=float)
    err = np.array([c.mean_err_l2 for c in cells])
    _, rss_linear = _ols(o, err)
    _, rss_sqrt = _ols(np.sqrt(o), err)
    return RateShapeFit(s=s, rss_linear=rss_linear, rss_sqrt=rss_sqrt, prefers_linear=rss_linear < rss_sqrt)


def reference_scales(config: ExperimentConfig) -> dict[str, float]:
    """Minimax-rate reference per cell, written next to the summary"""
    return {
        f"s={s},o={o}": minimax_rate(config.n, config.p, s, o, config.sigma)
        for s in config.s_values
        for o in config.outlier_counts()
    }
