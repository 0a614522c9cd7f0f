"""
Augmented Lasso / l1-penalized Huber M-estimator

    min_{beta, theta} (1/2n)||y - X beta - sqrt(n) theta||^2 + lambda_s ||beta||_1 + lambda_o ||theta||_1

Minimizing over theta in closed form gives the Huber composite

    min_beta lambda_o^2 sum_i Phi((y_i - X_i beta) / (lambda_o sqrt(n))) + lambda_s ||beta||_1

with Phi the piecewise Huber function. fit_cd works on the first form, fit_prox on
the second; both report a KKT residual of the first form.
"""

import math
import warnings
from typing import Optional

import numpy as np

from models import Dataset, FitResult, NumericalWarning, PenaltyPair, SolverConfig


def huber(u):
    """Phi(u) = u^2/2 for |u| <= 1, |u| - 1/2 otherwise"""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    out = np.where(a <= 1.0, 0.5 * u * u, a - 0.5)
    return float(out) if out.ndim == 0 else out


def soft_threshold(x, t):
    """sign(x) * max(|x| - t, 0)"""
    if np.any(np.asarray(t) < 0):
        raise ValueError(f"threshold must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_dims(X, y, beta=None, theta=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be a matrix, got shape {X.shape}")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if beta is not None and np.shape(beta) != (p,):
        raise ValueError(f"beta has shape {np.shape(beta)}, expected ({p},)")
    if theta is not None and np.shape(theta) != (n,):
        raise ValueError(f"theta has shape {np.shape(theta)}, expected ({n},)")
    return X, y


def _require_positive(penalties: PenaltyPair) -> None:
    if penalties.degenerate:
        raise ValueError(
            f"penalty levels must be strictly positive, got lambda_s={penalties.lambda_s}, "
            f"lambda_o={penalties.lambda_o}"
        )


def objective_augmented(X, y, beta, theta, penalties: PenaltyPair) -> float:
    X, y = _check_dims(X, y, beta, theta)
    n = y.size
    r = y - X @ beta - math.sqrt(n) * np.asarray(theta)
    return float(
        0.5 * (r @ r) / n
        + penalties.lambda_s * np.sum(np.abs(beta))
        + penalties.lambda_o * np.sum(np.abs(theta))
    )


def objective_huber(X, y, beta, penalties: PenaltyPair) -> float:
    X, y = _check_dims(X, y, beta)
    if penalties.lambda_o <= 0:
        raise ValueError("the Huber form needs lambda_o > 0")
    n = y.size
    lam = penalties.lambda_o
    u = (y - X @ beta) / (lam * math.sqrt(n))
    return float(lam * lam * np.sum(huber(u)) + penalties.lambda_s * np.sum(np.abs(beta)))


def profile_theta(X, y, beta, lambda_o: float) -> np.ndarray:
    """Exact minimizer over theta at fixed beta"""
    X, y = _check_dims(X, y, beta)
    if lambda_o <= 0:
        raise ValueError(f"lambda_o must be > 0, got {lambda_o}")
    n = y.size
    return np.atleast_1d(soft_threshold((y - X @ beta) / math.sqrt(n), lambda_o))


def huber_gradient(X, y, beta, lambda_o: float) -> np.ndarray:
    """Gradient of the smooth part lambda_o^2 sum Phi((y - X beta)/(lambda_o sqrt(n)))"""
    X, y = _check_dims(X, y, beta)
    n = y.size
    scale = lambda_o * math.sqrt(n)
    psi = np.clip((y - X @ beta) / scale, -1.0, 1.0)
    return -(lambda_o / math.sqrt(n)) * (X.T @ psi)


def _violation(grad, coef, lam):
    nonzero = coef != 0.0
    return np.where(
        nonzero,
        np.abs(grad - lam * np.sign(coef)),
        np.maximum(np.abs(grad) - lam, 0.0),
    )


def _kkt_from_residual(X, r, beta, theta, penalties, with_theta=True) -> float:
    n = r.size
    g = (X.T @ r) / n
    worst = float(np.max(_violation(g, beta, penalties.lambda_s))) if beta.size else 0.0
    if with_theta:
        h = r / math.sqrt(n)
        worst = max(worst, float(np.max(_violation(h, theta, penalties.lambda_o))))
    return worst


def kkt_residual(X, y, beta, theta, penalties: PenaltyPair) -> float:
    """Largest subgradient-optimality violation over all p + n coordinates; 0 iff optimal"""
    X, y = _check_dims(X, y, beta, theta)
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r = y - X @ beta - math.sqrt(y.size) * theta
    return _kkt_from_residual(X, r, beta, theta, penalties)


def _continuation_path(X, y, penalties: PenaltyPair, factor: float, with_theta=True) -> list[PenaltyPair]:
    """Common scalings of the target pair, from where zero is optimal down to 1"""
    n = y.size
    top = np.max(np.abs(X.T @ y)) / n / penalties.lambda_s if X.size else 0.0
    if with_theta:
        top = max(top, np.max(np.abs(y)) / math.sqrt(n) / penalties.lambda_o)
    path = []
    scale = top * factor
    while scale > 1.0:
        path.append(penalties.scaled(scale))
        scale *= factor
    path.append(penalties)
    return path


def _zero_columns(col_sq: np.ndarray) -> np.ndarray:
    zero = col_sq == 0.0
    if np.any(zero):
        warnings.warn(
            f"design columns {np.flatnonzero(zero).tolist()} are identically zero; "
            "their coefficients are pinned to 0",
            NumericalWarning,
            stacklevel=3,
        )
    return zero


def _cd_stage(Xf, y, beta, theta, col_sq, penalties, tol, budget, debug, objective_tol, with_theta, trace):
    """Cyclic sweeps: beta coordinates, then the theta block. Returns (r, kkt, sweeps)."""
    n, p = Xf.shape
    sqrt_n = math.sqrt(n)
    lam_s, lam_o = penalties.lambda_s, penalties.lambda_o
    r = y - Xf @ beta - sqrt_n * theta
    kkt = _kkt_from_residual(Xf, r, beta, theta, penalties, with_theta)
    prev = 0.5 * (r @ r) / n + lam_s * np.abs(beta).sum() + lam_o * np.abs(theta).sum()
    sweeps = 0

    while kkt > tol and sweeps < budget:
        for j in range(p):
            cj = col_sq[j]
            if cj == 0.0:
                continue
            xj = Xf[:, j]
            bj_old = beta[j]
            z = (xj @ r) / n + cj * bj_old
            bj = math.copysign(max(abs(z) - lam_s, 0.0), z) / cj
            if bj != bj_old:
                r -= xj * (bj - bj_old)
                beta[j] = bj
        if with_theta:
            # theta coordinates are decoupled given beta, so the block update
            # equals a cyclic pass over them.
            shifted = r + sqrt_n * theta
            theta[:] = soft_threshold(shifted / sqrt_n, lam_o)
        sweeps += 1

        r = y - Xf @ beta - sqrt_n * theta
        obj = 0.5 * (r @ r) / n + lam_s * np.abs(beta).sum() + lam_o * np.abs(theta).sum()
        if debug and obj > prev + objective_tol * (1.0 + abs(prev)):
            raise AssertionError(f"objective increased at sweep {sweeps}: {prev!r} -> {obj!r}")
        if trace is not None:
            trace.append(float(obj))
        prev = obj
        kkt = _kkt_from_residual(Xf, r, beta, theta, penalties, with_theta)

    return kkt, sweeps


def _run_cd(data: Dataset, penalties, config, warm_start, with_theta, algorithm) -> FitResult:
    _require_positive(penalties)
    X, y = _check_dims(data.X, data.y)
    n, p = X.shape
    Xf = np.asfortranarray(X)
    col_sq = np.einsum("ij,ij->j", Xf, Xf) / n
    zero = _zero_columns(col_sq)

    if warm_start is not None:
        beta = np.array(warm_start.beta_hat, dtype=float)
        theta = np.array(warm_start.theta_hat, dtype=float) if with_theta else np.zeros(n)
        _check_dims(X, y, beta, theta)
    else:
        beta, theta = np.zeros(p), np.zeros(n)
    beta[zero] = 0.0

    if config.continuation and warm_start is None:
        path = _continuation_path(X, y, penalties, config.continuation_factor, with_theta)
    else:
        path = [penalties]

    # the final stage always keeps at least one sweep of the budget
    used = 0
    spare = config.max_sweeps - 1
    stage_budget = max(1, spare // (2 * max(1, len(path) - 1)))
    for stage in path[:-1]:
        if used >= spare:
            break
        loose = max(config.kkt_tol, 1e-3 * min(stage.lambda_s, stage.lambda_o))
        _, sweeps = _cd_stage(
            Xf, y, beta, theta, col_sq, stage, loose, min(stage_budget, spare - used),
            config.debug, config.objective_tol, with_theta, None,
        )
        used += sweeps

    trace: list[float] = []
    kkt, sweeps = _cd_stage(
        Xf, y, beta, theta, col_sq, penalties, config.kkt_tol, config.max_sweeps - used,
        config.debug, config.objective_tol, with_theta, trace,
    )
    used += sweeps

    converged = kkt <= config.kkt_tol
    if not converged:
        warnings.warn(
            f"{algorithm} stopped after {used} sweeps with KKT residual {kkt:.3e} > {config.kkt_tol:.1e}",
            NumericalWarning,
            stacklevel=3,
        )
    return FitResult(
        beta_hat=beta,
        theta_hat=theta,
        objective=objective_augmented(X, y, beta, theta, penalties),
        kkt_residual=kkt,
        sweeps_used=used,
        converged=converged,
        algorithm=algorithm,
        objective_trace=tuple(trace),
    )


def fit_cd(
    data: Dataset,
    penalties: PenaltyPair,
    config: SolverConfig = SolverConfig(),
    warm_start: Optional[FitResult] = None,
) -> FitResult:
    """Cyclic coordinate descent over the p + n coordinates of (beta, theta)"""
    return _run_cd(data, penalties, config, warm_start, with_theta=True, algorithm="coordinate_descent")


def fit_lasso_baseline(
    data: Dataset,
    lambda_s: float,
    config: SolverConfig = SolverConfig(),
) -> FitResult:
    """Plain least-squares Lasso (theta pinned at 0), used as the non-robust comparator"""
    # lambda_o only enters the objective through ||theta||_1 = 0
    penalties = PenaltyPair(lambda_s=lambda_s, lambda_o=1.0)
    return _run_cd(data, penalties, config, None, with_theta=False, algorithm="lasso_baseline")


def fit_prox(
    data: Dataset,
    penalties: PenaltyPair,
    config: SolverConfig = SolverConfig(algorithm="proximal_gradient"),
    warm_start: Optional[FitResult] = None,
) -> FitResult:
    """Accelerated proximal gradient (FISTA with adaptive restart) on the Huber composite"""
    _require_positive(penalties)
    X, y = _check_dims(data.X, data.y)
    n, p = X.shape
    sqrt_n = math.sqrt(n)
    lam_s, lam_o = penalties.lambda_s, penalties.lambda_o
    _zero_columns(np.einsum("ij,ij->j", X, X))

    lipschitz = float(np.linalg.norm(X, 2)) ** 2 / n if X.size else 0.0
    x = np.array(warm_start.beta_hat, dtype=float) if warm_start is not None else np.zeros(p)
    _check_dims(X, y, x)

    def certificate(beta):
        theta = soft_threshold((y - X @ beta) / sqrt_n, lam_o)
        theta = np.atleast_1d(theta)
        r = y - X @ beta - sqrt_n * theta
        return theta, _kkt_from_residual(X, r, beta, theta, penalties)

    theta, kkt = certificate(x)
    trace: list[float] = []
    iters = 0

    if lipschitz > 0.0:
        step = 1.0 / lipschitz
        x_old = x.copy()
        t = 1.0
        while kkt > config.kkt_tol and iters < config.max_sweeps:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            w = x + ((t - 1.0) / t_next) * (x - x_old)
            grad = huber_gradient(X, y, w, lam_o)
            x_new = soft_threshold(w - step * grad, step * lam_s)
            x_new = np.atleast_1d(x_new)
            iters += 1
            if config.restart and float((w - x_new) @ (x_new - x)) > 0.0:
                t_next = 1.0
            stalled = np.array_equal(x_new, x) and np.array_equal(x, x_old)
            x_old, x, t = x, x_new, t_next
            theta, kkt = certificate(x)
            trace.append(objective_huber(X, y, x, penalties))
            if stalled:
                break

    converged = kkt <= config.kkt_tol
    if not converged:
        warnings.warn(
            f"proximal_gradient stopped after {iters} iterations with KKT residual "
            f"{kkt:.3e} > {config.kkt_tol:.1e}",
            NumericalWarning,
            stacklevel=2,
        )
    return FitResult(
        beta_hat=x,
        theta_hat=theta,
        objective=objective_augmented(X, y, x, theta, penalties),
        kkt_residual=kkt,
        sweeps_used=iters,
        converged=converged,
        algorithm="proximal_gradient",
        objective_trace=tuple(trace),
    )


def fit(
    data: Dataset,
    penalties: PenaltyPair,
    config: SolverConfig = SolverConfig(),
    warm_start: Optional[FitResult] = None,
) -> FitResult:
    if config.algorithm == "proximal_gradient":
        return fit_prox(data, penalties, config, warm_start)
    return fit_cd(data, penalties, config, warm_start)
