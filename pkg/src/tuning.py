"""
Tuning-parameter rules for (lambda_s, lambda_o)
"""

import math
import warnings
from typing import Optional

import numpy as np

from generator import rho
from models import LambdaRule, NoiseModel, NumericalWarning, PenaltyPair


def lambda_theorem3(n: int, p: int, noise: NoiseModel) -> PenaltyPair:
    """lambda_s^2 n = 9 sigma^2 log(p/delta),  lambda_o^2 n = 8 sigma^2 log(n/delta)"""
    if n < 1 or p < 1:
        raise ValueError(f"n and p must be >= 1, got n={n}, p={p}")
    if p / noise.delta <= 1.0 or n / noise.delta <= 1.0:
        raise ValueError(f"log(p/delta) and log(n/delta) must be positive (n={n}, p={p}, delta={noise.delta})")
    return PenaltyPair(
        lambda_s=3.0 * noise.sigma * math.sqrt(math.log(p / noise.delta) / n),
        lambda_o=noise.sigma * math.sqrt(8.0 * math.log(n / noise.delta) / n),
    )


def lambda_experiment(n: int, p: int, s: int, o: int) -> PenaltyPair:
    """lambda_s = lambda_o = sqrt((8/n)(log(p/s) + log(n/o))), needs the true (s, o)"""
    if o == 0:
        raise ValueError("the experiment rule is undefined at o = 0 (log(n/o)); use lambda_theorem3 instead")
    if not 1 <= s <= p:
        raise ValueError(f"sparsity s={s} must lie in [1, p={p}]")
    if not 1 <= o <= n:
        raise ValueError(f"outlier count o={o} must lie in [1, n={n}]")
    lam = math.sqrt((8.0 / n) * (math.log(p / s) + math.log(n / o)))
    if lam == 0.0:
        warnings.warn("experiment rule is degenerate (p = s and n = o): lambda = 0", NumericalWarning, stacklevel=2)
    return PenaltyPair(lambda_s=lam, lambda_o=lam)


def lambda_empirical(X: np.ndarray, sigma_matrix: Optional[np.ndarray], noise: NoiseModel) -> PenaltyPair:
    """Penalization factors of the Gaussian-design lemma; rho(Sigma) falls back to column norms"""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    log_p = math.log(3.0 * p / noise.delta)
    if n < 2.0 * log_p:
        raise ValueError(
            f"the penalization-factor lemma requires n >= 2 log(3p/delta) = {2.0 * log_p:.3f}, got n={n}"
        )
    if sigma_matrix is not None:
        scale = rho(sigma_matrix)
    else:
        scale = float(np.max(np.linalg.norm(X, axis=0))) / math.sqrt(n)
    t = math.sqrt(2.0 * log_p / n)
    return PenaltyPair(
        lambda_s=2.0 * noise.sigma * scale * t * (1.0 + t),
        lambda_o=2.0 * noise.sigma * math.sqrt(2.0 * math.log(3.0 * n / noise.delta) / n),
    )


def lambda_bound_theorem1(X: np.ndarray, n: int, p: int, delta: float) -> float:
    """Smallest lambda allowed by the general-design risk bound"""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    X = np.asarray(X, dtype=float)
    col = float(np.max(np.linalg.norm(X / math.sqrt(n), axis=0)))
    return max(math.sqrt(8.0 * math.log(n / delta)), col * math.sqrt(8.0 * math.log(p / delta))) / math.sqrt(n)


def minimax_rate(n: int, p: int, s: int, o: int, sigma: float = 1.0) -> float:
    """sigma (sqrt(s log(p/s) / n) + o/n)"""
    sparse = math.sqrt(s * math.log(p / s) / n) if s > 0 else 0.0
    return sigma * (sparse + o / n)


def parse_lambda_rule(text: str) -> LambdaRule:
    return LambdaRule.model_validate(text)


def resolve_penalties(
    rule: LambdaRule,
    X: np.ndarray,
    s: int,
    o: int,
    sigma: float,
    sigma_matrix: Optional[np.ndarray] = None,
) -> tuple[PenaltyPair, str]:
    """Apply a rule to one dataset; returns the pair and the label of the rule actually used"""
    n, p = np.shape(X)
    if rule.kind == "fixed":
        return PenaltyPair(lambda_s=rule.lambda_s, lambda_o=rule.lambda_o), rule.label()
    if rule.kind == "experiment":
        if o == n:
            raise ValueError("experiment rule with o = n is degenerate (log(n/o) = 0)")
        if o > 0:
            return lambda_experiment(n, p, s, o), rule.label()
        fallback = LambdaRule(kind="theorem3", delta=0.1)
        if sigma <= 0:
            raise ValueError("experiment rule at o = 0 falls back to theorem3, which needs sigma > 0")
        pair = lambda_theorem3(n, p, NoiseModel(sigma=sigma, delta=fallback.delta))
        warnings.warn(f"experiment rule is undefined at o = 0; using {fallback.label()}", NumericalWarning)
        return pair, fallback.label()
    if sigma <= 0:
        raise ValueError(f"rule '{rule.label()}' needs a positive noise level, got sigma={sigma}")
    noise = NoiseModel(sigma=sigma, delta=rule.delta)
    if rule.kind == "theorem3":
        return lambda_theorem3(n, p, noise), rule.label()
    return lambda_empirical(X, sigma_matrix, noise), rule.label()
