"""
Synthetic data for the contaminated linear model

    y = X beta* + sqrt(n) theta* + xi,   rows of X iid N_p(0, Sigma)
"""

from typing import Optional

import numpy as np
from scipy import linalg

from models import ContaminationSpec, CovarianceModel, Dataset, DecompositionError, GroundTruth


PSD_TOL = 1e-8


def make_covariance(model: CovarianceModel, p: int) -> np.ndarray:
    """Realize the p x p covariance matrix described by `model`"""
    if p < 1:
        raise ValueError(f"dimension p must be >= 1, got {p}")

    if model.kind == "identity":
        sigma = np.eye(p)
    elif model.kind == "ar1":
        idx = np.arange(p)
        sigma = model.rho ** np.abs(idx[:, None] - idx[None, :])
    elif model.kind == "equicorrelated":
        sigma = np.full((p, p), model.rho)
        np.fill_diagonal(sigma, 1.0)
    else:
        sigma = np.array(model.matrix, dtype=float)
        if sigma.shape != (p, p):
            raise ValueError(f"explicit covariance has shape {sigma.shape}, expected ({p}, {p})")

    check_psd(sigma)
    return sigma


def check_psd(sigma: np.ndarray) -> None:
    """Reject matrices that are not symmetric positive semi-definite"""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"covariance must be square, got shape {sigma.shape}")
    scale = max(1.0, float(np.max(np.abs(sigma)))) if sigma.size else 1.0
    if not np.allclose(sigma, sigma.T, atol=1e-12 * scale, rtol=0.0):
        raise ValueError("covariance matrix is not symmetric")
    eigvals = linalg.eigvalsh(sigma)
    top = max(float(eigvals[-1]), 0.0)
    if eigvals[0] < -PSD_TOL * top or (top == 0.0 and eigvals[0] < 0.0):
        raise ValueError(
            f"covariance matrix is not positive semi-definite: eigenvalue {eigvals[0]:.6g} "
            f"(largest {top:.6g})"
        )


def sqrt_psd(sigma: np.ndarray) -> np.ndarray:
    """Symmetric square root; negative eigenvalues from round-off are clamped to 0"""
    sigma = np.asarray(sigma, dtype=float)
    try:
        eigvals, eigvecs = linalg.eigh(sigma)
    except (linalg.LinAlgError, ValueError) as e:
        raise DecompositionError(f"eigendecomposition failed ({_diagnostics(sigma)}): {e}") from e
    if not (np.all(np.isfinite(eigvals)) and np.all(np.isfinite(eigvecs))):
        raise DecompositionError(f"eigendecomposition returned non-finite values ({_diagnostics(sigma)})")
    root = (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    return (root + root.T) / 2.0


def _diagnostics(sigma: np.ndarray) -> str:
    finite = np.all(np.isfinite(sigma))
    if not finite:
        return f"shape {sigma.shape}, matrix has non-finite entries"
    diag = np.diag(sigma)
    return (
        f"shape {sigma.shape}, diag range [{diag.min():.3g}, {diag.max():.3g}], "
        f"frobenius norm {np.linalg.norm(sigma):.3g}"
    )


def rho(sigma: np.ndarray) -> float:
    """rho(Sigma) = max_j sqrt(Sigma_jj)"""
    return float(np.sqrt(np.max(np.diag(sigma))))


def sample_design(n: int, sigma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """n rows iid N(0, Sigma) as standard normal rows times Sigma^{1/2}"""
    if n < 1:
        raise ValueError(f"number of rows n must be >= 1, got {n}")
    root = sqrt_psd(sigma)
    z = rng.standard_normal((n, root.shape[0]))
    return z @ root


def make_beta(p: int, s: int, amplitude: float) -> np.ndarray:
    """First s coordinates equal to `amplitude`, the rest zero"""
    if not 0 <= s <= p:
        raise ValueError(f"sparsity s={s} must lie in [0, p={p}]")
    beta = np.zeros(p)
    beta[:s] = amplitude
    return beta


def _outlier_positions(n: int, spec: ContaminationSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.index_rule == "first_o":
        return np.arange(spec.o)
    return np.sort(rng.choice(n, size=spec.o, replace=False))


def generate(
    n: int,
    p: int,
    cov: CovarianceModel,
    beta_star: np.ndarray,
    sigma: float,
    contamination: ContaminationSpec,
    rng: np.random.Generator,
    covariance_matrix: Optional[np.ndarray] = None,
) -> Dataset:
    """Draw a contaminated dataset; the clean labels get o entries shifted on the theta scale"""
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape != (p,):
        raise ValueError(f"beta_star has shape {beta_star.shape}, expected ({p},)")
    if contamination.o > n:
        raise ValueError(f"cannot corrupt o={contamination.o} labels out of n={n}")
    if contamination.o > 0 and contamination.magnitude == 0.0:
        raise ValueError("contamination magnitude must be nonzero when o > 0")
    if sigma < 0:
        raise ValueError(f"noise level sigma must be >= 0, got {sigma}")

    cov_matrix = covariance_matrix if covariance_matrix is not None else make_covariance(cov, p)
    X = sample_design(n, cov_matrix, rng)
    xi = sigma * rng.standard_normal(n)
    y_clean = X @ beta_star + xi

    idx = _outlier_positions(n, contamination, rng)
    shift = np.sqrt(n) * contamination.magnitude
    y = y_clean.copy()
    if contamination.mechanism == "fixed_shift":
        y[idx] = y_clean[idx] + shift
    else:
        signs = np.where(y_clean[idx] >= 0.0, 1.0, -1.0)
        y[idx] = y_clean[idx] - signs * abs(shift)
    theta_star = (y - y_clean) / np.sqrt(n)

    truth = GroundTruth(
        beta_star=beta_star,
        support_S=tuple(int(j) for j in np.flatnonzero(beta_star)),
        theta_star=theta_star,
        support_O=tuple(int(i) for i in idx),
        xi=xi,
        sigma=sigma,
    )
    return Dataset(X=X, y=y, truth=truth, sigma_hint=sigma)
