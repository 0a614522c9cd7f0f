"""
Pydantic models for the contaminated linear model, the solvers, the tuning rules,
the design-condition checks and the Monte Carlo bench
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class NumericalWarning(UserWarning):
    """Non-fatal numerical diagnostic (degenerate tuning, vacuous constants, pinned columns)"""


class DecompositionError(RuntimeError):
    """Eigendecomposition of a covariance matrix failed"""


def _frozen_array(value, ndim: int) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class ArrayModel(BaseModel):
    """Base for immutable models carrying numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class CovarianceModel(BaseModel):
    """Population covariance of the design rows"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["identity", "ar1", "equicorrelated", "explicit"] = "identity"
    rho: float = 0.0
    matrix: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "ar1" and not -1.0 < self.rho < 1.0:
            raise ValueError(f"ar1 correlation must lie in (-1, 1), got {self.rho}")
        if self.kind == "equicorrelated" and not 0.0 <= self.rho < 1.0:
            raise ValueError(f"equicorrelated correlation must lie in [0, 1), got {self.rho}")
        if self.kind == "explicit" and self.matrix is None:
            raise ValueError("explicit covariance needs a matrix")
        return self

    @classmethod
    def parse(cls, text: str) -> "CovarianceModel":
        """Parse the CLI form identity | ar1:<rho> | equi:<rho>"""
        name, _, arg = text.partition(":")
        if name == "identity":
            return cls(kind="identity")
        if name == "ar1":
            return cls(kind="ar1", rho=float(arg))
        if name in ("equi", "equicorrelated"):
            return cls(kind="equicorrelated", rho=float(arg))
        raise ValueError(f"Unknown covariance '{text}' (expected identity, ar1:<rho>, equi:<rho> or csv:<path>)")


class ContaminationSpec(BaseModel):
    """Which labels get corrupted and how"""
    model_config = ConfigDict(frozen=True)

    o: int = Field(default=0, ge=0)
    mechanism: Literal["fixed_shift", "sign_flip_shift"] = "fixed_shift"
    magnitude: float = 10.0
    index_rule: Literal["first_o", "random"] = "first_o"


class GroundTruth(ArrayModel):
    """Quantities behind a synthetic dataset"""
    beta_star: np.ndarray
    support_S: tuple[int, ...]
    theta_star: np.ndarray
    support_O: tuple[int, ...]
    xi: np.ndarray
    sigma: float = Field(ge=0.0)

    @field_validator("beta_star", "theta_star", "xi", mode="before")
    @classmethod
    def _vector(cls, v):
        return _frozen_array(v, 1)

    @model_validator(mode="after")
    def _check_supports(self):
        off_s = np.ones(self.beta_star.size, dtype=bool)
        off_s[np.asarray(self.support_S, dtype=int)] = False
        if np.any(self.beta_star[off_s] != 0.0):
            raise ValueError("beta_star has nonzero entries outside support_S")
        off_o = np.ones(self.theta_star.size, dtype=bool)
        off_o[np.asarray(self.support_O, dtype=int)] = False
        if np.any(self.theta_star[off_o] != 0.0):
            raise ValueError("theta_star has nonzero entries outside support_O")
        if self.xi.size != self.theta_star.size:
            raise ValueError("xi and theta_star must have the same length")
        return self

    @property
    def s(self) -> int:
        return len(self.support_S)

    @property
    def o(self) -> int:
        return len(self.support_O)


class Dataset(ArrayModel):
    """Design matrix, responses and (for synthetic data) the truth behind them"""
    X: np.ndarray
    y: np.ndarray
    truth: Optional[GroundTruth] = None
    sigma_hint: Optional[float] = None

    @field_validator("X", mode="before")
    @classmethod
    def _matrix(cls, v):
        return _frozen_array(v, 2)

    @field_validator("y", mode="before")
    @classmethod
    def _vector(cls, v):
        return _frozen_array(v, 1)

    @model_validator(mode="after")
    def _check_shapes(self):
        n, p = self.X.shape
        if self.y.size != n:
            raise ValueError(f"y has {self.y.size} entries but X has {n} rows")
        if self.truth is not None:
            t = self.truth
            if t.beta_star.size != p or t.theta_star.size != n:
                raise ValueError("ground truth dimensions do not match X")
            rebuilt = self.X @ t.beta_star + np.sqrt(n) * t.theta_star + t.xi
            gap = np.max(np.abs(self.y - rebuilt)) if n else 0.0
            if gap > 1e-12 * (1.0 + np.max(np.abs(self.y))):
                raise ValueError(f"y != X beta* + sqrt(n) theta* + xi (gap {gap:.3e})")
        return self

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

class PenaltyPair(BaseModel):
    """Tuning parameters (lambda_s, lambda_o) of the augmented Lasso"""
    model_config = ConfigDict(frozen=True)

    lambda_s: float = Field(ge=0.0)
    lambda_o: float = Field(ge=0.0)

    @property
    def degenerate(self) -> bool:
        return self.lambda_s <= 0.0 or self.lambda_o <= 0.0

    def gamma(self) -> float:
        if self.degenerate:
            raise ValueError("gamma is undefined for a zero penalty level")
        return self.lambda_s / self.lambda_o

    def scaled(self, factor: float) -> "PenaltyPair":
        return PenaltyPair(lambda_s=self.lambda_s * factor, lambda_o=self.lambda_o * factor)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    algorithm: Literal["coordinate_descent", "proximal_gradient"] = "coordinate_descent"
    max_sweeps: int = Field(default=10000, ge=1)
    kkt_tol: float = Field(default=1e-8, ge=0.0)
    objective_tol: float = Field(default=1e-12, ge=0.0)
    debug: bool = False
    continuation: bool = True
    continuation_factor: float = Field(default=0.1, gt=0.0, lt=1.0)
    restart: bool = True


class FitResult(ArrayModel):
    beta_hat: np.ndarray
    theta_hat: np.ndarray
    objective: float
    kkt_residual: float = Field(ge=0.0)
    sweeps_used: int = Field(ge=0)
    converged: bool
    algorithm: str = "coordinate_descent"
    objective_trace: tuple[float, ...] = ()

    @field_validator("beta_hat", "theta_hat", mode="before")
    @classmethod
    def _vector(cls, v):
        return _frozen_array(v, 1)

    def to_json(self) -> dict:
        return {
            "beta_hat": self.beta_hat.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "sweeps_used": self.sweeps_used,
            "converged": self.converged,
        }


# ---------------------------------------------------------------------------
# tuning
# ---------------------------------------------------------------------------

class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, lt=1.0)


class LambdaRule(BaseModel):
    """How a bench cell or the CLI picks (lambda_s, lambda_o)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["theorem3", "experiment", "empirical", "fixed"] = "experiment"
    delta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    lambda_s: Optional[float] = Field(default=None, gt=0.0)
    lambda_o: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data):
        if isinstance(data, str):
            return cls._split(data)
        if isinstance(data, dict) and data.get("kind") in ("theorem3", "empirical") and data.get("delta") is None:
            return {**data, "delta": 0.1}
        return data

    @staticmethod
    def _split(text: str) -> dict:
        kind, _, arg = text.strip().partition(":")
        if kind in ("theorem3", "empirical"):
            return {"kind": kind, "delta": float(arg) if arg else 0.1}
        if kind == "experiment":
            return {"kind": kind}
        if kind == "fixed":
            parts = [float(x) for x in arg.split(",") if x]
            if len(parts) == 1:
                parts = parts * 2
            if len(parts) != 2:
                raise ValueError(f"fixed rule needs 'fixed:<lambda_s>,<lambda_o>', got '{text}'")
            return {"kind": kind, "lambda_s": parts[0], "lambda_o": parts[1]}
        raise ValueError(f"Unknown lambda rule '{text}'")

    @model_validator(mode="after")
    def _check_args(self):
        if self.kind == "fixed" and (self.lambda_s is None or self.lambda_o is None):
            raise ValueError("fixed rule needs both lambda_s and lambda_o")
        return self

    def label(self) -> str:
        if self.kind in ("theorem3", "empirical"):
            return f"{self.kind}:{self.delta:g}"
        if self.kind == "fixed":
            return f"fixed:{self.lambda_s:g},{self.lambda_o:g}"
        return self.kind


# ---------------------------------------------------------------------------
# cert
# ---------------------------------------------------------------------------

class TpConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    a1: float = Field(ge=0.0)
    a2: float = Field(ge=0.0)


class IpConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    b1: float = Field(ge=0.0)
    b2: float = Field(ge=0.0)
    b3: float = Field(ge=0.0)


class AtpConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    c1: float = Field(gt=0.0)
    c2: float = Field(ge=0.0)
    c3: float = Field(ge=0.0)


class Theorem2Constants(BaseModel):
    """Gaussian-design constants; atp is None when c1 <= 0 (vacuous regime)"""
    model_config = ConfigDict(frozen=True)

    tp: TpConstants
    ip: IpConstants
    atp: Optional[AtpConstants]
    c1_raw: float
    vacuous: bool


class SamplerSpec(BaseModel):
    """Mixture of test directions used by the TP/IP/ATP checks"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    dense: float = Field(default=0.4, ge=0.0)
    sparse: float = Field(default=0.4, ge=0.0)
    basis: float = Field(default=0.2, ge=0.0)
    sparsity_levels: tuple[int, ...] = (1, 2, 5)
    refine_seeds: int = Field(default=10, ge=0)
    refine_steps: int = Field(default=50, ge=0)

    @model_validator(mode="after")
    def _check_weights(self):
        if self.dense + self.sparse + self.basis <= 0:
            raise ValueError("sampler weights must not all be zero")
        if any(k < 1 for k in self.sparsity_levels):
            raise ValueError("sparsity levels must be positive")
        return self


class CertReport(BaseModel):
    property: Literal["TP", "IP", "ATP", "RE"]
    constants: dict[str, float]
    n_samples: int = Field(ge=0)
    n_violations: int = Field(ge=0)
    min_slack: float
    worst_witness: dict[str, list[float]] = Field(default_factory=dict)
    verdict: Literal["violation_found", "no_violation_found", "upper_bound"] = "no_violation_found"


class WidthEstimate(BaseModel):
    """Monte Carlo estimate of E||Sigma^{1/2} xi||_inf"""
    estimate: float
    stderr: float
    n_samples: int


class Theorem1Check(BaseModel):
    holds: bool
    margin: float
    lhs: float
    rhs: float


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

class ExperimentConfig(BaseModel):
    """One Monte Carlo study; the defaults reproduce the published experiment"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(default=1000, ge=1)
    p: int = Field(default=100, ge=1)
    s_values: list[int] = Field(default_factory=lambda: [5, 15, 25])
    o_values: Optional[list[int]] = None
    eps_values: Optional[list[float]] = None
    o_step: int = Field(default=5, ge=1)
    eps_max: float = Field(default=0.25, ge=0.0, le=1.0)
    sigma: float = Field(default=1.0, ge=0.0)
    amplitude: float = 10.0
    mechanism: Literal["fixed_shift", "sign_flip_shift"] = "fixed_shift"
    index_rule: Literal["first_o", "random"] = "first_o"
    covariance: CovarianceModel = Field(default_factory=CovarianceModel)
    lambda_rule: LambdaRule = Field(default_factory=LambdaRule)
    repetitions: int = Field(default=20, ge=1)
    master_seed: int = 20190101
    solver: SolverConfig = Field(default_factory=SolverConfig)
    include_baseline: bool = False
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_grid(self):
        if not self.s_values:
            raise ValueError("s_values must not be empty")
        for s in self.s_values:
            if not 0 <= s <= self.p:
                raise ValueError(f"sparsity {s} outside [0, p={self.p}]")
        if self.o_values is not None:
            for o in self.o_values:
                if not 0 <= o <= self.n:
                    raise ValueError(f"outlier count {o} outside [0, n={self.n}]")
        if self.eps_values is not None:
            for eps in self.eps_values:
                if not 0.0 <= eps <= 1.0:
                    raise ValueError(f"outlier fraction {eps} outside [0, 1]")
        return self

    def outlier_counts(self) -> list[int]:
        """o grid: explicit o_values, else eps_values, else 0..eps_max*n in steps of o_step"""
        if self.o_values is not None:
            return sorted(set(self.o_values))
        if self.eps_values is not None:
            return sorted({int(round(eps * self.n)) for eps in self.eps_values})
        o_max = int(np.floor(self.eps_max * self.n + 1e-9))
        return list(range(0, o_max + 1, self.o_step))


class TrialRecord(BaseModel):
    """One Monte Carlo replication; fields mirror the records.csv columns"""
    model_config = ConfigDict(frozen=True)

    n: int
    p: int
    s: int
    o: int
    eps: float
    rep: int
    seed: int
    lambda_s: float
    lambda_o: float
    err_mahalanobis: float = Field(ge=0.0)
    err_l2: float = Field(ge=0.0)
    err_l1: float = Field(ge=0.0)
    theta_err_l2: float = Field(ge=0.0)
    # support_f1 is a diagnostic only: convex penalized ERM cannot recover
    # the support reliably under contamination.
    support_f1: float = Field(ge=0.0, le=1.0)
    kkt_residual: float = Field(ge=0.0)
    sweeps: int = Field(ge=0)
    converged: bool
    runtime_ms: float = Field(ge=0.0)


class CellSummary(BaseModel):
    s: int
    o: int
    eps: float
    count: int
    mean_err_l2: float
    std_err_l2: float
    rmse_l2: float
    mean_err_mahalanobis: float
    std_err_mahalanobis: float
    rmse_mahalanobis: float
    convergence_rate: float
    n_nonconverged: int


class LineFit(BaseModel):
    s: int
    slope: float
    intercept: float
    r2: float
    n_points: int
    degenerate: bool = False


class RateShapeFit(BaseModel):
    """Residual sums of squares of err ~ a + b*o versus err ~ a + b*sqrt(o)"""
    s: int
    rss_linear: float
    rss_sqrt: float
    prefers_linear: bool
