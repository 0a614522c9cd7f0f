"""
Design-condition constants and empirical checks

TP   ||Z v||_2 >= a1 ||S v||_2 - a2 ||v||_1
IP   |u' Z v|  <= b1 ||S v||_2 ||u||_2 + b2 ||v||_1 ||u||_2 + b3 ||S v||_2 ||u||_1
ATP  ||Z v + u||_2 >= c1 ||[S v; u]||_2 - c2 ||v||_1 - c3 ||u||_1

with Z = X / sqrt(n) and S = Sigma^{1/2}. The checks sample directions and refine the
worst ones by local ascent, so a clean report means "no violation found", never
"certified".
"""

import math
import warnings
from typing import Callable, Optional

import numpy as np

from generator import rho, sqrt_psd
from models import (
    AtpConstants,
    CertReport,
    IpConstants,
    NumericalWarning,
    SamplerSpec,
    Theorem1Check,
    Theorem2Constants,
    TpConstants,
    WidthEstimate,
)
from utils.seeding import make_rng


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

def theorem2_constants(n: int, p: int, delta: float) -> Theorem2Constants:
    """Constants that hold for a Gaussian design with probability >= 1 - 2 delta"""
    if n < 100:
        raise ValueError(f"Theorem 2 requires n >= 100, got n={n}")
    if not 0.0 < delta < 1.0 / 7.0:
        raise ValueError(f"Theorem 2 requires delta in (0, 1/7), got delta={delta}")
    sq = math.sqrt(n)
    log_p = math.sqrt(2.0 * math.log(p) / n)
    log_n = math.sqrt(2.0 * math.log(n) / n)

    a1 = 1.0 - (4.3 + math.sqrt(2.0 * math.log(9.0 / delta))) / sq
    a2 = 1.2 * log_p
    b1 = (4.8 * math.sqrt(2.0) + math.sqrt(2.0 * math.log(81.0 / delta))) / sq
    b3 = 1.2 * log_n
    c1 = 0.75 - (17.5 + 9.6 * math.sqrt(2.0 * math.log(2.0 / delta))) / sq
    c2 = 3.6 * log_p
    c3 = 2.4 * log_n

    vacuous = c1 <= 0.0 or a1 <= 0.0
    if vacuous:
        warnings.warn(
            f"Theorem 2 constants are vacuous at n={n}, delta={delta} (a1={a1:.4f}, c1={c1:.4f})",
            NumericalWarning,
            stacklevel=2,
        )
    return Theorem2Constants(
        tp=TpConstants(a1=max(a1, 0.0), a2=a2),
        ip=IpConstants(b1=b1, b2=a2, b3=b3),
        atp=AtpConstants(c1=c1, c2=c2, c3=c3) if c1 > 0.0 else None,
        c1_raw=c1,
        vacuous=vacuous,
    )


def combine_atp(tp: TpConstants, ip: IpConstants, alpha: float, factor: float = 1.0) -> AtpConstants:
    """TP + IP => ATP; factor=1 follows the supplement lemma, factor=2 the main-text statement"""
    gap = tp.a1 ** 2 - ip.b1
    if gap <= 0.0:
        raise ValueError(f"need a1^2 > b1 to combine (a1^2={tp.a1 ** 2:.6g}, b1={ip.b1:.6g}); no admissible alpha")
    upper = math.sqrt(gap)
    if not 0.0 < alpha < upper:
        raise ValueError(f"alpha={alpha} outside the admissible interval (0, {upper:.6g})")
    return AtpConstants(
        c1=math.sqrt(gap - alpha ** 2),
        c2=tp.a2 + factor * ip.b2 / alpha,
        c3=factor * ip.b3 / alpha,
    )


# ---------------------------------------------------------------------------
# Slacks (columns of V / U are the test directions)
# ---------------------------------------------------------------------------

def _norms(M: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->j", M, M))


def _unit(M: np.ndarray, norms: np.ndarray) -> np.ndarray:
    safe = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms > 0.0, M / safe, 0.0)


def _tp_batch(Z, S, V, c: TpConstants, grad=False):
    ZV, SV = Z @ V, S @ V
    nz, ns = _norms(ZV), _norms(SV)
    slack = nz - c.a1 * ns + c.a2 * np.abs(V).sum(axis=0)
    if not grad:
        return slack, None
    g = Z.T @ _unit(ZV, nz) - c.a1 * (S @ _unit(SV, ns)) + c.a2 * np.sign(V)
    return slack, g


def _ip_batch(Z, S, V, U, c: IpConstants, grad=False):
    ZV, SV = Z @ V, S @ V
    inner = np.einsum("ij,ij->j", U, ZV)
    A, B = _norms(SV), _norms(U)
    C, D = np.abs(V).sum(axis=0), np.abs(U).sum(axis=0)
    rhs = c.b1 * A * B + c.b2 * C * B + c.b3 * A * D
    lhs = np.abs(inner)
    slack = rhs - lhs
    if not grad:
        return slack, None
    # ascend lhs / rhs
    sgn = np.sign(inner)
    gv_l, gu_l = sgn * (Z.T @ U), sgn * ZV
    gv_r = (c.b1 * B + c.b3 * D) * (S @ _unit(SV, A)) + c.b2 * B * np.sign(V)
    gu_r = (c.b1 * A + c.b2 * C) * _unit(U, B) + c.b3 * A * np.sign(U)
    pos = rhs > 0.0
    safe = np.where(pos, rhs, 1.0)
    gv = np.where(pos, (gv_l * rhs - lhs * gv_r) / safe ** 2, gv_l)
    gu = np.where(pos, (gu_l * rhs - lhs * gu_r) / safe ** 2, gu_l)
    return slack, (gv, gu)


def _atp_batch(Z, S, V, U, c: AtpConstants, grad=False):
    ZV, SV = Z @ V, S @ V
    W = ZV + U
    nw = _norms(W)
    A, B = _norms(SV), _norms(U)
    joint = np.sqrt(A * A + B * B)
    slack = nw - c.c1 * joint + c.c2 * np.abs(V).sum(axis=0) + c.c3 * np.abs(U).sum(axis=0)
    if not grad:
        return slack, None
    Wn = _unit(W, nw)
    safe = np.where(joint > 0.0, joint, 1.0)
    gv = Z.T @ Wn - c.c1 * np.where(joint > 0.0, (S @ SV) / safe, 0.0) + c.c2 * np.sign(V)
    gu = Wn - c.c1 * np.where(joint > 0.0, U / safe, 0.0) + c.c3 * np.sign(U)
    return slack, (gv, gu)


def _prepare(X, sigma_matrix):
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    S = sqrt_psd(np.eye(p) if sigma_matrix is None else sigma_matrix)
    if S.shape != (p, p):
        raise ValueError(f"Sigma has shape {S.shape}, expected ({p}, {p})")
    return X / math.sqrt(n), S


def tp_slack(X, sigma_matrix, v, consts: TpConstants) -> float:
    Z, S = _prepare(X, sigma_matrix)
    return float(_tp_batch(Z, S, np.asarray(v, dtype=float)[:, None], consts)[0][0])


def ip_slack(X, sigma_matrix, v, u, consts: IpConstants) -> float:
    Z, S = _prepare(X, sigma_matrix)
    V, U = np.asarray(v, dtype=float)[:, None], np.asarray(u, dtype=float)[:, None]
    return float(_ip_batch(Z, S, V, U, consts)[0][0])


def atp_slack(X, sigma_matrix, v, u, consts: AtpConstants) -> float:
    Z, S = _prepare(X, sigma_matrix)
    V, U = np.asarray(v, dtype=float)[:, None], np.asarray(u, dtype=float)[:, None]
    return float(_atp_batch(Z, S, V, U, consts)[0][0])


# ---------------------------------------------------------------------------
# Directed sampling
# ---------------------------------------------------------------------------

def sample_directions(dim: int, m: int, spec: SamplerSpec, rng: np.random.Generator) -> np.ndarray:
    """m unit columns: dense Gaussian, k-sparse Gaussian and signed basis vectors"""
    total = spec.dense + spec.sparse + spec.basis
    n_dense = int(round(m * spec.dense / total))
    n_basis = int(round(m * spec.basis / total))
    n_dense = min(n_dense, m)
    n_basis = min(n_basis, m - n_dense)
    n_sparse = m - n_dense - n_basis

    out = np.zeros((dim, m))
    out[:, :n_dense] = rng.standard_normal((dim, n_dense))
    for i in range(n_sparse):
        k = min(spec.sparsity_levels[i % len(spec.sparsity_levels)], dim)
        idx = rng.choice(dim, size=k, replace=False)
        out[idx, n_dense + i] = rng.standard_normal(k)
    for i in range(n_basis):
        out[rng.integers(dim), n_dense + n_sparse + i] = rng.choice((-1.0, 1.0))
    return _unit(out, _norms(out))


def _split_budget(N: int, spec: SamplerSpec) -> tuple[int, int]:
    if N < 1:
        raise ValueError(f"number of samples N must be >= 1, got {N}")
    refine = min(spec.refine_seeds, N // 2) if spec.refine_steps > 0 else 0
    return N - refine, refine


def _refine(blocks, worst, step_fn: Callable, normalize: Callable, slack_fn: Callable, steps: int):
    """Normalized-gradient steps from the worst points; keeps the lowest slack seen per path"""
    cur = [b[:, worst].copy() for b in blocks]
    best_slack = slack_fn(*cur)
    best = [c.copy() for c in cur]
    for it in range(1, steps + 1):
        grads = step_fn(*cur)
        scale = np.sqrt(sum(np.einsum("ij,ij->j", g, g) for g in grads))
        scale = np.where(scale > 0.0, scale, 1.0)
        eta = 0.1 / math.sqrt(it)
        cur = normalize(*[c + eta * g / scale for c, g in zip(cur, grads)])
        slack = slack_fn(*cur)
        improved = slack < best_slack
        best_slack = np.where(improved, slack, best_slack)
        best = [np.where(improved, c, b) for c, b in zip(cur, best)]
    return best, best_slack


def _report(prop, consts: dict, slacks, witnesses, valid=None) -> CertReport:
    slacks = np.asarray(slacks, dtype=float)
    counted = slacks if valid is None else slacks[valid]
    if counted.size == 0:
        return CertReport(property=prop, constants=consts, n_samples=int(slacks.size),
                          n_violations=0, min_slack=0.0)
    pos = int(np.argmin(counted))
    col = pos if valid is None else int(np.flatnonzero(valid)[pos])
    n_viol = int(np.count_nonzero(counted < 0.0))
    return CertReport(
        property=prop,
        constants=consts,
        n_samples=int(slacks.size),
        n_violations=n_viol,
        min_slack=float(counted[pos]),
        worst_witness={name: w[:, col].tolist() for name, w in witnesses.items()},
        verdict="violation_found" if n_viol else "no_violation_found",
    )


def check_tp(X, sigma_matrix, consts: TpConstants, sampler_spec: SamplerSpec = SamplerSpec(),
             N: int = 1000, rng: Optional[np.random.Generator] = None) -> CertReport:
    rng = rng if rng is not None else make_rng(0)
    Z, S = _prepare(X, sigma_matrix)
    n_random, n_refine = _split_budget(N, sampler_spec)
    V = sample_directions(Z.shape[1], n_random, sampler_spec, rng)
    slacks, _ = _tp_batch(Z, S, V, consts)

    if n_refine:
        worst = np.argsort(slacks)[:n_refine]
        (Vr,), sr = _refine(
            [V], worst,
            step_fn=lambda v: (-_tp_batch(Z, S, v, consts, grad=True)[1],),
            normalize=lambda v: (_unit(v, _norms(v)),),
            slack_fn=lambda v: _tp_batch(Z, S, v, consts)[0],
            steps=sampler_spec.refine_steps,
        )
        V, slacks = np.hstack([V, Vr]), np.concatenate([slacks, sr])
    return _report("TP", consts.model_dump(), slacks, {"v": V})


def _pair_samples(Z, spec, n_random, rng):
    n, p = Z.shape
    return sample_directions(p, n_random, spec, rng), sample_directions(n, n_random, spec, rng)


def check_ip(X, sigma_matrix, consts: IpConstants, sampler_spec: SamplerSpec = SamplerSpec(),
             N: int = 1000, rng: Optional[np.random.Generator] = None) -> CertReport:
    rng = rng if rng is not None else make_rng(0)
    Z, S = _prepare(X, sigma_matrix)
    n_random, n_refine = _split_budget(N, sampler_spec)
    V, U = _pair_samples(Z, sampler_spec, n_random, rng)
    slacks, _ = _ip_batch(Z, S, V, U, consts)

    if n_refine:
        worst = np.argsort(slacks)[:n_refine]
        (Vr, Ur), sr = _refine(
            [V, U], worst,
            step_fn=lambda v, u: _ip_batch(Z, S, v, u, consts, grad=True)[1],
            normalize=lambda v, u: (_unit(v, _norms(v)), _unit(u, _norms(u))),
            slack_fn=lambda v, u: _ip_batch(Z, S, v, u, consts)[0],
            steps=sampler_spec.refine_steps,
        )
        V, U = np.hstack([V, Vr]), np.hstack([U, Ur])
        slacks = np.concatenate([slacks, sr])
    # v = 0 or u = 0 makes both sides vanish
    valid = (_norms(V) > 0.0) & (_norms(U) > 0.0)
    return _report("IP", consts.model_dump(), slacks, {"v": V, "u": U}, valid)


def check_atp(X, sigma_matrix, consts: AtpConstants, sampler_spec: SamplerSpec = SamplerSpec(),
              N: int = 1000, rng: Optional[np.random.Generator] = None) -> CertReport:
    rng = rng if rng is not None else make_rng(0)
    Z, S = _prepare(X, sigma_matrix)
    n_random, n_refine = _split_budget(N, sampler_spec)
    V, U = _pair_samples(Z, sampler_spec, n_random, rng)
    # random split of the unit mass between the two blocks
    angle = rng.uniform(0.0, math.pi / 2.0, size=n_random)
    V, U = V * np.cos(angle), U * np.sin(angle)
    slacks, _ = _atp_batch(Z, S, V, U, consts)

    def joint_unit(v, u):
        norm = np.sqrt(np.einsum("ij,ij->j", v, v) + np.einsum("ij,ij->j", u, u))
        return _unit(v, norm), _unit(u, norm)

    if n_refine:
        worst = np.argsort(slacks)[:n_refine]
        (Vr, Ur), sr = _refine(
            [V, U], worst,
            step_fn=lambda v, u: tuple(-g for g in _atp_batch(Z, S, v, u, consts, grad=True)[1]),
            normalize=joint_unit,
            slack_fn=lambda v, u: _atp_batch(Z, S, v, u, consts)[0],
            steps=sampler_spec.refine_steps,
        )
        V, U = np.hstack([V, Vr]), np.hstack([U, Ur])
        slacks = np.concatenate([slacks, sr])
    return _report("ATP", consts.model_dump(), slacks, {"v": V, "u": U})


def merge_reports(a: CertReport, b: CertReport) -> CertReport:
    """Combine two shards of the same check"""
    if a.property != b.property or a.constants != b.constants:
        raise ValueError("can only merge reports of the same property and constants")
    worst = a if a.min_slack <= b.min_slack else b
    n_viol = a.n_violations + b.n_violations
    return CertReport(
        property=a.property,
        constants=a.constants,
        n_samples=a.n_samples + b.n_samples,
        n_violations=n_viol,
        min_slack=worst.min_slack,
        worst_witness=worst.worst_witness,
        verdict="violation_found" if n_viol else "no_violation_found",
    )


# ---------------------------------------------------------------------------
# Restricted eigenvalue and Gaussian width
# ---------------------------------------------------------------------------

def re_estimate(sigma_matrix, s: int, c0: float, N: int = 1000,
                rng: Optional[np.random.Generator] = None) -> float:
    """Sampled upper bound on the RE(s, c0) constant kappa (a heuristic, not a certificate)"""
    if N < 1:
        raise ValueError(f"number of samples N must be >= 1, got {N}")
    rng = rng if rng is not None else make_rng(0)
    S = sqrt_psd(sigma_matrix)
    p = S.shape[0]
    if not 1 <= s <= p:
        raise ValueError(f"sparsity s={s} must lie in [1, p={p}]")
    if c0 < 0:
        raise ValueError(f"cone constant c0 must be >= 0, got {c0}")

    best = math.inf
    for i in range(N):
        t = (0.0, 0.5, 1.0)[i % 3]
        J = rng.choice(p, size=s, replace=False)
        v = np.zeros(p)
        v[J] = rng.standard_normal(s)
        rest = np.setdiff1d(np.arange(p), J)
        if t > 0.0 and rest.size:
            tail = rng.standard_normal(rest.size)
            v[rest] = tail * (t * c0 * np.abs(v[J]).sum() / np.abs(tail).sum())
        best = min(best, float(np.linalg.norm(S @ v) / np.linalg.norm(v[J])))
    return best


def gaussian_width_b1(sigma_matrix, N: int = 10000, rng: Optional[np.random.Generator] = None,
                      batch: int = 4096) -> WidthEstimate:
    """Monte Carlo estimate of E||Sigma^{1/2} xi||_inf with its standard error"""
    if N < 1:
        raise ValueError(f"number of samples N must be >= 1, got {N}")
    rng = rng if rng is not None else make_rng(0)
    S = sqrt_psd(sigma_matrix)
    p = S.shape[0]
    values = np.empty(N)
    for start in range(0, N, batch):
        stop = min(start + batch, N)
        values[start:stop] = np.max(np.abs(rng.standard_normal((stop - start, p)) @ S), axis=1)
    stderr = float(values.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return WidthEstimate(estimate=float(values.mean()), stderr=stderr, n_samples=N)


def width_bound(sigma_matrix, p: int) -> float:
    """rho(Sigma) sqrt(2 log p)"""
    if p == 1:
        warnings.warn("width bound is vacuous for p = 1 (log 1 = 0)", NumericalWarning, stacklevel=2)
    return rho(sigma_matrix) * math.sqrt(2.0 * math.log(p))


# ---------------------------------------------------------------------------
# General-design risk bound
# ---------------------------------------------------------------------------

def theorem1_condition(s: int, o: int, kappa: float, atp: AtpConstants, b2: float) -> Theorem1Check:
    """s / kappa^2 + o <= c1^2 / (400 max(c2, c3, 5 b2 / c1)^2)"""
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    lhs = s / kappa ** 2 + o
    worst = max(atp.c2, atp.c3, 5.0 * b2 / atp.c1)
    rhs = math.inf if worst == 0.0 else atp.c1 ** 2 / (400.0 * worst ** 2)
    margin = 0.0 if math.isinf(rhs) else lhs / rhs
    return Theorem1Check(holds=lhs <= rhs, margin=margin, lhs=lhs, rhs=rhs)


def theorem1_bound(lam: float, s: int, o: int, kappa: float, atp: AtpConstants, b3: float) -> float:
    """Risk bound on ||Sigma^{1/2}(beta_hat - beta*)||_2 under the general-design conditions"""
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    c1 = atp.c1
    lead = (24.0 * lam / c1 ** 2) * max(2.0 * atp.c2 / c1, b3 / c1 ** 2) * (s / kappa ** 2 + 7.0 * o)
    return lead + 5.0 * lam * math.sqrt(s) / (6.0 * c1 ** 2 * kappa)


# ---------------------------------------------------------------------------
# CLI engine
# ---------------------------------------------------------------------------

def resolve_constants(text: str, n: int, p: int) -> dict:
    """theorem2:<delta> or explicit:a1=..,a2=..,b1=..,b2=..,b3=..,c1=..,c2=..,c3=.."""
    kind, _, arg = text.partition(":")
    if kind == "theorem2":
        bundle = theorem2_constants(n, p, float(arg) if arg else 0.1)
        return {"TP": bundle.tp, "IP": bundle.ip, "ATP": bundle.atp, "vacuous": bundle.vacuous}
    if kind == "explicit":
        values = {}
        for item in arg.split(","):
            key, _, val = item.partition("=")
            if key.strip():
                values[key.strip()] = float(val)
        out = {"vacuous": False}
        if {"a1", "a2"} <= values.keys():
            out["TP"] = TpConstants(a1=values["a1"], a2=values["a2"])
        if {"b1", "b2", "b3"} <= values.keys():
            out["IP"] = IpConstants(b1=values["b1"], b2=values["b2"], b3=values["b3"])
        if {"c1", "c2", "c3"} <= values.keys():
            out["ATP"] = AtpConstants(c1=values["c1"], c2=values["c2"], c3=values["c3"])
        return out
    raise ValueError(f"Unknown constants '{text}' (expected theorem2:<delta> or explicit:<k=v,...>)")


def certify(X, sigma_matrix, properties: list[str], constants: dict, N: int, seed: int,
            sampler_spec: SamplerSpec = SamplerSpec(), re_s: int = 1, re_c0: float = 5.0) -> list[CertReport]:
    """Run the requested checks; each property gets its own stream derived from `seed`"""
    checks = {"TP": check_tp, "IP": check_ip, "ATP": check_atp}
    reports = []
    for offset, prop in enumerate(properties):
        rng = make_rng(seed + offset)
        if prop == "RE":
            S = np.eye(np.shape(X)[1]) if sigma_matrix is None else sigma_matrix
            kappa = re_estimate(S, re_s, re_c0, N, rng)
            reports.append(CertReport(
                property="RE",
                constants={"s": float(re_s), "c0": re_c0, "kappa_upper_bound": kappa},
                n_samples=N,
                n_violations=0,
                min_slack=kappa,
                verdict="upper_bound",
            ))
            continue
        consts = constants.get(prop)
        if consts is None:
            raise ValueError(f"no constants available for {prop}")
        reports.append(checks[prop](X, sigma_matrix, consts, sampler_spec, N, rng))
    return reports
