"""Monte Carlo check of the contrast dispersion.

Responses are simulated from the fixed-effects model with Gaussian errors,
``Cov(eps_k) = sigma_k^2 (I_n kron V_k)``, independent across responses.
Direct-effect contrasts are estimated by least squares on the whitened
model and their empirical covariance is compared with ``G_d``.

Random streams: replicates are grouped in fixed blocks of ``SIM_CHUNK``.
Block ``c`` draws from ``Generator(Philox(SeedSequence(seed, spawn_key=(c,))))``,
so any replicate's noise depends only on ``(seed, replicate index)`` and
blocks may be generated in any order or in parallel.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import NDArray

from .design import Design
from .errors import EstimabilityError, EstimationError, ValidationError
from .information import ContrastSet, contrast_dispersion, info_matrix
from .linalg import DEFAULT_TOL, Tolerances, cholesky, pseudo_inverse
from .model import StudyConfig, full_design_matrix
from .optimality import worker_count

__all__ = [
    "ResponseParams",
    "ParamSet",
    "SimConfig",
    "SimReport",
    "SIM_CHUNK",
    "simulate_responses",
    "gls_contrast_operator",
    "gls_contrast_estimate",
    "estimator_dispersion",
    "validate_dispersion",
]

SIM_CHUNK = 8192


@dataclass(frozen=True)
class ResponseParams:
    mu: float
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    tau: NDArray[np.float64]
    rho: NDArray[np.float64]

    def vector(self) -> NDArray[np.float64]:
        """Parameters in the column order of :func:`~xover.model.full_design_matrix`."""
        return np.concatenate([[self.mu], self.alpha, self.beta, self.tau, self.rho]).astype(float)


@dataclass(frozen=True)
class ParamSet:
    responses: tuple[ResponseParams, ...]

    @classmethod
    def default(cls, d: Design, g: int) -> "ParamSet":
        tau = np.arange(1, d.t + 1) / d.t
        one = ResponseParams(0.0, np.zeros(d.p), np.zeros(d.n), tau, np.zeros(d.t))
        return cls(tuple(one for _ in range(g)))

    @classmethod
    def random(cls, d: Design, g: int, rng: np.random.Generator, scale: float = 1.0) -> "ParamSet":
        return cls(tuple(
            ResponseParams(
                float(rng.normal(0, scale)),
                rng.normal(0, scale, d.p),
                rng.normal(0, scale, d.n),
                rng.normal(0, scale, d.t),
                rng.normal(0, scale, d.t),
            )
            for _ in range(g)
        ))

    def check(self, d: Design, g: int) -> None:
        if len(self.responses) != g:
            raise ValidationError(f"parameters given for {len(self.responses)} responses, config has {g}")
        for k, r in enumerate(self.responses):
            dims = (len(r.alpha), len(r.beta), len(r.tau), len(r.rho))
            if dims != (d.p, d.n, d.t, d.t):
                raise ValidationError(f"response {k}: parameter lengths {dims} do not match (p, n, t, t)")


@dataclass(frozen=True)
class SimConfig:
    reps: int
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise ValidationError(f"reps must be >= 1, got {self.reps}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimReport:
    empirical_G: NDArray[np.float64]
    theoretical_G: NDArray[np.float64]
    rel_frobenius_error: float
    cross_block_rel: float
    mean_estimate: NDArray[np.float64]
    target: NDArray[np.float64]
    reps_used: int
    seed: int
    estimates: NDArray[np.float64] | None = None


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _noise_factors(d: Design, cfg: StudyConfig, tol: Tolerances) -> list[NDArray]:
    return [np.sqrt(r.sigma2) * cholesky(v, tol) for r, v in zip(cfg.responses, cfg.covariances(d.p, tol))]


def _simulate_chunk(chunk: int, m: int, seed: int, means: NDArray, factors: Sequence[NDArray], n: int, p: int):
    rng = _chunk_rng(seed, chunk)
    g = len(factors)
    z = rng.standard_normal((m, g, n, p))
    y = np.empty((m, g, n * p))
    for k, lk in enumerate(factors):
        # per subject: sigma_k L_k z_j
        y[:, k, :] = (z[:, k] @ lk.T).reshape(m, n * p) + means[k]
    return y


def simulate_responses(
    d: Design,
    cfg: StudyConfig,
    theta: ParamSet,
    sim: SimConfig,
    tol: Tolerances = DEFAULT_TOL,
) -> Iterator[tuple[int, NDArray[np.float64]]]:
    """Yield ``(first_replicate_index, Y)`` blocks; ``Y`` has shape (m, g, n p).

    ``Y[i, k]`` is response ``k`` of one replicate, ordered subject-major.
    """
    theta.check(d, cfg.g)
    x = full_design_matrix(d)
    means = np.stack([x @ r.vector() for r in theta.responses])
    factors = _noise_factors(d, cfg, tol)
    for c, start in enumerate(range(0, sim.reps, SIM_CHUNK)):
        m = min(SIM_CHUNK, sim.reps - start)
        yield start, _simulate_chunk(c, m, sim.seed, means, factors, d.n, d.p)


def gls_contrast_operator(
    d: Design,
    v: NDArray[np.float64],
    contrasts: NDArray[np.float64],
    tol: Tolerances = DEFAULT_TOL,
) -> NDArray[np.float64]:
    """Matrix ``K`` with ``K y = L tau_hat`` for the whitened least-squares fit.

    The response is whitened subject by subject with ``L_V^{-1}``
    (``V = L_V L_V'``); the normal equations of the full model are solved
    with the minimum-norm (Moore-Penrose) solution.

    Raises
    ------
    EstimationError
        If ``L tau`` is not estimable, i.e. ``K X != L S_tau`` where
        ``S_tau`` selects the direct effects.
    """
    x = full_design_matrix(d)
    w_sub = np.linalg.inv(cholesky(v, tol))
    w = np.kron(np.eye(d.n), w_sub)
    xw = w @ x
    gram = xw.T @ xw
    beta_op = pseudo_inverse(0.5 * (gram + gram.T), tol) @ xw.T @ w
    first = 1 + d.p + d.n
    k_op = contrasts @ beta_op[first:first + d.t]
    target = np.zeros((contrasts.shape[0], x.shape[1]))
    target[:, first:first + d.t] = contrasts
    if np.max(np.abs(k_op @ x - target)) > 1e-7 * max(1.0, float(np.max(np.abs(target)))):
        raise EstimationError("direct-effect contrasts are not estimable: fit is rank deficient beyond intrinsic aliasing")
    return k_op


def gls_contrast_estimate(
    d: Design,
    cfg: StudyConfig,
    y: Sequence[NDArray[np.float64]],
    contrasts: ContrastSet,
    tol: Tolerances = DEFAULT_TOL,
) -> NDArray[np.float64]:
    """Stacked contrast estimates ``[L_1 tau_1_hat; ...; L_g tau_g_hat]``.

    ``y[k]`` may be a single response vector (length n p) or a stack of
    replicates with shape (m, n p).
    """
    if len(y) != cfg.g or len(contrasts.blocks) != cfg.g:
        raise ValidationError("need one response array and one contrast block per response")
    parts = []
    for yk, v, lk in zip(y, cfg.covariances(d.p, tol), contrasts.blocks):
        parts.append(np.asarray(yk, dtype=float) @ gls_contrast_operator(d, v, lk, tol).T)
    return np.concatenate(parts, axis=-1)


def estimator_dispersion(
    d: Design, cfg: StudyConfig, contrasts: ContrastSet, tol: Tolerances = DEFAULT_TOL
) -> NDArray[np.float64]:
    """Exact covariance of the least-squares contrast estimator, ``sigma^2 K (I kron V) K'`` per block."""
    blocks = []
    for r, v, lk in zip(cfg.responses, cfg.covariances(d.p, tol), contrasts.blocks):
        k_op = gls_contrast_operator(d, v, lk, tol)
        blocks.append(r.sigma2 * k_op @ np.kron(np.eye(d.n), v) @ k_op.T)
    size = sum(b.shape[0] for b in blocks)
    out = np.zeros((size, size))
    pos = 0
    for b in blocks:
        out[pos:pos + b.shape[0], pos:pos + b.shape[0]] = b
        pos += b.shape[0]
    return out


def _cross_block_rel(cov: NDArray, sizes: Sequence[int]) -> float:
    edges = np.cumsum([0, *sizes])
    worst = 0.0
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            sa = slice(edges[a], edges[a + 1])
            sb = slice(edges[b], edges[b + 1])
            norm = np.sqrt(np.linalg.norm(cov[sa, sa]) * np.linalg.norm(cov[sb, sb]))
            worst = max(worst, float(np.linalg.norm(cov[sa, sb]) / norm))
    return worst


def validate_dispersion(
    d: Design,
    cfg: StudyConfig,
    theta: ParamSet | None = None,
    contrasts: ContrastSet | None = None,
    sim: SimConfig = SimConfig(reps=10_000),
    tol: Tolerances = DEFAULT_TOL,
    keep_estimates: bool = False,
) -> SimReport:
    """Compare the empirical covariance of simulated contrast estimates with ``G_d``.

    ``rel_frobenius_error`` is ``||G_emp - G_d||_F / ||G_d||_F``;
    ``cross_block_rel`` is the largest between-response block norm relative
    to the geometric mean of the two diagonal block norms.
    """
    theta = ParamSet.default(d, cfg.g) if theta is None else theta
    contrasts = ContrastSet.helmert(d.t, cfg.g) if contrasts is None else contrasts
    theta.check(d, cfg.g)
    info = info_matrix(d, cfg, tol)
    if not info.estimable:
        bad = [b.k for b in info.blocks if not b.estimable]
        raise EstimabilityError(f"direct-effect contrasts are not estimable for responses {bad}")
    g_theory = contrast_dispersion(info, contrasts, tol)
    ops = [gls_contrast_operator(d, v, lk, tol) for v, lk in zip(cfg.covariances(d.p, tol), contrasts.blocks)]
    x = full_design_matrix(d)
    means = np.stack([x @ r.vector() for r in theta.responses])
    factors = _noise_factors(d, cfg, tol)

    def block(c: int) -> NDArray:
        start = c * SIM_CHUNK
        m = min(SIM_CHUNK, sim.reps - start)
        y = _simulate_chunk(c, m, sim.seed, means, factors, d.n, d.p)
        return np.concatenate([y[:, k] @ op.T for k, op in enumerate(ops)], axis=1)

    n_chunks = -(-sim.reps // SIM_CHUNK)
    with ThreadPoolExecutor(max_workers=min(worker_count(), n_chunks)) as pool:
        est = np.concatenate(list(pool.map(block, range(n_chunks))))
    emp = np.atleast_2d(np.cov(est, rowvar=False)) if sim.reps > 1 else np.zeros_like(g_theory)
    target = np.concatenate([lk @ r.tau for lk, r in zip(contrasts.blocks, theta.responses)])
    return SimReport(
        empirical_G=emp,
        theoretical_G=g_theory,
        rel_frobenius_error=float(np.linalg.norm(emp - g_theory) / np.linalg.norm(g_theory)),
        cross_block_rel=_cross_block_rel(emp, [b.shape[0] for b in contrasts.blocks]),
        mean_estimate=est.mean(axis=0),
        target=target,
        reps_used=sim.reps,
        seed=sim.seed,
        estimates=est if keep_estimates else None,
    )
