"""QMLE by damped Newton, QBE by random-walk Metropolis, and the information matrices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .likelihood import EventDesign, compress_rows, multinomial_loglik, multinomial_logvalue, pooled_loglik
from .model import DEFAULT_BOUND, InvalidInputError, ModelSpec, ParamSet
from .simulation import GroundTruth, as_rng


class SingularInformationError(np.linalg.LinAlgError):
    """The information matrix of a block is singular (parameters not identified)."""


@dataclass
class BlockFit:
    name: str
    estimate: np.ndarray
    loglik: float
    observed_info: np.ndarray
    std_errors: np.ndarray
    n_events: int
    iterations: int = 0
    converged: bool = False
    gradient_norm: float = float("nan")
    identified: bool = True
    on_boundary: bool = False
    mc_std_errors: np.ndarray | None = None
    acceptance_rate: float | None = None

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "estimate": self.estimate.tolist(),
            "loglik": self.loglik,
            "std_errors": self.std_errors.tolist(),
            "observed_info": self.observed_info.tolist(),
            "n_events": self.n_events,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "identified": self.identified,
            "on_boundary": self.on_boundary,
        }
        if self.mc_std_errors is not None:
            d["mc_std_errors"] = self.mc_std_errors.tolist()
            d["acceptance_rate"] = self.acceptance_rate
        return d


@dataclass
class FitReport:
    spec: ModelSpec
    blocks: list[BlockFit]
    horizon: float
    method: str = "qmle"

    @property
    def side(self) -> BlockFit:
        return self.blocks[0]

    @property
    def marks(self) -> list[BlockFit]:
        return self.blocks[1:]

    @property
    def estimate(self) -> ParamSet:
        return ParamSet.from_vector(self.spec, np.concatenate([b.estimate.ravel() for b in self.blocks]))

    @property
    def loglik(self) -> float:
        return float(sum(b.loglik for b in self.blocks))

    @property
    def std_errors(self) -> np.ndarray:
        return np.concatenate([b.std_errors for b in self.blocks])

    @property
    def observed_info(self) -> np.ndarray:
        dims = [b.observed_info.shape[0] for b in self.blocks]
        out = np.zeros((sum(dims), sum(dims)))
        pos = 0
        for b, d in zip(self.blocks, dims):
            out[pos:pos + d, pos:pos + d] = b.observed_info
            pos += d
        return out

    @property
    def converged(self) -> bool:
        return all(b.converged for b in self.blocks if b.identified and b.estimate.size)

    @property
    def iterations(self) -> int:
        return sum(b.iterations for b in self.blocks)

    @property
    def gradient_norm(self) -> float:
        norms = [b.gradient_norm for b in self.blocks if b.estimate.size]
        return float(max(norms)) if norms else 0.0

    def wald_intervals(self, level: float = 0.95) -> np.ndarray:
        from scipy.stats import norm

        z = norm.ppf(0.5 + level / 2)
        est = self.estimate.to_vector()
        se = self.std_errors
        return np.column_stack([est - z * se, est + z * se])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "horizon": self.horizon,
            "spec": self.spec.to_dict(),
            "estimate": self.estimate.to_dict(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "labels": self.spec.parameter_labels(),
            "std_errors": self.std_errors.tolist(),
            "blocks": [b.to_dict() for b in self.blocks],
        }


def _std_errors(info: np.ndarray) -> np.ndarray:
    if info.size == 0:
        return np.zeros(0)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return np.full(info.shape[0], np.nan)
    d = np.diag(cov)
    return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)


def newton_block(labels, z, n_categories, name="block", init=None, bound=DEFAULT_BOUND,
                 tol=1e-8, max_iter=100) -> BlockFit:
    """Maximize a concave multinomial quasi-log-likelihood by damped Newton in a box."""
    labels = np.asarray(labels, dtype=np.int64)
    z = np.asarray(z, dtype=float)
    p = z.shape[1]
    shape = (n_categories - 1, p)
    dim = shape[0] * shape[1]
    n = len(labels)
    if dim == 0:
        q = multinomial_loglik(labels, z, np.zeros(shape), n_categories)
        return BlockFit(name, np.zeros(shape), q.value, np.zeros((0, 0)), np.zeros(0), n,
                        converged=True, gradient_norm=0.0)
    if n == 0:
        return BlockFit(name, np.zeros(shape), 0.0, np.zeros((dim, dim)), np.full(dim, np.nan), 0,
                        identified=False)
    if np.linalg.matrix_rank(z) < p:
        raise SingularInformationError(f"block {name}: covariates are collinear over its events")

    c_labels, c_z, c_w = compress_rows(labels, z)

    def evaluate(v):
        return multinomial_loglik(c_labels, c_z, v.reshape(shape), n_categories, c_w)

    x = np.zeros(dim) if init is None else np.clip(np.asarray(init, dtype=float).ravel(), -bound, bound)
    q = evaluate(x)

    def free_gradient_norm(x, g):
        # gradient components pushing outward on an active bound do not count
        edge = bound * (1 - 1e-9)
        pinned = ((x >= edge) & (g > 0)) | ((x <= -edge) & (g < 0))
        return float(np.max(np.abs(g[~pinned]), initial=0.0))

    converged = False
    steps = 0
    for _ in range(max_iter + 1):
        if free_gradient_norm(x, q.gradient) < tol * (1 + abs(q.value)):
            converged = True
            break
        if steps == max_iter:
            break
        # projected Newton: coordinates pinned on the box stay fixed
        edge = bound * (1 - 1e-9)
        free = ~(((x >= edge) & (q.gradient > 0)) | ((x <= -edge) & (q.gradient < 0)))
        h = q.neg_hessian[np.ix_(free, free)]
        g_free = q.gradient[free]
        k = int(free.sum())
        scale = np.trace(h) / k if np.trace(h) > 0 else 1.0
        ridge = 0.0
        step = None
        while ridge <= 1e8 * scale:
            try:
                cand = np.linalg.solve(h + ridge * np.eye(k), g_free)
                if np.all(np.isfinite(cand)) and cand @ g_free > 0:
                    step = np.zeros(dim)
                    step[free] = cand
                    break
            except np.linalg.LinAlgError:
                pass
            ridge = max(1e-10 * scale, ridge * 10)
        if step is None:
            step = np.where(free, q.gradient, 0.0) / scale
        t = 1.0
        while t > 1e-12:
            x_new = np.clip(x + t * step, -bound, bound)
            q_new = evaluate(x_new)
            if q_new.value >= q.value + 1e-4 * (q.gradient @ (x_new - x)):
                break
            t *= 0.5
        else:
            break
        if q_new.value < q.value:
            break
        x, q = x_new, q_new
        steps += 1
    on_boundary = bool(np.any(np.abs(x) >= bound * (1 - 1e-9)))
    return BlockFit(name, x.reshape(shape), q.value, q.neg_hessian, _std_errors(q.neg_hessian), n,
                    iterations=steps, converged=converged,
                    gradient_norm=float(np.max(np.abs(q.gradient))), on_boundary=on_boundary)


def fit_qmle(design: EventDesign, init: ParamSet | str = "zero", bound: float = DEFAULT_BOUND,
             tol: float = 1e-8) -> FitReport:
    """Quasi-maximum-likelihood fit, block by block (side ratios, then each mark model)."""
    spec = design.spec
    start = ParamSet.zeros(spec) if isinstance(init, str) else init
    blocks = []
    names = spec.block_names()
    block_data = [design.side_block()] + [design.mark_block(i) for i in range(spec.n_types)]
    for name, (labels, z, m), x0 in zip(names, block_data, start.blocks()):
        fit = newton_block(labels, z, m, name=name, init=x0, bound=bound, tol=tol)
        if fit.on_boundary:
            warnings.warn(f"block {name}: solution on the parameter box boundary", RuntimeWarning)
        blocks.append(fit)
    return FitReport(spec, blocks, design.horizon)


@dataclass
class QbeConfig:
    n_samples: int = 20000
    burn_in: int = 4000
    proposal_scale: float | None = None
    seed: int | None = 0
    bound: float = DEFAULT_BOUND
    target_acceptance: float = 0.3
    joint: bool = False

    def __post_init__(self):
        if not self.n_samples > self.burn_in >= 0:
            raise InvalidInputError("need n_samples > burn_in >= 0")


def _batch_means_se(chain: np.ndarray) -> np.ndarray:
    n = chain.shape[0]
    n_batches = max(int(np.sqrt(n)), 2)
    size = n // n_batches
    means = chain[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def rwm_posterior_mean(logpost, x0: np.ndarray, cov: np.ndarray, config: QbeConfig, rng):
    """Adaptive random-walk Metropolis; returns (mean, mc_se, acceptance, samples)."""
    dim = len(x0)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        chol = np.diag(np.sqrt(np.maximum(np.diag(cov), 1e-12)))
    log_scale = np.log(config.proposal_scale if config.proposal_scale else 2.38 / np.sqrt(dim))
    x = np.array(x0, dtype=float)
    lp = logpost(x)
    kept = np.empty((config.n_samples - config.burn_in, dim))
    accepted = 0
    window_acc = 0
    for it in range(config.n_samples):
        prop = x + np.exp(log_scale) * (chol @ rng.standard_normal(dim))
        if np.all(np.abs(prop) <= config.bound):
            lp_prop = logpost(prop)
            if np.log(rng.random()) < lp_prop - lp:
                x, lp = prop, lp_prop
                window_acc += 1
                if it >= config.burn_in:
                    accepted += 1
        if it < config.burn_in and (it + 1) % 50 == 0:
            rate = window_acc / 50
            log_scale += (rate - config.target_acceptance) * 2.0 / np.sqrt(1 + (it + 1) / 50)
            window_acc = 0
        if it >= config.burn_in:
            kept[it - config.burn_in] = x
    acc = accepted / len(kept)
    if not 0.05 <= acc <= 0.8:
        warnings.warn(f"random-walk Metropolis acceptance rate {acc:.3f} outside [0.05, 0.8]", RuntimeWarning)
    return kept.mean(axis=0), _batch_means_se(kept), acc, kept


def _proposal_cov(info: np.ndarray, bound: float) -> np.ndarray:
    dim = info.shape[0]
    prior_var = (2 * bound) ** 2 / 12
    try:
        cov = np.linalg.inv(info + np.eye(dim) / prior_var)
    except np.linalg.LinAlgError:
        cov = np.eye(dim) * prior_var
    return 0.5 * (cov + cov.T)


def fit_qbe(design: EventDesign, config: QbeConfig | None = None) -> FitReport:
    """Quasi-Bayesian estimate: posterior mean under exp(quasi-loglik) times a uniform prior on the box.

    With the product prior each block has its own chain; ``config.joint`` samples all
    parameters in one chain instead.
    """
    config = config or QbeConfig()
    spec = design.spec
    rng = as_rng(config.seed)
    qmle = fit_qmle(design, bound=config.bound)
    if config.joint:
        x0 = qmle.estimate.to_vector()

        data = [design.side_block()] + [design.mark_block(i) for i in range(spec.n_types)]
        packed = [compress_rows(lab, z) + (m,) for lab, z, m in data]
        cuts = np.cumsum([spec.side_dim, *spec.mark_dims])[:-1]

        def logpost(v):
            return sum(multinomial_logvalue(lab, z, part, m, w)
                       for (lab, z, w, m), part in zip(packed, np.split(v, cuts)))

        mean, mcse, acc, _ = rwm_posterior_mean(logpost, x0, _proposal_cov(qmle.observed_info, config.bound), config, rng)
        est = ParamSet.from_vector(spec, mean)
        blocks = []
        pos = 0
        for b, (labels, z, m), e in zip(qmle.blocks, data, est.blocks()):
            d = e.size
            q = multinomial_loglik(labels, z, e, m)
            blocks.append(BlockFit(b.name, e, q.value, q.neg_hessian, _std_errors(q.neg_hessian), b.n_events,
                                   converged=True, gradient_norm=float(np.max(np.abs(q.gradient), initial=0.0)),
                                   identified=b.identified, mc_std_errors=mcse[pos:pos + d], acceptance_rate=acc))
            pos += d
        return FitReport(spec, blocks, design.horizon, method="qbe")

    blocks = []
    data = [design.side_block()] + [design.mark_block(i) for i in range(spec.n_types)]
    for b, (labels, z, m) in zip(qmle.blocks, data):
        shape = b.estimate.shape
        if b.estimate.size == 0:
            blocks.append(b)
            continue

        packed = compress_rows(labels, z)

        def logpost(v, packed=packed, m=m):
            lab, zc, w = packed
            return multinomial_logvalue(lab, zc, v, m, w)

        x0 = b.estimate.ravel() if b.identified else np.zeros(b.estimate.size)
        mean, mcse, acc, _ = rwm_posterior_mean(logpost, x0, _proposal_cov(b.observed_info, config.bound), config, rng)
        q = multinomial_loglik(labels, z, mean.reshape(shape), m)
        blocks.append(BlockFit(b.name, mean.reshape(shape), q.value, q.neg_hessian, _std_errors(q.neg_hessian),
                               b.n_events, converged=True,
                               gradient_norm=float(np.max(np.abs(q.gradient), initial=0.0)),
                               identified=b.identified, mc_std_errors=mcse, acceptance_rate=acc))
    return FitReport(spec, blocks, design.horizon, method="qbe")


def empirical_gamma(design: EventDesign, params: ParamSet) -> np.ndarray:
    """Negative Hessian of the pooled quasi-log-likelihood divided by the horizon."""
    q = pooled_loglik(design, params)
    if design.horizon <= 0:
        return np.zeros_like(q.neg_hessian)
    return q.neg_hessian / design.horizon


def _logistic_variance(x: float) -> float:
    return float(np.exp(x) / (1.0 + np.exp(x)) ** 2)


def theoretical_gamma_example1(truth: GroundTruth, spec: ModelSpec | None = None) -> np.ndarray:
    """Diagonal of the limit information for two types x two marks with independent +-1 chains.

    Requires one side covariate and one mark covariate per type, all symmetric two-state
    chains independent of the Hawkes baseline.
    """
    if truth.raw_side.shape != (2, 1) or len(truth.raw_marks) != 2 or any(r.shape != (2, 1) for r in truth.raw_marks):
        raise InvalidInputError("closed form needs 2 types x 2 marks with one covariate per level")
    if spec is not None and (spec.marks_per_type != (2, 2) or spec.n_side_covariates != 1
                             or spec.n_mark_covariates != (1, 1)):
        raise InvalidInputError("closed form needs 2 types x 2 marks with one covariate per level")
    mean_base = truth.baseline.mean_intensity
    v0, v1 = truth.raw_side[:, 0]
    theta = v1 - v0
    rho = [r[1, 0] - r[0, 0] for r in truth.raw_marks]
    g_side = mean_base * _logistic_variance(theta) * (np.cosh(v0) + np.cosh(v1))
    g_marks = [mean_base * np.cosh(v) * _logistic_variance(r) for v, r in zip((v0, v1), rho)]
    return np.array([g_side, *g_marks])


def theoretical_sd(gamma_diag: np.ndarray, horizon: float) -> np.ndarray:
    return 1.0 / np.sqrt(horizon * np.asarray(gamma_diag))
