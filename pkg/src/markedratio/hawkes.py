"""Exponential-kernel Hawkes maximum likelihood, used for the log-intensity covariates and
for the multivariate benchmark predictor."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize

BETA_BOUNDS = (1e-4, 1e4)
MU_FLOOR = 1e-10


@njit(cache=True)
def _target_loglik_grad(times, labels, target, horizon, mu, alpha, beta):
    # log-likelihood of one target dimension driven by D sources, with its gradient
    D = alpha.shape[0]
    A = np.zeros(D)
    B = np.zeros(D)
    ll = 0.0
    g_mu = 0.0
    g_a = np.zeros(D)
    g_b = np.zeros(D)
    t_prev = 0.0
    for n in range(times.shape[0]):
        t = times[n]
        dt = t - t_prev
        for b in range(D):
            e = np.exp(-beta[b] * dt)
            B[b] = e * (B[b] + dt * A[b])
            A[b] = e * A[b]
        if labels[n] == target:
            lam = mu
            for b in range(D):
                lam += alpha[b] * A[b]
            if lam <= 0.0:
                lam = 1e-300
            ll += np.log(lam)
            g_mu += 1.0 / lam
            for b in range(D):
                g_a[b] += A[b] / lam
                g_b[b] -= alpha[b] * B[b] / lam
        A[labels[n]] += 1.0
        t_prev = t
    ll -= mu * horizon
    g_mu -= horizon
    for n in range(times.shape[0]):
        b = labels[n]
        u = horizon - times[n]
        e = np.exp(-beta[b] * u)
        ll -= alpha[b] / beta[b] * (1.0 - e)
        g_a[b] -= (1.0 - e) / beta[b]
        g_b[b] -= alpha[b] * (-(1.0 - e) / beta[b] ** 2 + u * e / beta[b])
    return ll, g_mu, g_a, g_b


@njit(cache=True)
def _intensities_at_events(times, labels, mu, alpha, beta):
    # left-limit intensities of every dimension at every event time
    D = mu.shape[0]
    n_ev = times.shape[0]
    out = np.empty((n_ev, D))
    A = np.zeros((D, D))
    t_prev = 0.0
    for n in range(n_ev):
        dt = times[n] - t_prev
        for a in range(D):
            lam = mu[a]
            for b in range(D):
                A[a, b] *= np.exp(-beta[a, b] * dt)
                lam += alpha[a, b] * A[a, b]
            out[n, a] = lam
        src = labels[n]
        for a in range(D):
            A[a, src] += 1.0
        t_prev = times[n]
    return out


@njit(cache=True)
def _excitation_left(source, query, beta):
    # sum_{s < q} exp(-beta (q - s)) for sorted query times
    out = np.empty(query.shape[0])
    acc = 0.0
    t_acc = 0.0
    j = 0
    for q in range(query.shape[0]):
        tq = query[q]
        while j < source.shape[0] and source[j] < tq:
            acc = acc * np.exp(-beta * (source[j] - t_acc)) + 1.0
            t_acc = source[j]
            j += 1
        out[q] = acc * np.exp(-beta * (tq - t_acc)) if j > 0 else 0.0
    return out


def naive_loglik(times, labels, target, horizon, mu, alpha, beta) -> float:
    """O(n^2) double-sum log-likelihood of one target dimension (reference implementation)."""
    times = np.asarray(times, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    ll = 0.0
    for n in np.flatnonzero(labels == target):
        past = np.arange(n)
        lam = mu + np.sum(alpha[labels[past]] * np.exp(-beta[labels[past]] * (times[n] - times[past])))
        ll += np.log(lam)
    comp = mu * horizon + np.sum(alpha[labels] / beta[labels] * (1 - np.exp(-beta[labels] * (horizon - times))))
    return float(ll - comp)


def aggregate_same_timestamps(times) -> np.ndarray:
    """Sorted unique timestamps (orders sharing a timestamp count once)."""
    return np.unique(np.asarray(times, dtype=float))


@dataclass
class ExpHawkesFit:
    mu: float
    alpha: float
    beta: float
    loglik: float
    converged: bool
    n_events: int = 0

    @property
    def branching_ratio(self) -> float:
        return self.alpha / self.beta

    @property
    def unstable(self) -> bool:
        return self.branching_ratio >= 1

    def to_dict(self) -> dict:
        return {"mu": self.mu, "alpha": self.alpha, "beta": self.beta, "loglik": self.loglik,
                "converged": self.converged, "n_events": self.n_events,
                "branching_ratio": self.branching_ratio}


@dataclass
class MultiHawkesFit:
    mu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    loglik: float
    converged: bool

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.alpha / self.beta))))

    def intensities_at_events(self, times, labels) -> np.ndarray:
        """Left-limit intensity of every dimension at every event time."""
        return _intensities_at_events(np.asarray(times, dtype=float), np.asarray(labels, dtype=np.int64),
                                      self.mu, self.alpha, self.beta)

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "alpha": self.alpha.tolist(), "beta": self.beta.tolist(),
                "loglik": self.loglik, "converged": self.converged, "spectral_radius": self.spectral_radius}


def _fit_target(times, labels, target, horizon, n_sources, active=None):
    """Multi-start box-constrained L-BFGS for one target dimension.

    ``active`` masks the sources allowed to excite the target; inactive kernels stay at 0.
    """
    active = np.ones(n_sources, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    n_target = int(np.sum(labels == target))
    rate = max(n_target, 1) / horizon
    idx = np.flatnonzero(active)
    k = len(idx)

    def unpack(x):
        alpha = np.zeros(n_sources)
        beta = np.ones(n_sources)
        alpha[idx] = x[1:1 + k]
        beta[idx] = x[1 + k:]
        return x[0], alpha, beta

    def objective(x):
        mu, alpha, beta = unpack(x)
        ll, g_mu, g_a, g_b = _target_loglik_grad(times, labels, target, horizon, mu, alpha, beta)
        grad = np.concatenate([[g_mu], g_a[idx], g_b[idx]])
        return -ll, -grad

    bounds = [(MU_FLOOR, None)] + [(0.0, None)] * k + [BETA_BOUNDS] * k
    best = None
    for branching, beta_scale in ((0.5, 1.0), (0.3, 10.0), (0.7, 0.1)):
        beta0 = np.clip(beta_scale * max(rate, 1e-3) * 2.0, *BETA_BOUNDS)
        x0 = np.concatenate([[(1 - branching) * rate], np.full(k, branching * beta0 / max(k, 1)),
                             np.full(k, beta0)])
        res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-8})
        if best is None or res.fun < best.fun:
            best = res
    mu, alpha, beta = unpack(best.x)
    # L-BFGS-B may stop on a line-search failure at the optimum; judge by the projected gradient
    g = best.jac.copy()
    lo = np.array([b[0] for b in bounds])
    g[(best.x <= lo) & (g > 0)] = 0.0
    ok = bool(best.success) or float(np.max(np.abs(g))) <= 1e-5 * (1 + abs(best.fun))
    return mu, alpha, beta, -float(best.fun), ok


def fit_exp_hawkes_1d(times, horizon: float) -> ExpHawkesFit:
    """Maximum-likelihood ``(mu, alpha, beta)`` of a univariate exponential Hawkes process."""
    times = aggregate_same_timestamps(times)
    n = len(times)
    if n < 2:
        warnings.warn("fewer than two events: falling back to a Poisson fit", RuntimeWarning)
        mu = max(n, MU_FLOOR) / horizon if n else MU_FLOOR
        ll = n * np.log(mu) - mu * horizon
        return ExpHawkesFit(mu, 0.0, 1.0, float(ll), True, n)
    labels = np.zeros(n, dtype=np.int64)
    mu, alpha, beta, ll, ok = _fit_target(times, labels, 0, float(horizon), 1)
    return ExpHawkesFit(float(mu), float(alpha[0]), float(beta[0]), ll, ok, n)


def hawkes_loglik(fit: ExpHawkesFit, times, horizon: float) -> float:
    times = np.asarray(times, dtype=float)
    ll, *_ = _target_loglik_grad(times, np.zeros(len(times), dtype=np.int64), 0, float(horizon),
                                 fit.mu, np.array([fit.alpha]), np.array([fit.beta]))
    return float(ll)


def hawkes_log_intensity_path(fit: ExpHawkesFit, source, query) -> np.ndarray:
    """``log(mu + alpha sum_{s<t} exp(-beta (t - s)))`` at each query time (left limits)."""
    source = aggregate_same_timestamps(source)
    query = np.asarray(query, dtype=float)
    order = np.argsort(query, kind="stable")
    exc = np.empty(len(query))
    exc[order] = _excitation_left(source, query[order], float(fit.beta))
    return np.log(fit.mu + fit.alpha * exc)


def merge_streams(streams) -> tuple[np.ndarray, np.ndarray]:
    """Merge per-dimension event times into one sorted (times, labels) pair."""
    times = np.concatenate([np.asarray(s, dtype=float) for s in streams]) if streams else np.zeros(0)
    labels = np.concatenate([np.full(len(s), d, dtype=np.int64) for d, s in enumerate(streams)]) if streams else np.zeros(0, dtype=np.int64)
    order = np.argsort(times, kind="stable")
    return times[order], labels[order]


def fit_multivariate_hawkes(streams, horizon: float, diagonal_only: bool = False) -> MultiHawkesFit:
    """Exponential multivariate Hawkes fit; the likelihood separates across target dimensions."""
    streams = [aggregate_same_timestamps(s) for s in streams]
    D = len(streams)
    times, labels = merge_streams(streams)
    mu = np.zeros(D)
    alpha = np.zeros((D, D))
    beta = np.ones((D, D))
    total, ok_all = 0.0, True
    for a in range(D):
        active = np.eye(D, dtype=bool)[a] if diagonal_only else None
        if len(streams[a]) < 2:
            warnings.warn(f"dimension {a}: fewer than two events, Poisson fallback", RuntimeWarning)
            n = len(streams[a])
            mu[a] = max(n / horizon, MU_FLOOR)
            total += n * np.log(mu[a]) - mu[a] * horizon
            continue
        m, al, be, ll, ok = _fit_target(times, labels, a, float(horizon), D, active)
        mu[a], alpha[a], beta[a] = m, al, be
        total += ll
        ok_all &= ok
    return MultiHawkesFit(mu, alpha, beta, float(total), ok_all)


def fit_multivariate_hawkes_4d(streams, horizon: float) -> MultiHawkesFit:
    if len(streams) != 4:
        raise ValueError("expected four event streams")
    return fit_multivariate_hawkes(streams, horizon)
