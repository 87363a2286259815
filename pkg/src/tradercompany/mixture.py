"""Gaussian mixtures: EM fitting, exact sampling, log-likelihood.

Used by the prune-and-generate step to resample trader parameters from the
survivors.  Covariances are full (the encoded parameter vectors are low
dimensional) with a small diagonal floor so that collapsed survivor sets
still yield a usable, samplable mixture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MixtureError

COV_DIAG_FLOOR = 1e-6
EMPTY_COMPONENT_MASS = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class EMConfig:
    tol: float = 1e-6
    max_iter: int = 200
    restarts: int = 3


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture weights, component means (K, D) and covariances (K, D, D).

    ``log_likelihood_path`` records the per-iteration training log-likelihood
    of the EM run that produced the fit (empty for hand-built mixtures).
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood_path: tuple[float, ...] = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        mu = np.array(self.means, dtype=float)
        cov = np.array(self.covariances, dtype=float)
        if w.ndim != 1 or mu.ndim != 2 or cov.ndim != 3:
            raise MixtureError("mixture arrays have wrong dimensionality")
        k, d = mu.shape
        if w.size != k or cov.shape != (k, d, d):
            raise MixtureError("mixture arrays have inconsistent shapes")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise MixtureError("mixture weights must be a probability vector")
        if np.max(np.abs(cov - np.transpose(cov, (0, 2, 1)))) > 1e-9:
            raise MixtureError("component covariances must be symmetric")
        for arr in (w, mu, cov):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "log_likelihood_path", tuple(self.log_likelihood_path))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _floor_cov(cov: np.ndarray) -> np.ndarray:
    # Additive diagonal floor: keeps every component comfortably positive
    # definite so densities stay well defined for collapsed clusters.
    cov = 0.5 * (cov + cov.T)
    return cov + COV_DIAG_FLOOR * np.eye(cov.shape[0])


def _chol_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor, adding escalating diagonal jitter if needed.

    Responsibility-weighted covariances of few samples in many dimensions are
    PSD but can be numerically singular; jitter only affects the solve, not
    the stored covariance.
    """
    scale = max(float(np.mean(cov.diagonal())), COV_DIAG_FLOOR)
    jitter = 0.0
    eye = np.eye(cov.shape[0])
    for _ in range(8):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10 * scale)
    raise MixtureError("component covariance could not be factorised")


def _component_log_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = _chol_with_jitter(cov)
    diff = x - mean
    y = np.linalg.solve(chol, diff.T).T
    log_det = float(np.sum(np.log(chol.diagonal())))
    return -0.5 * (x.shape[1] * _LOG_2PI + np.sum(y * y, axis=1)) - log_det


def _log_weighted_densities(gm_weights, gm_means, gm_covs, x: np.ndarray) -> np.ndarray:
    k = len(gm_weights)
    out = np.full((x.shape[0], k), -np.inf)
    for j in range(k):
        if gm_weights[j] <= 0.0:
            continue
        out[:, j] = np.log(gm_weights[j]) + _component_log_density(x, gm_means[j], gm_covs[j])
    return out


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    amax = a.max(axis=1, keepdims=True)
    return (amax + np.log(np.sum(np.exp(a - amax), axis=1, keepdims=True))).ravel()


def log_density(gm: GaussianMixture, samples: np.ndarray) -> np.ndarray:
    """Per-sample log mixture density, evaluated in log-space for stability."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    return _logsumexp_rows(_log_weighted_densities(gm.weights, gm.means, gm.covariances, x))


def log_likelihood(gm: GaussianMixture, samples: np.ndarray) -> float:
    """Total log-likelihood of ``samples`` under the mixture."""
    return float(np.sum(log_density(gm, samples)))


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            centers[j] = x[int(rng.integers(n))]
        else:
            centers[j] = x[int(rng.choice(n, p=closest / total))]
        closest = np.minimum(closest, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _m_step(x: np.ndarray, resp: np.ndarray, rng: np.random.Generator):
    n, d = x.shape
    k = resp.shape[1]
    mass = resp.sum(axis=0)
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    overall_cov = None
    reseeded = False
    for j in range(k):
        if mass[j] < EMPTY_COMPONENT_MASS:
            # Re-seed a starved component at a random sample.
            if overall_cov is None:
                overall_cov = _floor_cov(np.cov(x, rowvar=False, bias=True).reshape(d, d))
            means[j] = x[int(rng.integers(n))]
            covs[j] = overall_cov
            mass[j] = 1.0
            reseeded = True
            continue
        means[j] = resp[:, j] @ x / mass[j]
        diff = x - means[j]
        covs[j] = _floor_cov((resp[:, j] * diff.T) @ diff / mass[j])
    weights = mass / mass.sum()
    return weights, means, covs, reseeded


def _run_em(x: np.ndarray, k: int, config: EMConfig, rng: np.random.Generator):
    n = x.shape[0]
    centers = _kmeanspp_centers(x, k, rng)
    dist = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    resp = np.zeros((n, k))
    resp[np.arange(n), dist.argmin(axis=1)] = 1.0
    weights, means, covs, _ = _m_step(x, resp, rng)

    path: list[float] = []
    previous = (weights, means, covs)
    for it in range(config.max_iter + 1):
        log_wd = _log_weighted_densities(weights, means, covs, x)
        lse = _logsumexp_rows(log_wd)
        ll = float(lse.sum())
        if path and ll - path[-1] < config.tol:
            if ll < path[-1]:
                # Floor- or reseed-induced steps can fail to improve the
                # likelihood; discard the step and keep the best iterate.
                weights, means, covs = previous
            else:
                path.append(ll)
            break
        path.append(ll)
        if it == config.max_iter:
            break
        previous = (weights, means, covs)
        resp = np.exp(log_wd - lse[:, None])
        weights, means, covs, _ = _m_step(x, resp, rng)
    return weights, means, covs, path


def fit_em(
    samples: np.ndarray,
    n_components: int,
    config: EMConfig = EMConfig(),
    rng: np.random.Generator | None = None,
) -> GaussianMixture:
    """Fit a mixture by EM, keeping the best of ``config.restarts`` runs.

    Each restart starts from a k-means++ style seeding drawn from ``rng``;
    runs stop when the log-likelihood improves by less than ``config.tol``
    or after ``config.max_iter`` iterations.  Raises MixtureError when there
    are fewer samples than components (callers fall back to fresh random
    draws in that case).
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[0] < n_components:
        raise MixtureError(
            f"need at least {n_components} samples to fit {n_components} "
            f"components, got {x.shape[0]}"
        )
    if n_components < 1:
        raise MixtureError("n_components must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)

    best = None
    for _ in range(max(config.restarts, 1)):
        weights, means, covs, path = _run_em(x, n_components, config, rng)
        if best is None or path[-1] > best[3][-1]:
            best = (weights, means, covs, path)
    weights, means, covs, path = best
    return GaussianMixture(
        weights=weights, means=means, covariances=covs, log_likelihood_path=tuple(path)
    )


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample(gm: GaussianMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points: a categorical draw over components, then a normal draw.

    Deterministic given the generator state; zero-weight components are never
    selected and zero covariance yields the component mean exactly.
    """
    if n < 0:
        raise MixtureError("sample count must be nonnegative")
    comps = rng.choice(gm.n_components, size=n, p=gm.weights)
    eps = rng.standard_normal((n, gm.dim))
    out = np.empty((n, gm.dim))
    for j in np.unique(comps):
        idx = comps == j
        factor = _psd_factor(gm.covariances[j])
        out[idx] = gm.means[j] + eps[idx] @ factor.T
    return out
