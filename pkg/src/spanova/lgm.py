"""Laplace inference engine for latent Gaussian models.

A model couples a sparse Gaussian prior on a latent field (built per
hyperparameter point), a fixed-effect design, an observation map, and a
Gaussian or Bernoulli-logit likelihood. Inference follows the classic
deterministic recipe: find the conditional posterior mode per hyperparameter
point (exact for the Gaussian family, Newton otherwise), approximate the
hyperparameter posterior on a small grid around its mode, and mix the
per-point conditional Gaussians into latent posterior marginals.

Fixed effects are folded into the latent vector internally (with independent
vague normal priors), so marginals, credible intervals, linear functionals
and sampling treat them uniformly.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
from scipy.optimize import minimize
from scipy.special import expit

from .chol import DENSE_LIMIT, factorize
from .errors import ConvergenceError, DimensionError, NumericalError
from .mesh import SparseSymmetric

__all__ = [
    "LatentModel",
    "HyperGrid",
    "GridSpec",
    "ConditionalGaussian",
    "LatentPosterior",
    "gaussian_conditional",
    "newton_mode",
    "laplace_log_marginal",
    "explore_hypergrid",
    "hypergrid_from_logpost",
    "latent_marginals",
    "mixture_functionals",
    "mixture_quantiles",
    "sample_latent",
    "write_posterior_csv",
    "bayes_ridge_batch",
    "bayes_logit_batch",
]

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class LatentModel:
    """Observation model with a latent Gaussian field and fixed effects.

    q_builder maps the trailing `n_theta_space` hyperparameter coordinates to
    the latent prior precision. For the gaussian family the first coordinate
    of theta is log sigma^2 (observation noise variance); the bernoulli-logit
    family has no marginal parameter.
    """

    q_builder: Callable[[np.ndarray], object]
    n_latent: int
    a_latent: sps.csr_matrix
    design_fixed: Optional[np.ndarray] = None
    family: str = GAUSSIAN
    offset: Optional[np.ndarray] = None
    n_theta_space: int = 0
    fixed_prior_var: float = 1000.0
    theta_prior_var: float = 1000.0

    def __post_init__(self):
        self.a_latent = sps.csr_matrix(self.a_latent)
        if self.a_latent.shape[1] != self.n_latent:
            raise DimensionError("a_latent column count must equal n_latent")
        if self.design_fixed is not None:
            self.design_fixed = np.atleast_2d(np.asarray(self.design_fixed, float))
            if self.design_fixed.shape[0] != self.n_obs:
                raise DimensionError("design_fixed rows must match observations")
        if self.offset is not None:
            self.offset = np.asarray(self.offset, float).ravel()
            if self.offset.shape != (self.n_obs,):
                raise DimensionError("offset length must match observations")
        if self.family not in (GAUSSIAN, BERNOULLI):
            raise ValueError(f"unknown family {self.family!r}")
        self._a_aug = None

    @property
    def n_obs(self) -> int:
        return self.a_latent.shape[0]

    @property
    def n_fixed(self) -> int:
        return 0 if self.design_fixed is None else self.design_fixed.shape[1]

    @property
    def dim(self) -> int:
        return self.n_latent + self.n_fixed

    @property
    def theta_dim(self) -> int:
        return self.n_theta_space + (1 if self.family == GAUSSIAN else 0)

    def split_theta(self, theta):
        theta = np.asarray(theta, float).ravel()
        if theta.shape != (self.theta_dim,):
            raise DimensionError(f"theta must have length {self.theta_dim}")
        if self.family == GAUSSIAN:
            return float(np.exp(theta[0])), theta[1:]
        return None, theta

    def a_augmented(self) -> sps.csr_matrix:
        if self._a_aug is None:
            if self.n_fixed:
                self._a_aug = sps.hstack(
                    [self.a_latent, sps.csr_matrix(self.design_fixed)], format="csr"
                )
            else:
                self._a_aug = self.a_latent
        return self._a_aug

    def prior_precision(self, theta_space) -> sps.csc_matrix:
        """Block prior precision over [latent field, fixed effects]."""
        Q = self.q_builder(np.asarray(theta_space, float))
        if isinstance(Q, SparseSymmetric):
            Q = Q.to_scipy()
        Q = sps.csc_matrix(Q)
        if Q.shape != (self.n_latent, self.n_latent):
            raise DimensionError("q_builder returned a precision of the wrong size")
        if self.n_fixed:
            V = sps.identity(self.n_fixed, format="csc") / self.fixed_prior_var
            Q = sps.block_diag([Q, V], format="csc")
        return Q

    def log_theta_prior(self, theta) -> float:
        theta = np.asarray(theta, float)
        if theta.size == 0:
            return 0.0
        v = self.theta_prior_var
        return float(-0.5 * theta.size * (LOG_2PI + np.log(v)) - 0.5 * np.dot(theta, theta) / v)

    def residual(self, y):
        y = np.asarray(y, float).ravel()
        if y.shape != (self.n_obs,):
            raise DimensionError("y length must match observations")
        return y if self.offset is None else y - self.offset

    def linear_predictor(self, x):
        eta = self.a_augmented() @ x
        return eta if self.offset is None else eta + self.offset


@dataclass
class ConditionalGaussian:
    """Gaussian approximation of the latent posterior at one hyperparameter point."""

    theta: np.ndarray
    mean: np.ndarray
    factor: object
    log_marginal: float

    def marginal_var(self):
        return self.factor.inv_diag()

    def sample(self, rng, n_draws):
        z = rng.standard_normal((self.mean.size, n_draws))
        return self.mean[:, None] + self.factor.sample(z)


def _atay(model: LatentModel):
    """Cache (A^T A, A^T shape hooks) for repeated gaussian updates."""
    A = model.a_augmented()
    return (A.T @ A).tocsc(), A


def gaussian_conditional(model: LatentModel, theta, y, cache=None) -> ConditionalGaussian:
    """Exact conjugate update for the gaussian family.

    Returns the conditional posterior mean, the factored posterior precision
    Q + A^T A / sigma^2, and the exact log marginal posterior
    log pi(theta) + log pi(y | theta) (up to an additive constant shared
    across theta).
    """
    if model.family != GAUSSIAN:
        raise ValueError("gaussian_conditional requires the gaussian family")
    sigma2, theta_space = model.split_theta(theta)
    r = model.residual(y)
    AtA, A = cache if cache is not None else _atay(model)
    Q = model.prior_precision(theta_space)
    try:
        prior_factor = factorize(Q)
        P = (Q + AtA / sigma2).tocsc()
        post_factor = factorize(P)
    except NumericalError as exc:
        raise NumericalError(str(exc), theta=np.asarray(theta, float)) from exc
    b = A.T @ (r / sigma2)
    mean = post_factor.solve(b)
    n = model.n_obs
    log_ml = (
        -0.5 * n * (LOG_2PI + np.log(sigma2))
        + 0.5 * prior_factor.logdet
        - 0.5 * post_factor.logdet
        - 0.5 * (r @ r / sigma2 - b @ mean)
    )
    log_post = model.log_theta_prior(theta) + log_ml
    return ConditionalGaussian(np.asarray(theta, float), mean, post_factor, log_post)


def _bernoulli_loglik(y, eta):
    # sum_i [y_i eta_i - log(1 + exp(eta_i))]
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def newton_mode(model: LatentModel, theta, y, x0=None, max_iter=50, grad_tol=1e-8):
    """Posterior mode of the bernoulli-logit model by damped Newton.

    Maximizes sum_i [y_i eta_i - log(1 + e^eta_i)] - x^T Q x / 2 with
    eta = A x + offset. Returns (mode, curvature factor of Q + A^T W A at the
    mode, info dict). Raises ConvergenceError with the final gradient norm if
    the iteration stalls.
    """
    if model.family != BERNOULLI:
        raise ValueError("newton_mode requires the bernoulli family")
    y = np.asarray(y, float).ravel()
    if y.shape != (model.n_obs,):
        raise DimensionError("y length must match observations")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("bernoulli observations must be 0/1")
    _, theta_space = model.split_theta(theta)
    Q = model.prior_precision(theta_space)
    A = model.a_augmented()
    x = np.zeros(model.dim) if x0 is None else np.asarray(x0, float).copy()

    def objective(xv, eta):
        return _bernoulli_loglik(y, eta) - 0.5 * float(xv @ (Q @ xv))

    eta = model.linear_predictor(x)
    f = objective(x, eta)
    factor = None
    for _ in range(max_iter):
        p = expit(eta)
        grad = A.T @ (y - p) - Q @ x
        gnorm = float(np.linalg.norm(grad))
        w = p * (1.0 - p)
        AtWA = (A.T @ sps.diags(w) @ A).tocsc()
        try:
            factor = factorize((Q + AtWA).tocsc())
        except NumericalError as exc:
            raise NumericalError(str(exc), theta=np.asarray(theta, float)) from exc
        if gnorm < grad_tol:
            return x, factor, {"grad_norm": gnorm, "loglik": _bernoulli_loglik(y, eta), "Q": Q}
        step = factor.solve(grad)
        t = 1.0
        for _ in range(40):
            x_new = x + t * step
            eta_new = model.linear_predictor(x_new)
            f_new = objective(x_new, eta_new)
            if f_new >= f:
                break
            t *= 0.5
        else:
            break
        x, eta, f = x_new, eta_new, f_new
    p = expit(eta)
    gnorm = float(np.linalg.norm(A.T @ (y - p) - Q @ x))
    if gnorm < grad_tol:
        return x, factor, {"grad_norm": gnorm, "loglik": _bernoulli_loglik(y, eta), "Q": Q}
    raise ConvergenceError(
        f"Newton did not converge in {max_iter} iterations (|grad| = {gnorm:.3e})",
        grad_norm=gnorm,
        theta=np.asarray(theta, float),
    )


def laplace_conditional(model: LatentModel, theta, y, x0=None) -> ConditionalGaussian:
    """Gaussian approximation at the posterior mode for the bernoulli family."""
    x, factor, info = newton_mode(model, theta, y, x0=x0)
    Q = info["Q"]
    prior_factor = factorize(Q)
    log_post = (
        model.log_theta_prior(theta)
        + 0.5 * prior_factor.logdet
        - 0.5 * float(x @ (Q @ x))
        + info["loglik"]
        - 0.5 * factor.logdet
    )
    return ConditionalGaussian(np.asarray(theta, float), x, factor, log_post)


def laplace_log_marginal(model: LatentModel, theta, y) -> float:
    """log pi~(theta | y) up to a constant, via the Laplace identity.

    Evaluates log pi(theta) + log pi(x* | theta) + log pi(y | x*) minus the
    Gaussian approximation density at the mode. For the gaussian family the
    mode is the conjugate mean and the result is the exact log marginal.
    """
    if model.family == BERNOULLI:
        return laplace_conditional(model, theta, y).log_marginal
    sigma2, theta_space = model.split_theta(theta)
    cond = gaussian_conditional(model, theta, y)
    Q = model.prior_precision(theta_space)
    x = cond.mean
    r = model.residual(y) - model.a_augmented() @ x
    loglik = -0.5 * model.n_obs * (LOG_2PI + np.log(sigma2)) - 0.5 * float(r @ r) / sigma2
    prior_factor = factorize(Q)
    return (
        model.log_theta_prior(theta)
        + 0.5 * prior_factor.logdet
        - 0.5 * float(x @ (Q @ x))
        + loglik
        - 0.5 * cond.factor.logdet
    )


@dataclass(frozen=True)
class HyperGrid:
    """Hyperparameter grid points with normalized mixture weights."""

    points: np.ndarray  # (k, d)
    log_weights: np.ndarray  # (k,), logsumexp = 0
    log_post: np.ndarray  # raw log posterior values at the points
    mode: np.ndarray = field(default=None)
    step: np.ndarray = field(default=None)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def without_point(self, k: int) -> "HyperGrid":
        keep = np.arange(self.n_points) != k
        return hypergrid_from_logpost(self.points[keep], self.log_post[keep], prune_logdrop=None)


def hypergrid_from_logpost(points, log_post, prune_logdrop: float | None = 10.0) -> HyperGrid:
    """Normalize raw log posterior values into grid weights, pruning low points."""
    points = np.atleast_2d(np.asarray(points, float))
    log_post = np.asarray(log_post, float).ravel()
    if points.shape[0] != log_post.size:
        raise DimensionError("one log posterior value per grid point required")
    if prune_logdrop is not None:
        keep = log_post >= log_post.max() - prune_logdrop
        points, log_post = points[keep], log_post[keep]
    shifted = log_post - log_post.max()
    log_norm = np.log(np.exp(shifted).sum())
    return HyperGrid(points, shifted - log_norm, log_post)


@dataclass(frozen=True)
class GridSpec:
    """Controls for hyperparameter mode search and grid construction.

    The grid is a full product design with `points_per_dim` points per axis
    when that stays below `product_max_points`; otherwise a star design
    (center plus +-1 and +-2 steps along each axis). Steps are `step_sd`
    posterior standard deviations estimated by finite differences, clipped to
    the `sd_clip` range so flat directions stay usable.
    """

    points_per_dim: int = 5
    step_sd: float = 0.75
    prune_logdrop: float = 10.0
    design: str = "auto"  # 'product' | 'cross' | 'auto'
    fd_step: float = 0.1
    sd_clip: tuple = (1e-3, 5.0)
    product_max_points: int = 200
    nm_maxfev: Optional[int] = None
    nm_xatol: float = 0.02
    nm_fatol: float = 0.02


def _grid_offsets(d: int, spec: GridSpec) -> np.ndarray:
    reach = (spec.points_per_dim - 1) // 2
    use_product = spec.design == "product" or (
        spec.design == "auto" and spec.points_per_dim**d <= spec.product_max_points
    )
    if use_product:
        axes = [np.arange(-reach, reach + 1)] * d
        return np.array(list(itertools.product(*axes)), dtype=float)
    offsets = [np.zeros(d)]
    for i in range(d):
        for step in range(1, reach + 1):
            for sign in (+1.0, -1.0):
                o = np.zeros(d)
                o[i] = sign * step
                offsets.append(o)
    return np.array(offsets)


def _map_points(fn, points, n_workers):
    if n_workers and n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(fn, points))
    return [fn(p) for p in points]


def explore_hypergrid(
    model: LatentModel,
    y,
    theta_init=None,
    grid_spec: GridSpec | None = None,
    n_workers: int = 1,
) -> HyperGrid:
    """Locate the hyperparameter posterior mode and weight a grid around it.

    Derivative-free ascent (Nelder-Mead on the negated objective) finds the
    mode; central finite differences give per-axis curvature, from which grid
    steps are sized. Points whose log posterior falls more than
    `prune_logdrop` below the mode are dropped before normalization.
    """
    spec = grid_spec or GridSpec()
    d = model.theta_dim
    if d == 0:
        lp = np.array([_objective_factory(model, y)(np.empty(0))])
        return HyperGrid(np.empty((1, 0)), np.zeros(1), lp, mode=np.empty(0), step=np.empty(0))
    theta0 = np.zeros(d) if theta_init is None else np.asarray(theta_init, float).copy()
    obj = _objective_factory(model, y)

    res = minimize(
        lambda t: -obj(t),
        theta0,
        method="Nelder-Mead",
        options=dict(
            maxfev=spec.nm_maxfev or max(200, 60 * d),
            xatol=spec.nm_xatol,
            fatol=spec.nm_fatol,
        ),
    )
    mode = np.asarray(res.x, float)
    f_mode = -float(res.fun)
    if not np.isfinite(f_mode):
        raise NumericalError("hyperparameter mode search failed", theta=mode)

    # finite-difference curvature per axis -> step sizes
    h = spec.fd_step
    sds = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fp, fm = obj(mode + e), obj(mode - e)
        curv = -(fp - 2.0 * f_mode + fm) / (h * h)
        sds[i] = 1.0 / np.sqrt(curv) if curv > 0 else spec.sd_clip[1]
    sds = np.clip(sds, *spec.sd_clip)
    step = spec.step_sd * sds

    offsets = _grid_offsets(d, spec)
    points = mode[None, :] + offsets * step[None, :]
    center = np.nonzero((offsets == 0).all(axis=1))[0][0]
    log_post = np.empty(points.shape[0])
    vals = _map_points(obj, [p for k, p in enumerate(points) if k != center], n_workers)
    log_post[center] = f_mode
    log_post[np.arange(points.shape[0]) != center] = vals
    grid = hypergrid_from_logpost(points, log_post, prune_logdrop=spec.prune_logdrop)
    return HyperGrid(grid.points, grid.log_weights, grid.log_post, mode=mode, step=step)


def _objective_factory(model: LatentModel, y):
    if model.family == GAUSSIAN:
        cache = _atay(model)

        def obj(theta):
            try:
                return gaussian_conditional(model, theta, y, cache=cache).log_marginal
            except NumericalError:
                return -np.inf

        return obj

    state = {"x0": None}

    def obj(theta):
        try:
            cond = laplace_conditional(model, theta, y, x0=state["x0"])
        except (NumericalError, ConvergenceError):
            return -np.inf
        state["x0"] = cond.mean
        return cond.log_marginal

    return obj


@dataclass
class LatentPosterior:
    """Grid mixture of conditional Gaussians for every latent coordinate.

    Means/sds are stored per grid point and mixed; `conditionals` holds the
    per-point factors when sampling or functional marginals are needed.
    """

    grid: HyperGrid
    cond_means: np.ndarray  # (k, dim)
    cond_sds: np.ndarray  # (k, dim)
    mix_mean: np.ndarray
    mix_sd: np.ndarray
    log_marginals: np.ndarray
    n_latent: int
    n_fixed: int
    conditionals: Optional[list] = None

    @property
    def dim(self) -> int:
        return self.mix_mean.size

    def credible_interval(self, level: float = 0.95):
        """Equal-tail mixture credible intervals per coordinate."""
        alpha = 0.5 * (1.0 - level)
        w = self.grid.weights
        lo = mixture_quantiles(self.cond_means, self.cond_sds, w, alpha)
        hi = mixture_quantiles(self.cond_means, self.cond_sds, w, 1.0 - alpha)
        return lo, hi


def _mix(cond_means, cond_sds, weights):
    mean = weights @ cond_means
    second = weights @ (cond_sds**2 + cond_means**2)
    var = np.maximum(second - mean**2, 0.0)
    return mean, np.sqrt(var)


def latent_marginals(
    model: LatentModel, y, grid: HyperGrid, keep_factors: bool = True, n_workers: int = 1
) -> LatentPosterior:
    """Posterior marginals of every latent/fixed coordinate via grid mixing.

    Conditional means come from the per-point Gaussian approximations;
    mixture mean and variance use the standard two-moment identities.
    """
    if grid.n_points == 0:
        raise ValueError("the hyperparameter grid is empty")
    cache = _atay(model) if model.family == GAUSSIAN else None

    def one(theta):
        if model.family == GAUSSIAN:
            return gaussian_conditional(model, theta, y, cache=cache)
        return laplace_conditional(model, theta, y)

    conds = _map_points(one, list(grid.points), n_workers)
    cond_means = np.vstack([c.mean for c in conds])
    cond_sds = np.vstack([np.sqrt(c.marginal_var()) for c in conds])
    mix_mean, mix_sd = _mix(cond_means, cond_sds, grid.weights)
    return LatentPosterior(
        grid=grid,
        cond_means=cond_means,
        cond_sds=cond_sds,
        mix_mean=mix_mean,
        mix_sd=mix_sd,
        log_marginals=np.array([c.log_marginal for c in conds]),
        n_latent=model.n_latent,
        n_fixed=model.n_fixed,
        conditionals=conds if keep_factors else None,
    )


@dataclass
class FunctionalMarginals:
    """Mixture marginals of linear functionals L x of the latent vector."""

    cond_means: np.ndarray  # (k, m)
    cond_sds: np.ndarray  # (k, m)
    mix_mean: np.ndarray
    mix_sd: np.ndarray
    weights: np.ndarray

    def credible_interval(self, level: float = 0.95):
        alpha = 0.5 * (1.0 - level)
        lo = mixture_quantiles(self.cond_means, self.cond_sds, self.weights, alpha)
        hi = mixture_quantiles(self.cond_means, self.cond_sds, self.weights, 1.0 - alpha)
        return lo, hi


def mixture_functionals(posterior: LatentPosterior, L) -> FunctionalMarginals:
    """Marginals of rows of L (m x dim) applied to the latent vector."""
    if posterior.conditionals is None:
        raise ValueError("posterior was built with keep_factors=False")
    L = sps.csr_matrix(L)
    if L.shape[1] != posterior.dim:
        raise DimensionError("functional columns must match the latent dimension")
    means, sds = [], []
    for c in posterior.conditionals:
        means.append(L @ c.mean)
        sds.append(np.sqrt(np.maximum(c.factor.quad_inv_diag(L), 0.0)))
    cond_means = np.vstack(means)
    cond_sds = np.vstack(sds)
    w = posterior.grid.weights
    mix_mean, mix_sd = _mix(cond_means, cond_sds, w)
    return FunctionalMarginals(cond_means, cond_sds, mix_mean, mix_sd, w)


def _norm_cdf(z):
    from scipy.special import ndtr

    return ndtr(z)


def mixture_quantiles(cond_means, cond_sds, weights, prob: float, iters: int = 80) -> np.ndarray:
    """Quantiles of normal mixtures by vectorized bisection (one per column)."""
    m = np.asarray(cond_means, float)
    s = np.asarray(cond_sds, float)
    w = np.asarray(weights, float)
    s = np.maximum(s, 1e-300)
    lo = (m - 10.0 * s).min(axis=0)
    hi = (m + 10.0 * s).max(axis=0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        cdf = np.einsum("k,kj->j", w, _norm_cdf((mid[None, :] - m) / s))
        below = cdf < prob
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def sample_latent(posterior: LatentPosterior, grid: HyperGrid | None, n_draws: int, seed) -> np.ndarray:
    """Joint posterior draws: pick grid points by weight, then sample conditionals.

    Draws are grouped by grid point (order is deterministic under a fixed
    seed). Returns an (n_draws, dim) matrix.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    if posterior.conditionals is None:
        raise ValueError("posterior was built with keep_factors=False")
    grid = grid if grid is not None else posterior.grid
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n_draws, grid.weights)
    blocks = []
    for c, k in zip(posterior.conditionals, counts):
        if k:
            blocks.append(c.sample(rng, k).T)
    return np.vstack(blocks)


def write_posterior_csv(path, mean, sd, lower, upper, ids=None):
    """Posterior summary CSV: coordinate id, mean, sd, lower, upper."""
    ids = np.arange(len(mean)) if ids is None else ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "mean", "sd", "lower", "upper"])
        for i, m, s, lo, hi in zip(ids, mean, sd, lower, upper):
            w.writerow([i, repr(float(m)), repr(float(s)), repr(float(lo)), repr(float(hi))])


def bayes_ridge_batch(X: np.ndarray, Y: np.ndarray, prior_var: float = 1000.0, noise_var=None):
    """Batched conjugate normal regression of many series on one design.

    X is (T, q); Y is (m, T) with one row per series. When noise_var is None
    it is estimated per series from OLS residuals (floored away from zero).
    Returns (coef means (m, q), coef covariances (m, q, q), noise_var (m,)).
    """
    X = np.asarray(X, float)
    Y = np.atleast_2d(np.asarray(Y, float))
    T, q = X.shape
    XtX = X.T @ X
    XtY = Y @ X  # (m, q)
    if noise_var is None:
        ols = np.linalg.lstsq(X, Y.T, rcond=None)[0].T  # (m, q)
        resid = Y - ols @ X.T
        dof = max(T - q, 1)
        noise_var = np.maximum(np.einsum("mt,mt->m", resid, resid) / dof, 1e-12)
    else:
        noise_var = np.broadcast_to(np.asarray(noise_var, float), (Y.shape[0],)).copy()
    P = XtX[None, :, :] / noise_var[:, None, None] + np.eye(q)[None, :, :] / prior_var
    cov = np.linalg.inv(P)
    mean = np.einsum("mij,mj->mi", cov, XtY / noise_var[:, None])
    return mean, cov, noise_var


def bayes_logit_batch(
    X: np.ndarray, Y: np.ndarray, prior_var: float = 1000.0, offset=None, max_iter=100, tol=1e-10
):
    """Batched Laplace fits of independent logistic regressions.

    X is (T, q) shared across series; Y is (m, T) of 0/1 outcomes. Returns
    (posterior modes (m, q), posterior covariances (m, q, q), flags (m,))
    where a flag marks series with no outcome variation (coefficients pinned
    to zero for those).
    """
    X = np.asarray(X, float)
    Y = np.atleast_2d(np.asarray(Y, float))
    m, T = Y.shape
    q = X.shape[1]
    flat = np.all(Y == Y[:, :1], axis=1)
    beta = np.zeros((m, q))
    off = 0.0 if offset is None else np.asarray(offset, float)
    eye = np.eye(q) / prior_var
    for _ in range(max_iter):
        eta = beta @ X.T + off
        p = expit(eta)
        grad = (Y - p) @ X - beta / prior_var  # (m, q)
        w = p * (1.0 - p)
        H = np.einsum("mt,ti,tj->mij", w, X, X) + eye[None, :, :]
        step = np.linalg.solve(H, grad)
        beta = beta + step
        if np.abs(grad).max() < tol:
            break
    beta[flat] = 0.0
    eta = beta @ X.T + off
    p = expit(eta)
    w = p * (1.0 - p)
    H = np.einsum("mt,ti,tj->mij", w, X, X) + eye[None, :, :]
    cov = np.linalg.inv(H)
    return beta, cov, flat
