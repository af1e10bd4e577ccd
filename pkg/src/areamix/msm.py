"""Spatial mixed-effects model on the log scale, fit by conjugate Gibbs.

Data model
    z = X beta + Psi eta + noise,  noise ~ N(0, diag(d)) with d known.
Priors
    beta ~ N(0, sigma2_beta I)
    eta | sigma2_eta ~ N(0, sigma2_eta K),  K^{-1} = Psi' Q Psi
    sigma2_eta ~ InverseGamma(a_eta, b_eta)   [shape/scale]

All three full conditionals are available in closed form, so the sampler
is a plain three-block Gibbs scan: beta, then eta, then sigma2_eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .basis import MoranBasis
from .errors import DivergenceError, DomainError, ShapeError


@dataclass
class MsmConfig:
    """Sampler settings; hyperparameter defaults follow the reference fit."""

    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    sigma2_beta: float = 100.0
    a_eta: float = 0.1
    b_eta: float = 0.1
    # Hold the basis-coefficient variance fixed instead of sampling it.
    # Used by conjugacy checks where the Gaussian posterior is closed-form.
    sigma2_eta_fixed: float | None = None

    def validate(self) -> None:
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise DomainError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit nonnegative integer")
        for name in ("sigma2_beta", "a_eta", "b_eta"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.sigma2_eta_fixed is not None and self.sigma2_eta_fixed <= 0:
            raise DomainError("sigma2_eta_fixed must be positive")


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained Gibbs output for the single-field model."""

    beta: np.ndarray
    eta: np.ndarray
    sigma2_eta: np.ndarray
    y: np.ndarray
    seed: int

    @property
    def n_retained(self) -> int:
        return self.y.shape[0]


def _check_data(z, d, x, psi) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    psi = np.asarray(psi, dtype=float)
    n = z.size
    if d.shape != (n,):
        raise ShapeError("z and d must have the same length")
    if x.ndim != 2 or x.shape[0] != n:
        raise ShapeError("design must be (n, p)")
    if psi.ndim != 2 or psi.shape[0] != n:
        raise ShapeError("basis must be (n, r)")
    if not np.all(np.isfinite(z)):
        raise DomainError("z must be finite")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DomainError("all variances d must be finite and positive (impute first)")
    return z, d, x, psi


def _posterior_factor(prec: np.ndarray, lin: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky of a posterior precision plus the posterior mean."""
    chol = np.linalg.cholesky(prec)
    half = solve_triangular(chol, lin, lower=True)
    mean = solve_triangular(chol.T, half, lower=False)
    return chol, mean


def _cov_from_chol(chol: np.ndarray) -> np.ndarray:
    half = solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    cov = half.T @ half
    return (cov + cov.T) / 2.0


def conditional_beta(z, d, x, psi, eta, sigma2_beta: float):
    """Full conditional of beta: N(mean, cov) with
    cov = (X' D^{-1} X + I/sigma2_beta)^{-1},
    mean = cov X' D^{-1} (z - Psi eta).
    """
    z, d, x, psi = _check_data(z, d, x, psi)
    eta = np.asarray(eta, dtype=float).ravel()
    if sigma2_beta <= 0:
        raise DomainError("sigma2_beta must be positive")
    p = x.shape[1]
    xt_dinv = x.T / d
    prec = xt_dinv @ x + np.eye(p) / sigma2_beta
    lin = xt_dinv @ (z - psi @ eta)
    chol, mean = _posterior_factor(prec, lin)
    return mean, _cov_from_chol(chol)


def conditional_eta(z, d, x, psi, beta, k_inv, sigma2_eta: float):
    """Full conditional of eta: N(mean, cov) with
    cov = (Psi' D^{-1} Psi + K^{-1}/sigma2_eta)^{-1},
    mean = cov Psi' D^{-1} (z - X beta).
    """
    z, d, x, psi = _check_data(z, d, x, psi)
    beta = np.asarray(beta, dtype=float).ravel()
    k_inv = np.asarray(k_inv, dtype=float)
    if sigma2_eta <= 0:
        raise DomainError("sigma2_eta must be positive")
    psit_dinv = psi.T / d
    prec = psit_dinv @ psi + k_inv / sigma2_eta
    lin = psit_dinv @ (z - x @ beta)
    chol, mean = _posterior_factor(prec, lin)
    return mean, _cov_from_chol(chol)


def conditional_sigma2_eta(eta, k_inv, a_eta: float, b_eta: float) -> tuple[float, float]:
    """Inverse-gamma full conditional (shape, scale):
    shape = a_eta + r/2, scale = b_eta + eta' K^{-1} eta / 2.
    """
    eta = np.asarray(eta, dtype=float).ravel()
    k_inv = np.asarray(k_inv, dtype=float)
    if a_eta <= 0 or b_eta <= 0:
        raise DomainError("a_eta and b_eta must be positive")
    if k_inv.shape != (eta.size, eta.size):
        raise ShapeError("k_inv must be (r, r)")
    shape = a_eta + eta.size / 2.0
    scale = b_eta + float(eta @ k_inv @ eta) / 2.0
    return shape, scale


def draw_inverse_gamma(rng: np.random.Generator, shape: float, scale: float) -> float:
    """One InverseGamma(shape, scale) variate: 1 / Gamma(shape, rate=scale)."""
    return float(1.0 / rng.gamma(shape, 1.0 / scale))


def fit_msm(z, d, x, basis: MoranBasis, config: MsmConfig | None = None) -> PosteriorDraws:
    """Gibbs-sample the spatial mixed-effects model.

    The scan order is beta, eta, sigma2_eta, initialised at beta = 0,
    eta = 0, sigma2_eta = 1.  Retained iterations are those at or past
    burn_in, stepping by thin; the latent field y = X beta + Psi eta is
    stored per retained draw.

    Raises DivergenceError (with the iteration index) if any draw goes
    non-finite.
    """
    config = config or MsmConfig()
    config.validate()
    psi = basis.psi
    k_inv = basis.k_inv
    z, d, x, psi = _check_data(z, d, x, psi)
    n, p = x.shape
    r = psi.shape[1]
    if k_inv.shape != (r, r):
        raise ShapeError("basis precision must be (r, r)")

    rng = np.random.default_rng(config.seed)
    xt_dinv = x.T / d
    prec_beta = xt_dinv @ x + np.eye(p) / config.sigma2_beta
    chol_beta = np.linalg.cholesky(prec_beta)
    psit_dinv = psi.T / d
    prec_eta_data = psit_dinv @ psi

    fixed = config.sigma2_eta_fixed
    beta = np.zeros(p)
    eta = np.zeros(r)
    sigma2_eta = 1.0 if fixed is None else float(fixed)

    keep = range(config.burn_in, config.iterations, config.thin)
    n_keep = len(keep)
    out_beta = np.empty((n_keep, p))
    out_eta = np.empty((n_keep, r))
    out_sigma2 = np.empty(n_keep)
    out_y = np.empty((n_keep, n))

    slot = 0
    for t in range(config.iterations):
        lin = xt_dinv @ (z - psi @ eta)
        half = solve_triangular(chol_beta, lin, lower=True)
        mean_b = solve_triangular(chol_beta.T, half, lower=False)
        beta = mean_b + solve_triangular(chol_beta.T, rng.standard_normal(p), lower=False)

        prec_eta = prec_eta_data + k_inv / sigma2_eta
        chol_eta = np.linalg.cholesky(prec_eta)
        lin = psit_dinv @ (z - x @ beta)
        half = solve_triangular(chol_eta, lin, lower=True)
        mean_e = solve_triangular(chol_eta.T, half, lower=False)
        eta = mean_e + solve_triangular(chol_eta.T, rng.standard_normal(r), lower=False)

        if fixed is None:
            shape = config.a_eta + r / 2.0
            scale = config.b_eta + float(eta @ k_inv @ eta) / 2.0
            if not np.isfinite(scale):
                raise DivergenceError("sigma2_eta scale diverged", iteration=t)
            sigma2_eta = draw_inverse_gamma(rng, shape, scale)

        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(eta)) and np.isfinite(sigma2_eta)):
            raise DivergenceError("non-finite draw", iteration=t)

        if t >= config.burn_in and (t - config.burn_in) % config.thin == 0:
            y = x @ beta + psi @ eta
            if not np.all(np.isfinite(y)):
                raise DivergenceError("non-finite latent field", iteration=t)
            out_beta[slot] = beta
            out_eta[slot] = eta
            out_sigma2[slot] = sigma2_eta
            out_y[slot] = y
            slot += 1

    return PosteriorDraws(
        beta=out_beta,
        eta=out_eta,
        sigma2_eta=out_sigma2,
        y=out_y,
        seed=config.seed,
    )
