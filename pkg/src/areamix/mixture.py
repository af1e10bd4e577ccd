"""Mixture extension: entry-level coefficients under a Dirichlet process.

Each observation i carries theta_i = (beta_i, eta_i) in R^{p+r} with

    z_i | theta_i ~ N(u_i' theta_i, d_i),    u_i = [x_i; psi_i]
    theta_i | G ~ G,   G ~ DP(alpha G0),
    G0 = N(0, Sigma0),  Sigma0 = blockdiag(sigma2_beta I_p, sigma2_eta K).

Ties among the theta_i induce clusters of observations that share one
regression surface and one spatial field.  Two samplers are provided:

* fit_msmm_dp: collapsed Gibbs over cluster assignments (atoms
  integrated out of the assignment step, then re-instantiated).
* fit_msmm_truncated: blocked Gibbs under a finite stick-breaking
  truncation with M components.

Both update sigma2_eta through its inverse-gamma conditional over the
occupied atoms, and the concentration alpha through the beta-augmented
gamma mixture (collapsed) or the stick-breaking conjugate form
(truncated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .basis import MoranBasis
from .errors import DivergenceError, DomainError, ShapeError
from .msm import _check_data, draw_inverse_gamma

_LOG_2PI = math.log(2.0 * math.pi)
_STICK_EPS = 1e-12  # keep drawn sticks strictly inside (0, 1)


def _norm_logpdf(x: float, mean: float, var: float) -> float:
    return -0.5 * (_LOG_2PI + math.log(var) + (x - mean) ** 2 / var)


@dataclass(frozen=True)
class BaseMeasure:
    """The Gaussian base distribution N(0, Sigma0) of the process.

    Sigma0 = blockdiag(sigma2_beta I_p, sigma2_eta K); ``k`` is the SPD
    spatial covariance kernel K and ``k_inv`` its inverse.
    """

    p: int
    sigma2_beta: float
    sigma2_eta: float
    k: np.ndarray
    k_inv: np.ndarray

    @property
    def r(self) -> int:
        return self.k.shape[0]

    @property
    def dim(self) -> int:
        return self.p + self.r

    @classmethod
    def from_basis(
        cls, basis: MoranBasis, p: int, sigma2_beta: float, sigma2_eta: float
    ) -> "BaseMeasure":
        return cls(
            p=p,
            sigma2_beta=float(sigma2_beta),
            sigma2_eta=float(sigma2_eta),
            k=basis.k,
            k_inv=basis.k_inv,
        )

    def prior_precision(self) -> np.ndarray:
        q = self.dim
        prec = np.zeros((q, q))
        prec[: self.p, : self.p] = np.eye(self.p) / self.sigma2_beta
        prec[self.p :, self.p :] = self.k_inv / self.sigma2_eta
        return prec

    def prior_covariance(self) -> np.ndarray:
        q = self.dim
        cov = np.zeros((q, q))
        cov[: self.p, : self.p] = np.eye(self.p) * self.sigma2_beta
        cov[self.p :, self.p :] = self.k * self.sigma2_eta
        return cov

    def draw(self, rng: np.random.Generator, chol_k: np.ndarray | None = None) -> np.ndarray:
        if chol_k is None:
            chol_k = np.linalg.cholesky(self.k)
        head = math.sqrt(self.sigma2_beta) * rng.standard_normal(self.p)
        tail = math.sqrt(self.sigma2_eta) * (chol_k @ rng.standard_normal(self.r))
        return np.concatenate([head, tail])


@dataclass
class MixtureState:
    """A snapshot of the sampler: assignments, atoms, and scalars.

    ``assignments[i] == -1`` marks an observation currently held out of
    every cluster (used while its label is being resampled).
    """

    assignments: np.ndarray
    thetas: dict[int, np.ndarray] = field(default_factory=dict)
    alpha: float = 1.0
    sigma2_eta: float = 1.0

    def cluster_sizes(self) -> dict[int, int]:
        labels, counts = np.unique(self.assignments[self.assignments >= 0], return_counts=True)
        return {int(l): int(c) for l, c in zip(labels, counts)}

    def clusters(self) -> dict[int, tuple[np.ndarray | None, int]]:
        return {
            label: (self.thetas.get(label), size)
            for label, size in self.cluster_sizes().items()
        }


def cluster_posterior(
    members: np.ndarray, z, d, u, base: BaseMeasure
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mean, cov) of a cluster atom given its members.

    cov = (Sigma0^{-1} + sum u_i u_i'/d_i)^{-1},
    mean = cov sum u_i z_i / d_i,
    with the sums over ``members`` (row indices).  An empty member set
    returns the base measure itself: (0, Sigma0).
    """
    members = np.asarray(members, dtype=int).ravel()
    z = np.asarray(z, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != base.dim:
        raise ShapeError("u must be (n, p + r)")
    if members.size == 0:
        return np.zeros(base.dim), base.prior_covariance()
    rows = u[members]
    weights = d[members]
    prec = base.prior_precision() + (rows / weights[:, None]).T @ rows
    lin = rows.T @ (z[members] / weights)
    chol = np.linalg.cholesky(prec)
    half = solve_triangular(chol, lin, lower=True)
    mean = solve_triangular(chol.T, half, lower=False)
    inv_half = solve_triangular(chol, np.eye(base.dim), lower=True)
    cov = inv_half.T @ inv_half
    return mean, (cov + cov.T) / 2.0


def crp_assignment_probs(
    i: int, state: MixtureState, z, d, u, base: BaseMeasure
) -> tuple[list[int], np.ndarray]:
    """Assignment probabilities for observation i with atoms integrated out.

    Requires observation i to be held out (``state.assignments[i] == -1``).
    For each existing cluster c the weight is

        n_c * N(z_i; u_i' m_c, u_i' S_c u_i + d_i)

    where (m_c, S_c) is the atom posterior from the remaining members,
    and the weight of a fresh cluster is

        alpha * N(z_i; 0, u_i' Sigma0 u_i + d_i).

    Everything is accumulated in log space and normalised.  Returns the
    sorted existing labels and a probability vector whose final entry is
    the new-cluster probability.
    """
    z = np.asarray(z, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    u = np.asarray(u, dtype=float)
    assign = state.assignments
    if not (0 <= i < assign.size):
        raise DomainError(f"observation index {i} out of range")
    if assign[i] != -1:
        raise DomainError("observation must be removed from its cluster first")
    u_i = u[i]
    labels = sorted(int(l) for l in np.unique(assign[assign >= 0]))
    logw = np.empty(len(labels) + 1)
    for pos, label in enumerate(labels):
        members = np.flatnonzero(assign == label)
        mean, cov = cluster_posterior(members, z, d, u, base)
        mu = float(u_i @ mean)
        var = float(u_i @ cov @ u_i) + d[i]
        logw[pos] = math.log(members.size) + _norm_logpdf(z[i], mu, var)
    var0 = float(u_i @ base.prior_covariance() @ u_i) + d[i]
    logw[-1] = math.log(state.alpha) + _norm_logpdf(z[i], 0.0, var0)
    probs = np.exp(logw - logsumexp(logw))
    return labels, probs / probs.sum()


def update_alpha_escobar_west(
    alpha: float, k: int, n: int, a_alpha: float, b_alpha: float, rng: np.random.Generator
) -> float:
    """Resample the concentration given k occupied clusters among n items.

    Augmented beta-variable scheme: draw zeta ~ Beta(alpha + 1, n), form
    the odds pi/(1 - pi) = (a_alpha + k - 1) / (n (b_alpha - log zeta)),
    then draw from Gamma(a_alpha + k, b_alpha - log zeta) with
    probability pi and from Gamma(a_alpha + k - 1, .) otherwise (shape /
    rate parameterisation).
    """
    if k < 1 or n < 1:
        raise DomainError("need k >= 1 clusters and n >= 1 observations")
    if alpha <= 0 or a_alpha <= 0 or b_alpha <= 0:
        raise DomainError("alpha and its prior parameters must be positive")
    zeta = float(rng.beta(alpha + 1.0, n))
    zeta = min(max(zeta, np.finfo(float).tiny), 1.0 - 1e-16)
    rate = b_alpha - math.log(zeta)
    odds = (a_alpha + k - 1.0) / (n * rate)
    pi = odds / (1.0 + odds)
    shape = a_alpha + k if rng.random() < pi else a_alpha + k - 1.0
    return float(rng.gamma(shape, 1.0 / rate))


def stick_break(v) -> np.ndarray:
    """Weights from stick-breaking fractions: pi_k = V_k prod_{b<k}(1 - V_b).

    ``v`` has length M - 1 with entries strictly inside (0, 1); the last
    stick is implicitly 1, so the returned M weights sum to one.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size < 1:
        raise DomainError("need at least one stick fraction")
    if np.any(v <= 0.0) or np.any(v >= 1.0):
        raise DomainError("stick fractions must lie strictly inside (0, 1)")
    remain = np.concatenate([[1.0], np.cumprod(1.0 - v)])
    pi = np.empty(v.size + 1)
    pi[:-1] = v * remain[:-1]
    pi[-1] = remain[-1]
    return pi


def prior_expected_clusters(alpha: float, n: int) -> float:
    """E[number of clusters] among n draws: sum_i alpha / (alpha + i - 1)."""
    if alpha <= 0 or n < 1:
        raise DomainError("alpha must be positive and n >= 1")
    return float(np.sum(alpha / (alpha + np.arange(n))))


def crp_simulate(alpha: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """One partition of n items by sequential seating (labels 0-based)."""
    if alpha <= 0 or n < 1:
        raise DomainError("alpha must be positive and n >= 1")
    labels = np.zeros(n, dtype=int)
    counts: list[int] = [1]
    for i in range(1, n):
        total = i + alpha
        cut = rng.random() * total
        acc = 0.0
        chosen = len(counts)
        for c, size in enumerate(counts):
            acc += size
            if cut < acc:
                chosen = c
                break
        if chosen == len(counts):
            counts.append(1)
        else:
            counts[chosen] += 1
        labels[i] = chosen
    return labels


def canonicalize_labels(labels) -> np.ndarray:
    """Relabel clusters 0,1,2,... in order of first appearance."""
    labels = np.asarray(labels).ravel()
    seen: dict[int, int] = {}
    out = np.empty(labels.size, dtype=np.int32)
    for idx, lab in enumerate(labels):
        out[idx] = seen.setdefault(int(lab), len(seen))
    return out


@dataclass
class MixtureConfig:
    """Settings shared by both mixture samplers."""

    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    sigma2_beta: float = 100.0
    a_eta: float = 0.1
    b_eta: float = 0.1
    a_alpha: float = 1.0
    b_alpha: float = 4.0
    truncation_m: int = 25
    # Testing knobs: drop the data likelihood from the assignment step
    # (the partition then follows the prior process), or pin alpha.
    prior_only: bool = False
    alpha_fixed: float | None = None

    def validate(self) -> None:
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise DomainError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit nonnegative integer")
        for name in ("sigma2_beta", "a_eta", "b_eta", "a_alpha", "b_alpha"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.truncation_m < 2:
            raise DomainError("truncation_m must be >= 2")
        if self.alpha_fixed is not None and self.alpha_fixed <= 0:
            raise DomainError("alpha_fixed must be positive")


@dataclass(frozen=True)
class MixturePosterior:
    """Retained draws from a mixture fit.

    ``assignments`` holds one canonicalised partition per retained draw;
    all other summaries are label-free, so any relabelling of clusters
    leaves the posterior output unchanged.
    """

    y: np.ndarray
    alpha: np.ndarray
    sigma2_eta: np.ndarray
    n_clusters: np.ndarray
    assignments: np.ndarray
    seed: int

    @property
    def n_retained(self) -> int:
        return self.y.shape[0]


class _ClusterStats:
    """Running sufficient statistics of one cluster (collapsed sampler)."""

    __slots__ = ("count", "f", "g", "chol", "mean")

    def __init__(self, dim: int):
        self.count = 0
        self.f = np.zeros((dim, dim))
        self.g = np.zeros(dim)
        self.chol: np.ndarray | None = None
        self.mean: np.ndarray | None = None

    def add(self, u_i: np.ndarray, z_i: float, d_i: float) -> None:
        self.f += np.outer(u_i, u_i) / d_i
        self.g += u_i * (z_i / d_i)
        self.count += 1
        self.chol = None

    def remove(self, u_i: np.ndarray, z_i: float, d_i: float) -> None:
        self.f -= np.outer(u_i, u_i) / d_i
        self.g -= u_i * (z_i / d_i)
        self.count -= 1
        self.chol = None

    def refresh(self, prec0: np.ndarray) -> None:
        # factorisation recomputed from the accumulated stats; no downdating
        self.chol = np.linalg.cholesky(prec0 + self.f)
        half = solve_triangular(self.chol, self.g, lower=True)
        self.mean = solve_triangular(self.chol.T, half, lower=False)


def _retained_slots(config: MixtureConfig) -> range:
    return range(config.burn_in, config.iterations, config.thin)


def fit_msmm_dp(
    z, d, x, basis: MoranBasis, config: MixtureConfig | None = None
) -> MixturePosterior:
    """Collapsed Gibbs for the mixture model.

    Scan per iteration: (1) one pass of assignment updates with atoms
    integrated out, spawning and deleting clusters as needed; (2) atom
    redraw per cluster from its Gaussian posterior; (3) sigma2_eta from
    InverseGamma(a_eta + k r / 2, b_eta + sum_c eta_c' K^{-1} eta_c / 2);
    (4) alpha by the augmented beta-gamma step.  Starts from a single
    cluster holding every observation, alpha = 1, sigma2_eta = 1.
    """
    config = config or MixtureConfig()
    config.validate()
    z, d, x, psi = _check_data(z, d, x, basis.psi)
    n, p = x.shape
    r = psi.shape[1]
    q = p + r
    u = np.hstack([x, psi])
    k_inv = basis.k_inv
    k_mat = basis.k

    rng = np.random.default_rng(config.seed)
    xnorm2 = np.einsum("ij,ij->i", x, x)
    psi_k_psi = np.einsum("ij,jk,ik->i", psi, k_mat, psi)

    assignments = np.zeros(n, dtype=int)
    alpha = config.alpha_fixed if config.alpha_fixed is not None else 1.0
    sigma2_eta = 1.0
    next_label = 1

    keep = _retained_slots(config)
    n_keep = len(keep)
    out_y = np.zeros((n_keep, n))
    out_alpha = np.empty(n_keep)
    out_sigma2 = np.empty(n_keep)
    out_k = np.empty(n_keep, dtype=np.int32)
    out_assign = np.empty((n_keep, n), dtype=np.int32)

    slot = 0
    for t in range(config.iterations):
        prec0 = np.zeros((q, q))
        prec0[:p, :p] = np.eye(p) / config.sigma2_beta
        prec0[p:, p:] = k_inv / sigma2_eta
        log_alpha = math.log(alpha)
        new_var_base = config.sigma2_beta * xnorm2 + sigma2_eta * psi_k_psi + d

        # rebuild sufficient statistics from scratch each sweep
        stats: dict[int, _ClusterStats] = {}
        for label in np.unique(assignments):
            idx = np.flatnonzero(assignments == label)
            st = _ClusterStats(q)
            rows = u[idx]
            st.f = (rows / d[idx, None]).T @ rows
            st.g = rows.T @ (z[idx] / d[idx])
            st.count = idx.size
            stats[int(label)] = st

        for i in range(n):
            u_i = u[i]
            z_i = z[i]
            d_i = d[i]
            old = int(assignments[i])
            st_old = stats[old]
            st_old.remove(u_i, z_i, d_i)
            if st_old.count == 0:
                del stats[old]
            assignments[i] = -1

            labels = list(stats.keys())
            logw = np.empty(len(labels) + 1)
            if config.prior_only:
                for pos, label in enumerate(labels):
                    logw[pos] = math.log(stats[label].count)
                logw[-1] = log_alpha
            else:
                for pos, label in enumerate(labels):
                    st = stats[label]
                    if st.chol is None:
                        st.refresh(prec0)
                    w = solve_triangular(st.chol, u_i, lower=True)
                    var = float(w @ w) + d_i
                    mu = float(u_i @ st.mean)
                    logw[pos] = math.log(st.count) + _norm_logpdf(z_i, mu, var)
                logw[-1] = log_alpha + _norm_logpdf(z_i, 0.0, new_var_base[i])

            probs = np.exp(logw - logw.max())
            probs /= probs.sum()
            pick = int(np.searchsorted(np.cumsum(probs), rng.random()))
            pick = min(pick, len(labels))
            if pick == len(labels):
                label = next_label
                next_label += 1
                stats[label] = _ClusterStats(q)
            else:
                label = labels[pick]
            stats[label].add(u_i, z_i, d_i)
            assignments[i] = label

        k = len(stats)
        if not config.prior_only:
            eta_quad = 0.0
            y = np.empty(n)
            for label, st in stats.items():
                if st.chol is None:
                    st.refresh(prec0)
                theta = st.mean + solve_triangular(
                    st.chol.T, rng.standard_normal(q), lower=False
                )
                if not np.all(np.isfinite(theta)):
                    raise DivergenceError("non-finite atom draw", iteration=t)
                idx = np.flatnonzero(assignments == label)
                y[idx] = u[idx] @ theta
                eta = theta[p:]
                eta_quad += float(eta @ k_inv @ eta)
            scale = config.b_eta + eta_quad / 2.0
            if not np.isfinite(scale):
                raise DivergenceError("sigma2_eta scale diverged", iteration=t)
            sigma2_eta = draw_inverse_gamma(rng, config.a_eta + k * r / 2.0, scale)
        else:
            y = np.zeros(n)

        if config.alpha_fixed is None:
            alpha = update_alpha_escobar_west(
                alpha, k, n, config.a_alpha, config.b_alpha, rng
            )
        if not (np.isfinite(alpha) and np.isfinite(sigma2_eta) and np.all(np.isfinite(y))):
            raise DivergenceError("non-finite draw", iteration=t)

        if t >= config.burn_in and (t - config.burn_in) % config.thin == 0:
            out_y[slot] = y
            out_alpha[slot] = alpha
            out_sigma2[slot] = sigma2_eta
            out_k[slot] = k
            out_assign[slot] = canonicalize_labels(assignments)
            slot += 1

    return MixturePosterior(
        y=out_y,
        alpha=out_alpha,
        sigma2_eta=out_sigma2,
        n_clusters=out_k,
        assignments=out_assign,
        seed=config.seed,
    )


def fit_msmm_truncated(
    z, d, x, basis: MoranBasis, config: MixtureConfig | None = None
) -> MixturePosterior:
    """Blocked Gibbs under an M-component stick-breaking truncation.

    Scan per iteration: assignments from the categorical conditional
    pi_m N(z_i; u_i' theta_m, d_i); sticks V_m ~ Beta(1 + n_m,
    alpha + sum_{l>m} n_l) with V_M = 1; atoms from their cluster
    posteriors (empty components refresh from the base measure);
    sigma2_eta over occupied components; alpha ~ Gamma(a_alpha + M - 1,
    b_alpha - sum_{m<M} log(1 - V_m)).
    """
    config = config or MixtureConfig()
    config.validate()
    z, d, x, psi = _check_data(z, d, x, basis.psi)
    n, p = x.shape
    r = psi.shape[1]
    q = p + r
    u = np.hstack([x, psi])
    k_inv = basis.k_inv
    m_comp = config.truncation_m

    rng = np.random.default_rng(config.seed)
    chol_k = np.linalg.cholesky(basis.k)

    theta = np.zeros((m_comp, q))
    alpha = config.alpha_fixed if config.alpha_fixed is not None else 1.0
    sigma2_eta = 1.0
    v = np.clip(rng.beta(1.0, alpha, size=m_comp - 1), _STICK_EPS, 1.0 - _STICK_EPS)
    pi = stick_break(v)
    log_d_term = -0.5 * (_LOG_2PI + np.log(d))

    keep = _retained_slots(config)
    n_keep = len(keep)
    out_y = np.zeros((n_keep, n))
    out_alpha = np.empty(n_keep)
    out_sigma2 = np.empty(n_keep)
    out_k = np.empty(n_keep, dtype=np.int32)
    out_assign = np.empty((n_keep, n), dtype=np.int32)

    slot = 0
    for t in range(config.iterations):
        with np.errstate(divide="ignore"):
            log_pi = np.log(pi)
        if config.prior_only:
            logw = np.broadcast_to(log_pi, (n, m_comp)).copy()
        else:
            means = u @ theta.T
            logw = (
                log_pi[None, :]
                - 0.5 * (z[:, None] - means) ** 2 / d[:, None]
                + log_d_term[:, None]
            )
        gumbel = rng.gumbel(size=(n, m_comp))
        c = np.argmax(logw + gumbel, axis=1)
        counts = np.bincount(c, minlength=m_comp)

        tail = counts[::-1].cumsum()[::-1]
        v = rng.beta(1.0 + counts[: m_comp - 1], alpha + tail[1:])
        v = np.clip(v, _STICK_EPS, 1.0 - _STICK_EPS)
        pi = stick_break(v)

        prec0 = np.zeros((q, q))
        prec0[:p, :p] = np.eye(p) / config.sigma2_beta
        prec0[p:, p:] = k_inv / sigma2_eta
        eta_quad = 0.0
        k_occ = 0
        for m in range(m_comp):
            idx = np.flatnonzero(c == m)
            if idx.size == 0:
                head = math.sqrt(config.sigma2_beta) * rng.standard_normal(p)
                tail_draw = math.sqrt(sigma2_eta) * (chol_k @ rng.standard_normal(r))
                theta[m] = np.concatenate([head, tail_draw])
                continue
            k_occ += 1
            rows = u[idx]
            weights = d[idx]
            prec = prec0 + (rows / weights[:, None]).T @ rows
            chol = np.linalg.cholesky(prec)
            half = solve_triangular(chol, rows.T @ (z[idx] / weights), lower=True)
            mean = solve_triangular(chol.T, half, lower=False)
            theta[m] = mean + solve_triangular(chol.T, rng.standard_normal(q), lower=False)
            eta = theta[m, p:]
            eta_quad += float(eta @ k_inv @ eta)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("non-finite atom draw", iteration=t)

        if not config.prior_only:
            scale = config.b_eta + eta_quad / 2.0
            if not np.isfinite(scale):
                raise DivergenceError("sigma2_eta scale diverged", iteration=t)
            sigma2_eta = draw_inverse_gamma(rng, config.a_eta + k_occ * r / 2.0, scale)

        if config.alpha_fixed is None:
            rate = config.b_alpha - float(np.sum(np.log1p(-v)))
            alpha = float(rng.gamma(config.a_alpha + m_comp - 1.0, 1.0 / rate))

        y = np.einsum("ij,ij->i", u, theta[c]) if not config.prior_only else np.zeros(n)
        if not (np.isfinite(alpha) and np.isfinite(sigma2_eta) and np.all(np.isfinite(y))):
            raise DivergenceError("non-finite draw", iteration=t)

        if t >= config.burn_in and (t - config.burn_in) % config.thin == 0:
            out_y[slot] = y
            out_alpha[slot] = alpha
            out_sigma2[slot] = sigma2_eta
            out_k[slot] = k_occ
            out_assign[slot] = canonicalize_labels(c)
            slot += 1

    return MixturePosterior(
        y=out_y,
        alpha=out_alpha,
        sigma2_eta=out_sigma2,
        n_clusters=out_k,
        assignments=out_assign,
        seed=config.seed,
    )
