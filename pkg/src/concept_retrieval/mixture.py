"""Two-component 1-D Gaussian mixtures fitted by EM.

Component 1 is always the higher-mean ("concept") component. Fits start
from a median split and run one extra seeded restart; the restart is kept
only when it ends with a higher log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateFitError, InsufficientSamplesError

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EMSettings:
    min_samples: int = 20
    tol: float = 1e-7          # on the per-sample mean log-likelihood
    max_iter: int = 200
    sigma_floor: float = 1e-4
    restart: bool = True


@dataclass(frozen=True)
class Gmm2:
    pi1: float
    pi2: float
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    log_likelihood: float
    converged: bool
    iterations: int
    ll_trace: tuple = field(default=(), repr=False, compare=False)


class ComponentAssignment(NamedTuple):
    labels: np.ndarray          # 1 = high-mean component, 2 = low-mean component
    concept_count: int
    nonconcept_count: int


def _log_weighted(x, pi, mu, sigma):
    """log(pi * N(x | mu, sigma^2)) with broadcasting over rows."""
    z = (x - mu) / sigma
    return np.log(pi) - np.log(sigma) - 0.5 * LOG_2PI - 0.5 * z * z


def _median_split_init(x, floor):
    med = np.median(x, axis=1, keepdims=True)
    high = x > med
    # when the upper half is a single repeated value, ">" leaves it empty
    empty = ~high.any(axis=1)
    if empty.any():
        high[empty] = x[empty] >= med[empty]
    low = ~high
    n_hi = high.sum(1)
    n_lo = low.sum(1)
    mu1 = np.where(high, x, 0.0).sum(1) / n_hi
    mu2 = np.where(low, x, 0.0).sum(1) / n_lo
    v1 = np.where(high, (x - mu1[:, None]) ** 2, 0.0).sum(1) / n_hi
    v2 = np.where(low, (x - mu2[:, None]) ** 2, 0.0).sum(1) / n_lo
    m = x.shape[1]
    return (n_hi / m, mu1, mu2, np.maximum(np.sqrt(v1), floor), np.maximum(np.sqrt(v2), floor))


def _random_init(x, rngs, floor):
    b = x.shape[0]
    lo_q = np.array([r.uniform(0.05, 0.5) for r in rngs])
    hi_q = np.array([r.uniform(0.5, 0.95) for r in rngs])
    xs = np.sort(x, axis=1)
    m = x.shape[1]
    mu1 = xs[np.arange(b), np.minimum((hi_q * (m - 1)).round().astype(int), m - 1)]
    mu2 = xs[np.arange(b), (lo_q * (m - 1)).round().astype(int)]
    spread = np.maximum(0.5 * x.std(axis=1), floor)
    return (np.full(b, 0.5), mu1, mu2, spread.copy(), spread.copy())


def _quadratic(pi, mu, sigma):
    """Coefficients of log(pi * N(x | mu, sigma^2)) as a polynomial in x."""
    inv = 1.0 / (sigma * sigma)
    return (-0.5 * inv, mu * inv,
            np.log(pi) - np.log(sigma) - 0.5 * LOG_2PI - 0.5 * mu * mu * inv)


_CHUNK = 1 << 16   # elements per E-step block; keeps temporaries cache-resident


def _e_step(x, x2, alpha, beta, gamma):
    """Sufficient statistics of one E-step, per row.

    ``d = alpha x^2 + beta x + gamma`` is the log-odds of component 2 over
    component 1. Returns ``(sum r, sum r x, sum r x^2, sum softplus(d))``
    where ``r = P(component 1 | x) = 1 / (1 + exp(d))``. ``d`` is clipped to
    [-40, 40] before exponentiating (error below 1e-17), which also keeps
    ``exp`` out of the slow overflow/subnormal range.
    """
    b, m = x.shape
    n1 = np.empty(b)
    sx = np.empty(b)
    sx2 = np.empty(b)
    sp = np.empty(b)
    step = max(1, _CHUNK // m)
    d = np.empty((min(step, b), m))
    t = np.empty_like(d)
    for lo in range(0, b, step):
        hi = min(lo + step, b)
        xc = x[lo:hi]
        dc = d[: hi - lo]
        tc = t[: hi - lo]
        np.multiply(xc, alpha[lo:hi, None], out=dc)
        dc += beta[lo:hi, None]
        dc *= xc
        dc += gamma[lo:hi, None]
        # softplus(d) = log(1 + exp(clip(d))) + max(d - 40, 0)
        sp[lo:hi] = np.maximum(dc, 40.0, out=tc).sum(1) - 40.0 * m
        np.clip(dc, -40.0, 40.0, out=dc)
        np.exp(dc, out=dc)
        dc += 1.0
        sp[lo:hi] += np.log(dc, out=tc).sum(1)
        np.reciprocal(dc, out=dc)
        n1[lo:hi] = dc.sum(1)
        sx[lo:hi] = np.einsum("ij,ij->i", dc, xc)
        sx2[lo:hi] = np.einsum("ij,ij->i", dc, x2[lo:hi])
    return n1, sx, sx2, sp


def _em_step(x, x2, sum_x, sum_x2, params, floor2):
    """One EM map for a block of rows: log-likelihood at ``params`` and the
    updated parameters. ``params`` is a (5, rows) array (pi1, mu1, mu2, s1, s2)."""
    m = x.shape[1]
    pi1, mu1, mu2, s1, s2 = params
    A1, B1, C1 = _quadratic(pi1, mu1, s1)
    A2, B2, C2 = _quadratic(1.0 - pi1, mu2, s2)
    n1, s_x1, s_x21, softplus = _e_step(x, x2, A2 - A1, B2 - B1, C2 - C1)
    ll = A1 * sum_x2 + B1 * sum_x + m * C1 + softplus
    n1 = np.clip(n1, 1e-12, m - 1e-12)
    n2 = m - n1
    m1 = s_x1 / n1
    m2 = (sum_x - s_x1) / n2
    v1 = s_x21 / n1 - m1 * m1
    v2 = (sum_x2 - s_x21) / n2 - m2 * m2
    new = np.array([np.clip(n1 / m, 1e-12, 1.0 - 1e-12), m1, m2,
                    np.sqrt(np.maximum(v1, floor2)), np.sqrt(np.maximum(v2, floor2))])
    return ll, new


def _to_free(p):
    pi = p[0]
    return np.array([np.log(pi) - np.log1p(-pi), p[1], p[2], np.log(p[3]), np.log(p[4])])


def _from_free(t, floor):
    pi = np.clip(1.0 / (1.0 + np.exp(-np.clip(t[0], -700, 700))), 1e-12, 1.0 - 1e-12)
    s1 = np.maximum(np.exp(np.minimum(t[3], 700)), floor)
    s2 = np.maximum(np.exp(np.minimum(t[4], 700)), floor)
    return np.array([pi, t[1], t[2], s1, s2])


def _run_em(x, x2, params, settings, keep_trace=False):
    """Batched, SQUAREM-accelerated EM over the rows of ``x``.

    Each cycle takes two plain EM steps from ``p0``, extrapolates along
    the step-length scheme of Varadhan & Roland (2008) in an unconstrained
    parametrization, and applies one EM step to the extrapolated point. If
    that point scores below the second plain step's start, the plain step
    is kept instead, so the accepted log-likelihoods never decrease. Every
    EM map counts as one iteration toward ``settings.max_iter``.
    """
    b, m = x.shape
    floor = settings.sigma_floor
    floor2 = floor * floor
    P = np.array(params, dtype=np.float64)
    sum_x = x.sum(1)
    sum_x2 = x2.sum(1)
    ll = np.full(b, -np.inf)
    prev = np.full(b, np.nan)
    converged = np.zeros(b, dtype=bool)
    iterations = np.zeros(b, dtype=int)
    traces = [[] for _ in range(b)] if keep_trace else None
    final = np.zeros(b, dtype=bool)

    cache = {}

    def block(rows):
        if len(rows) == b:
            return x, x2, sum_x, sum_x2
        if not np.array_equal(cache.get("rows"), rows):
            cache["rows"] = rows
            cache["v"] = (x[rows], x2[rows], sum_x[rows], sum_x2[rows])
        return cache["v"]

    def record(rows, values):
        if keep_trace:
            for r, v in zip(rows, values):
                traces[r].append(float(v))

    def finish(rows, p, values, conv):
        P[:, rows] = p
        ll[rows] = values
        converged[rows] = conv
        final[rows] = True

    W = np.arange(b)
    while True:
        W = np.flatnonzero(~final)
        if not len(W):
            break
        P0 = P[:, W]
        ll0, P1 = _em_step(*block(W), P0, floor2)
        record(W, ll0)
        # converged against the previous accepted point, or out of budget
        conv = np.abs(ll0 - prev[W]) / m < settings.tol
        out = conv | (iterations[W] >= settings.max_iter)
        if out.any():
            finish(W[out], P0[:, out], ll0[out], conv[out])
            keep = ~out
            W, P0, P1, ll0 = W[keep], P0[:, keep], P1[:, keep], ll0[keep]
            if not len(W):
                break
        iterations[W] += 1

        ll1, P2 = _em_step(*block(W), P1, floor2)
        record(W, ll1)
        conv = np.abs(ll1 - ll0) / m < settings.tol
        out = conv | (iterations[W] >= settings.max_iter)
        if out.any():
            finish(W[out], P1[:, out], ll1[out], conv[out])
            keep = ~out
            W, P0, P1, P2, ll1 = W[keep], P0[:, keep], P1[:, keep], P2[:, keep], ll1[keep]
            if not len(W):
                break
        iterations[W] += 1

        spent = iterations[W] >= settings.max_iter
        if spent.any():
            # no budget left for the stabilizing step; the loop head scores P2
            P[:, W[spent]] = P2[:, spent]
            prev[W[spent]] = ll1[spent]
            keep = ~spent
            W, P0, P1, P2, ll1 = W[keep], P0[:, keep], P1[:, keep], P2[:, keep], ll1[keep]
            if not len(W):
                continue
        t0, t1, t2 = _to_free(P0), _to_free(P1), _to_free(P2)
        r = t1 - t0
        v = t2 - t1 - r
        rn = np.sqrt((r * r).sum(0))
        vn = np.sqrt((v * v).sum(0))
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(vn > 0, -rn / vn, -1.0)
        alpha = np.minimum(alpha, -1.0)
        Pe = _from_free(t0 - 2.0 * alpha * r + alpha * alpha * v, floor)
        lle, P3 = _em_step(*block(W), Pe, floor2)
        iterations[W] += 1
        accept = np.isfinite(lle) & (lle >= ll1)
        P[:, W] = np.where(accept, P3, P2)
        prev[W] = np.where(accept, lle, ll1)
    return tuple(P), ll, converged, iterations, traces


def fit_gmm_batch(values, settings: EMSettings = EMSettings(), seeds=None):
    """Fit one mixture per row of ``values`` (shape ``(b, m)``).

    Rows with fewer than ``settings.min_samples`` values raise; rows whose
    values are all identical (within 1e-9) yield ``None``. ``seeds`` gives
    one integer seed (or seed sequence entropy) per row for the restart.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("values must be 2-D")
    b, m = x.shape
    if m < settings.min_samples:
        raise InsufficientSamplesError(f"need >= {settings.min_samples} samples, got {m}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    out = [None] * b
    ok = np.flatnonzero(np.ptp(x, axis=1) > 1e-9)
    if len(ok) == 0:
        return out
    xo = x[ok]
    x2 = xo * xo
    keep_trace = b == 1
    params, ll, conv, iters, traces = _run_em(
        xo, x2, _median_split_init(xo, settings.sigma_floor), settings, keep_trace)
    if settings.restart:
        if seeds is None:
            seeds = [0] * b
        rngs = [np.random.default_rng(seeds[i]) for i in ok]
        r_params, r_ll, r_conv, r_iters, r_traces = _run_em(
            xo, x2, _random_init(xo, rngs, settings.sigma_floor), settings, keep_trace)
        better = r_ll > ll + 1e-12
        params = tuple(np.where(better, rp, p) for rp, p in zip(r_params, params))
        ll = np.where(better, r_ll, ll)
        conv = np.where(better, r_conv, conv)
        iters = np.where(better, r_iters, iters)
        if keep_trace and better[0]:
            traces = r_traces
    pi1, mu1, mu2, s1, s2 = params
    for k, row in enumerate(ok):
        out[row] = _canonical(pi1[k], mu1[k], mu2[k], s1[k], s2[k], ll[k], conv[k], iters[k],
                              tuple(traces[k]) if keep_trace else ())
    return out


def _canonical(pi1, mu1, mu2, s1, s2, ll, conv, iters, trace):
    if mu1 < mu2:
        pi1, mu1, mu2, s1, s2 = 1.0 - pi1, mu2, mu1, s2, s1
    return Gmm2(pi1=float(pi1), pi2=float(1.0 - pi1), mu1=float(mu1), mu2=float(mu2),
                sigma1=float(s1), sigma2=float(s2), log_likelihood=float(ll),
                converged=bool(conv), iterations=int(iters), ll_trace=trace)


def fit_gmm_1d(values, settings: EMSettings = EMSettings(), seed: int = 0) -> Gmm2:
    """Fit a two-component mixture to a 1-D sample.

    Raises ``InsufficientSamplesError`` below ``settings.min_samples`` values
    and ``DegenerateFitError`` when every value is the same.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < settings.min_samples:
        raise InsufficientSamplesError(f"need >= {settings.min_samples} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    if np.ptp(x) <= 1e-9:
        raise DegenerateFitError("all values identical; no two-mode structure")
    (g,) = fit_gmm_batch(x[None, :], settings, seeds=[seed])
    return g


def component_log_posteriors(g: Gmm2, x):
    """log P(component 1 | x) and log P(component 2 | x)."""
    x = np.asarray(x, dtype=np.float64)
    a1 = _log_weighted(x, g.pi1, g.mu1, g.sigma1)
    a2 = _log_weighted(x, g.pi2, g.mu2, g.sigma2)
    lse = np.logaddexp(a1, a2)
    return a1 - lse, a2 - lse


def membership_probability(g: Gmm2, x):
    """Posterior probability that ``x`` belongs to the high-mean component."""
    lp1, _ = component_log_posteriors(g, x)
    p = np.exp(lp1)
    return float(p) if np.ndim(p) == 0 else p


def assign_components(g: Gmm2, values) -> ComponentAssignment:
    p = np.atleast_1d(membership_probability(g, np.asarray(values, dtype=np.float64)))
    labels = np.where(p >= 0.5, 1, 2)
    n1 = int((labels == 1).sum())
    return ComponentAssignment(labels=labels, concept_count=n1, nonconcept_count=len(labels) - n1)
