"""Automatic threshold selection over score histograms.

Seven selection algorithms plus the fixed-threshold baseline. The histogram
methods share one split convention: split index t puts bins [0, t] in the
low class and bins [t+1, 255] in the high class, and the returned threshold
is the upper edge of bin t. Splits whose objectives agree within a 1e-9
relative tolerance count as tied, and ties always break toward the lowest
split so a flat optimum flags the fewest images; the tolerance keeps exact
mathematical ties (mirror-symmetric classes, empty-bin plateaus) from being
decided by floating-point noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, polygamma, psi

from .errors import EmptyScores, ZeroVarianceClass

FIXED = "FIXED"
OTSU = "OTSU"
MET = "MET"
LI = "LI"
MAX_ENTROPY = "MAX_ENTROPY"
GHT = "GHT"
MVE = "MVE"
GMM = "GMM"

METHODS = (FIXED, OTSU, MET, LI, MAX_ENTROPY, GHT, MVE, GMM)

N_BINS = 256

# Defaults calibrated once against the fixed-threshold behavior of the
# baseline tooling and frozen; all are overridable through the audit config.
FIXED_DEFAULTS = {
    "LIGHT": 0.05,
    "DARK": 0.32,
    "BLURRY": 0.3,
    "LOW_INFORMATION": 0.10,
    "ODD_SIZE": 0.5,
    "ODD_ASPECT_RATIO": 0.35,
}

_CLIP = 1e-30


@dataclass
class Histogram256:
    """256 equal-width bins over [lo, hi); the last bin is closed."""

    counts: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_BINS,):
            raise ValueError("histogram must have exactly 256 bins")
        if (self.counts < 0).any():
            raise ValueError("histogram counts must be nonnegative")
        if not self.hi > self.lo:
            raise ValueError("hi must exceed lo")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / N_BINS

    def bin_centers(self) -> np.ndarray:
        return self.lo + (np.arange(N_BINS) + 0.5) * self.bin_width

    def upper_edge(self, bin_index: int) -> float:
        return self.lo + (bin_index + 1) * self.bin_width

    def lower_edge(self, bin_index: int) -> float:
        return self.lo + bin_index * self.bin_width


@dataclass
class ThresholdDecision:
    method: str
    threshold: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class GhtParams:
    """Hyperparameters of generalized histogram thresholding.

    nu/tau set the strength and location of the conjugate prior on class
    variances, kappa/omega the concentration and mode of the prior on the
    mixture weight. All zeros with omega 0.5 matches the reference
    implementation's defaults.
    """

    nu: float = 0.0
    tau: float = 0.0
    kappa: float = 0.0
    omega: float = 0.5

    def __post_init__(self):
        if self.nu < 0 or self.tau < 0 or self.kappa < 0:
            raise ValueError("nu, tau, kappa must be nonnegative")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")


@dataclass
class GammaMixtureFit:
    weight: float
    shape1: float
    scale1: float
    shape2: float
    scale2: float
    log_likelihood: float
    iterations: int

    @property
    def mean1(self) -> float:
        return self.shape1 * self.scale1

    @property
    def mean2(self) -> float:
        return self.shape2 * self.scale2


def build_score_histogram(scores) -> Histogram256:
    """Bin scores in [0, 1] into 256 equal-width bins; 1.0 lands in bin 255."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        raise EmptyScores("no scores to bin")
    if scores.min() < 0.0 or scores.max() > 1.0:
        raise ValueError("scores must lie in [0, 1]")
    bins = np.minimum((scores * N_BINS).astype(np.intp), N_BINS - 1)
    counts = np.bincount(bins, minlength=N_BINS)
    return Histogram256(counts=counts, lo=0.0, hi=1.0)


TIE_EPS = 1e-9


def select_split(objective: np.ndarray, maximize: bool = True) -> int:
    """Lowest split among those within TIE_EPS (relative) of the optimum.

    Invalid splits must be -inf (maximize) or +inf (minimize) in `objective`.
    """
    if maximize:
        best = float(np.max(objective))
        band = best - TIE_EPS * max(1.0, abs(best))
        return int(np.flatnonzero(objective >= band)[0])
    best = float(np.min(objective))
    band = best + TIE_EPS * max(1.0, abs(best))
    return int(np.flatnonzero(objective <= band)[0])


def _degenerate(hist: Histogram256, method: str) -> ThresholdDecision:
    """Fallback when fewer than two bins carry mass: a fixed threshold at the
    lower edge of the populated bin, which flags nothing."""
    nonzero = np.flatnonzero(hist.counts)
    edge = hist.lower_edge(int(nonzero[0])) if nonzero.size else hist.lo
    return ThresholdDecision(
        method=FIXED,
        threshold=float(edge),
        diagnostics={"warning": f"{method}: degenerate histogram", "requested": method},
    )


def _split_stats(hist: Histogram256):
    """Cumulative class mass / mean / scatter for every split t in [0, 254].

    Returns (w0, w1, s0, s1, d0, d1) where w are class masses, s the class
    sums of n*x, and d the within-class scatter sums n*(x-mu)^2.
    """
    n = hist.counts.astype(np.float64)
    x = hist.bin_centers()
    w0 = np.cumsum(n)[:-1]
    w1 = n.sum() - w0
    s0 = np.cumsum(n * x)[:-1]
    s1 = (n * x).sum() - s0
    q0 = np.cumsum(n * x * x)[:-1]
    q1 = (n * x * x).sum() - q0
    with np.errstate(divide="ignore", invalid="ignore"):
        d0 = q0 - np.where(w0 > 0, s0 * s0 / w0, 0.0)
        d1 = q1 - np.where(w1 > 0, s1 * s1 / w1, 0.0)
    return w0, w1, s0, s1, d0, d1


def threshold_otsu(hist: Histogram256) -> ThresholdDecision:
    """Maximize the inter-class variance w0*w1*(mu0-mu1)^2 over all splits."""
    if np.count_nonzero(hist.counts) < 2:
        return _degenerate(hist, OTSU)
    w0, w1, s0, s1, _, _ = _split_stats(hist)
    total = hist.counts.sum()
    valid = (w0 > 0) & (w1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / w0
        mu1 = s1 / w1
        objective = (w0 / total) * (w1 / total) * (mu0 - mu1) ** 2
    objective[~valid] = -np.inf
    t = select_split(objective, maximize=True)
    return ThresholdDecision(
        method=OTSU,
        threshold=float(hist.upper_edge(t)),
        diagnostics={"split": t, "objective": float(objective[t])},
    )


def threshold_met(hist: Histogram256) -> ThresholdDecision:
    """Kittler-Illingworth minimum-error threshold.

    Minimizes J(T) = 1 + 2*(P0*ln(s0) + P1*ln(s1)) - 2*(P0*ln(P0) + P1*ln(P1))
    over splits where both classes carry mass and have nonzero variance.
    Raises ZeroVarianceClass when no such split exists.
    """
    w0, w1, _, _, d0, d1 = _split_stats(hist)
    total = hist.counts.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        v0 = d0 / w0
        v1 = d1 / w1
    valid = (w0 > 0) & (w1 > 0) & (v0 > 0) & (v1 > 0)
    if not valid.any():
        raise ZeroVarianceClass(
            "minimum-error thresholding undefined: every split leaves a class "
            "with zero variance"
        )
    p0 = w0 / total
    p1 = w1 / total
    with np.errstate(divide="ignore", invalid="ignore"):
        objective = (
            1.0
            + 2.0 * (p0 * np.log(np.sqrt(v0)) + p1 * np.log(np.sqrt(v1)))
            - 2.0 * (p0 * np.log(p0) + p1 * np.log(p1))
        )
    objective[~valid] = np.inf
    t = select_split(objective, maximize=False)
    return ThresholdDecision(
        method=MET,
        threshold=float(hist.upper_edge(t)),
        diagnostics={"split": t, "objective": float(objective[t])},
    )


def threshold_li(hist: Histogram256, max_iter: int = 100) -> ThresholdDecision:
    """Li's minimum cross-entropy threshold via its fixed-point iteration.

    Iterates t <- (mu_below - mu_above) / (ln mu_below - ln mu_above) on bin
    centers (shifted positive if necessary), starting at the global mean,
    until the update moves less than half a bin width.
    """
    if np.count_nonzero(hist.counts) < 2:
        return _degenerate(hist, LI)
    n = hist.counts.astype(np.float64)
    x = hist.bin_centers()
    shift = 0.0
    if x[0] <= 0:
        shift = hist.bin_width / 2.0 - x[0]
        x = x + shift
    tol = 0.5 * hist.bin_width
    t = float((n * x).sum() / n.sum())
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        below = x <= t
        w_below = n[below].sum()
        w_above = n[~below].sum()
        if w_below == 0 or w_above == 0:
            converged = True
            break
        mu_below = (n[below] * x[below]).sum() / w_below
        mu_above = (n[~below] * x[~below]).sum() / w_above
        log_ratio = math.log(mu_below) - math.log(mu_above)
        t_next = mu_below if log_ratio == 0 else (mu_below - mu_above) / log_ratio
        done = abs(t_next - t) < tol
        t = t_next
        if done:
            converged = True
            break
    threshold = min(max(t - shift, hist.lo), hist.hi)
    return ThresholdDecision(
        method=LI,
        threshold=float(threshold),
        diagnostics={"iterations": iterations, "converged": converged},
    )


def threshold_max_entropy(hist: Histogram256) -> ThresholdDecision:
    """Kapur's criterion: maximize the summed entropies of both classes."""
    if np.count_nonzero(hist.counts) < 2:
        return _degenerate(hist, MAX_ENTROPY)
    total = hist.counts.sum()
    # class masses from integer cumsums: a float tail residue must not make
    # an empty class look occupied
    n0 = np.cumsum(hist.counts)[:-1]
    valid = (n0 > 0) & (n0 < total)
    p = hist.counts.astype(np.float64) / total
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    c0 = np.cumsum(plogp)[:-1]
    c1 = plogp.sum() - c0
    w0 = n0 / total
    w1 = (total - n0) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.log(w0) - c0 / w0
        h1 = np.log(w1) - c1 / w1
        objective = h0 + h1
    objective[~valid] = -np.inf
    t = select_split(objective, maximize=True)
    return ThresholdDecision(
        method=MAX_ENTROPY,
        threshold=float(hist.upper_edge(t)),
        diagnostics={"split": t, "objective": float(objective[t])},
    )


def _ght_objective(hist: Histogram256, params: GhtParams) -> np.ndarray:
    """GHT posterior criterion at every split."""
    n = hist.counts.astype(np.float64)
    x = hist.bin_centers()
    clip = lambda z: np.maximum(_CLIP, z)
    w0 = clip(np.cumsum(n)[:-1])
    w1 = clip(n.sum() - np.cumsum(n)[:-1])
    p0 = w0 / (w0 + w1)
    p1 = w1 / (w0 + w1)
    mu0 = np.cumsum(n * x)[:-1] / w0
    mu1 = ((n * x).sum() - np.cumsum(n * x)[:-1]) / w1
    d0 = np.cumsum(n * x * x)[:-1] - w0 * mu0 * mu0
    d1 = ((n * x * x).sum() - np.cumsum(n * x * x)[:-1]) - w1 * mu1 * mu1
    if math.isinf(params.nu):
        v0 = clip(np.full_like(d0, params.tau**2))
        v1 = clip(np.full_like(d1, params.tau**2))
    else:
        v0 = clip((p0 * params.nu * params.tau**2 + d0) / (p0 * params.nu + w0))
        v1 = clip((p1 * params.nu * params.tau**2 + d1) / (p1 * params.nu + w1))
    f0 = -d0 / v0 - w0 * np.log(v0) + 2.0 * (w0 + params.kappa * params.omega) * np.log(w0)
    f1 = (
        -d1 / v1
        - w1 * np.log(v1)
        + 2.0 * (w1 + params.kappa * (1.0 - params.omega)) * np.log(w1)
    )
    return f0 + f1


def threshold_ght(hist: Histogram256, params: GhtParams | None = None) -> ThresholdDecision:
    """Generalized histogram thresholding (Otsu/MET unifier).

    The conjugate-prior regularization keeps every split well defined, so
    this never raises on degenerate histograms.
    """
    params = params or GhtParams()
    objective = _ght_objective(hist, params)
    t = select_split(objective, maximize=True)
    return ThresholdDecision(
        method=GHT,
        threshold=float(hist.upper_edge(t)),
        diagnostics={"split": t, "objective": float(objective[t])},
    )


def _smoothed_frequency(hist: Histogram256, window: int) -> np.ndarray:
    """Relative frequency averaged over a centered window, truncated at the
    histogram edges."""
    p = hist.counts.astype(np.float64) / hist.counts.sum()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(p)])
    idx = np.arange(N_BINS)
    lo = np.maximum(0, idx - half)
    hi = np.minimum(N_BINS - 1, idx + half)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def threshold_mve(hist: Histogram256, window: int = 5) -> ThresholdDecision:
    """Modified valley emphasis: Otsu's between-class term weighted by
    1 minus the smoothed relative frequency at the split bin."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd bin count")
    if np.count_nonzero(hist.counts) < 2:
        return _degenerate(hist, MVE)
    w0, w1, s0, s1, _, _ = _split_stats(hist)
    total = hist.counts.sum()
    valid = (w0 > 0) & (w1 > 0)
    weight = 1.0 - _smoothed_frequency(hist, window)[: N_BINS - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / w0
        mu1 = s1 / w1
        objective = weight * ((w0 / total) * mu0 * mu0 + (w1 / total) * mu1 * mu1)
    objective[~valid] = -np.inf
    t = select_split(objective, maximize=True)
    return ThresholdDecision(
        method=MVE,
        threshold=float(hist.upper_edge(t)),
        diagnostics={"split": t, "objective": float(objective[t]), "window": window},
    )


def _fit_gamma_shape(s: float, k_init: float) -> float:
    """Solve ln(k) - psi(k) = s by Newton iteration."""
    k = max(k_init, 1e-8)
    for _ in range(60):
        f = math.log(k) - psi(k) - s
        fprime = 1.0 / k - polygamma(1, k)
        step = f / fprime
        k_new = k - step
        while k_new <= 0:
            step /= 2.0
            k_new = k - step
        if abs(k_new - k) < 1e-12 * max(1.0, k):
            return k_new
        k = k_new
    return k


def _gamma_logpdf(x: np.ndarray, shape: float, scale: float) -> np.ndarray:
    return (
        (shape - 1.0) * np.log(x)
        - x / scale
        - shape * math.log(scale)
        - gammaln(shape)
    )


def _moment_params(x: np.ndarray):
    m = float(x.mean())
    v = float(x.var())
    if v < 1e-12:
        return None
    return m * m / v, v / m


def threshold_gmm(scores, max_iter: int = 500, tol: float = 1e-8):
    """Fit a two-component gamma mixture by EM and threshold at the pdf
    crossing between the component means.

    Returns (ThresholdDecision, GammaMixtureFit). When a component collapses
    the decision falls back to Otsu on the binned scores and carries a
    "fallback" diagnostic.
    """
    raw = np.asarray(list(scores), dtype=np.float64)
    if raw.size < 8:
        raise ValueError("gamma mixture fitting needs at least 8 scores")
    if raw.min() < 0.0:
        raise ValueError("scores must be nonnegative")
    x = raw.copy()
    x[x == 0.0] = 1.0 / (2 * N_BINS)
    logx = np.log(x)

    def fallback(fit, reason):
        decision = threshold_otsu(build_score_histogram(np.clip(raw, 0.0, 1.0)))
        decision.method = GMM
        decision.diagnostics["fallback"] = OTSU
        decision.diagnostics["warning"] = reason
        return decision, fit

    # Initialize from the two halves around the median.
    order = np.argsort(x, kind="stable")
    half = x.size // 2
    low, high = x[order[:half]], x[order[half:]]
    init_low, init_high = _moment_params(low), _moment_params(high)
    weight = half / x.size
    empty_fit = GammaMixtureFit(weight, 0.0, 0.0, 0.0, 0.0, float("nan"), 0)
    if init_low is None or init_high is None:
        return fallback(empty_fit, "degenerate fit: zero-variance initial component")
    shapes = np.array([init_low[0], init_high[0]])
    scales = np.array([init_low[1], init_high[1]])
    weights = np.array([weight, 1.0 - weight])

    ll_prev = -np.inf
    ll_trace = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        log_joint = np.stack(
            [
                math.log(weights[j]) + _gamma_logpdf(x, shapes[j], scales[j])
                for j in range(2)
            ]
        )
        log_norm = np.logaddexp(log_joint[0], log_joint[1])
        ll = float(log_norm.sum())
        ll_trace.append(ll)
        resp = np.exp(log_joint - log_norm)
        if ll - ll_prev < tol and iterations > 1:
            break
        ll_prev = ll
        for j in range(2):
            w = resp[j].sum()
            if w < 1e-12:
                fit = GammaMixtureFit(
                    float(weights[0]), float(shapes[0]), float(scales[0]),
                    float(shapes[1]), float(scales[1]), ll, iterations,
                )
                return fallback(fit, "degenerate fit: vanished component weight")
            xbar = float((resp[j] * x).sum() / w)
            logbar = float((resp[j] * logx).sum() / w)
            s = math.log(xbar) - logbar
            if s <= 0:
                fit = GammaMixtureFit(
                    float(weights[0]), float(shapes[0]), float(scales[0]),
                    float(shapes[1]), float(scales[1]), ll, iterations,
                )
                return fallback(fit, "degenerate fit: zero-variance component")
            k0 = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
            shapes[j] = _fit_gamma_shape(s, k0)
            scales[j] = xbar / shapes[j]
            weights[j] = w / x.size
    converged = iterations < max_iter

    # Order so component 1 has the smaller mean.
    if shapes[0] * scales[0] > shapes[1] * scales[1]:
        shapes, scales = shapes[::-1].copy(), scales[::-1].copy()
        weights = weights[::-1].copy()
    fit = GammaMixtureFit(
        weight=float(weights[0]),
        shape1=float(shapes[0]),
        scale1=float(scales[0]),
        shape2=float(shapes[1]),
        scale2=float(scales[1]),
        log_likelihood=float(ll_trace[-1]),
        iterations=iterations,
    )
    if fit.shape1 * fit.scale1**2 < 1e-12 or fit.shape2 * fit.scale2**2 < 1e-12:
        return fallback(fit, "degenerate fit: collapsed component variance")

    diagnostics = {
        "iterations": iterations,
        "converged": converged,
        "log_likelihood": fit.log_likelihood,
        "ll_trace": ll_trace,
    }
    threshold = _gamma_crossing(fit)
    if threshold is None:
        threshold = 0.5 * (fit.mean1 + fit.mean2)
        diagnostics["no_crossing"] = True
    threshold = min(max(float(threshold), 0.0), 1.0)
    return ThresholdDecision(method=GMM, threshold=threshold, diagnostics=diagnostics), fit


def _gamma_crossing(fit: GammaMixtureFit):
    """Smallest point in [mean1, mean2] where the weighted component pdfs
    cross, located by bisection; None when no sign change exists."""
    lo, hi = fit.mean1, fit.mean2
    if not hi > lo:
        return None

    def diff(v):
        v = np.asarray(v, dtype=np.float64)
        return (
            math.log(fit.weight)
            + _gamma_logpdf(v, fit.shape1, fit.scale1)
            - math.log(1.0 - fit.weight)
            - _gamma_logpdf(v, fit.shape2, fit.scale2)
        )

    grid = np.linspace(lo, hi, 513)
    values = diff(grid)
    signs = np.sign(values)
    change = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    exact = np.flatnonzero(signs == 0)
    if exact.size and (not change.size or exact[0] <= change[0]):
        return float(grid[exact[0]])
    if not change.size:
        return None
    a, b = float(grid[change[0]]), float(grid[change[0] + 1])
    fa = float(diff(a))
    for _ in range(80):
        mid = 0.5 * (a + b)
        fm = float(diff(mid))
        if fm == 0.0:
            return mid
        if (fa > 0) == (fm > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def flag_by_threshold(scores: dict, decision: ThresholdDecision, kind: str) -> set:
    """Ids whose score falls strictly below the decided threshold."""
    if kind in ("GRAYSCALE", "EXACT_DUPLICATE", "NEAR_DUPLICATE"):
        raise ValueError(f"{kind} is not a thresholded issue kind")
    return {i for i, s in scores.items() if s < decision.threshold}


def fixed_threshold_baseline(kind: str, override: float | None = None) -> ThresholdDecision:
    """The hard-coded per-kind default threshold, or a user override."""
    if override is not None:
        return ThresholdDecision(method=FIXED, threshold=float(override),
                                 diagnostics={"source": "override"})
    if kind not in FIXED_DEFAULTS:
        raise ValueError(f"no fixed threshold default for kind {kind!r}")
    return ThresholdDecision(method=FIXED, threshold=FIXED_DEFAULTS[kind],
                             diagnostics={"source": "default"})
