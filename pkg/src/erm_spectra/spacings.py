"""Unfolding, nearest-neighbor spacings, and the Wigner-like surmise family.

The two-parameter density  p(q, r; s) = a s^q exp(-b s^r)  has its constants
fixed by unit normalization and unit mean,

    a = r Gamma((q+2)/r)^{q+1} / Gamma((q+1)/r)^{q+2},
    b = [Gamma((q+2)/r) / Gamma((q+1)/r)]^r,

and contains Poisson (q=0, r=1), Wigner-Dyson (q=1, r=2), the Brody family
(r = q+1) and the intermediate-statistics family (r = 1) as special cases.
Its CDF has the closed form  P(q, r; s) = gammainc((q+1)/r, b s^r),  used for
inverse-CDF sampling and goodness-of-fit.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize
from scipy.special import gammainc, gammaincinv, gammaln
from scipy.stats import kstest, linregress

from .errors import EmptyRangeError, FitError
from .spectra import histogram_from_values

_Q_FLOOR = -1.0 + 1e-3
_R_FLOOR = 1e-3
_FIT_STARTS = ((0.0, 1.0), (1.0, 2.0), (1.0, 1.0))


@dataclass(frozen=True)
class UnfoldedSpectrum:
    """Eigenvalues mapped through a smooth counting-function estimate.

    values are ascending with unit mean spacing over the retained window.
    """

    values: np.ndarray = field(repr=False)
    window: tuple
    method: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def unfold(eigenvalues, estimator="poly", degree=7, reference=None) -> UnfoldedSpectrum:
    """Map eigenvalues to unit mean spacing via a counting-function estimate.

    estimator "poly" fits a polynomial of the given degree to the empirical
    counting function of the input window (degree is lowered automatically
    if the fit fails to be monotone on the data).  estimator "staircase"
    evaluates the staircase of a pooled reference sample (pass the
    concatenated ensemble eigenvalues as ``reference``), i.e. the
    ensemble-averaged counting function.

    The output is affinely rescaled so the mean spacing is exactly 1.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 50:
        raise ValueError("unfolding needs at least 50 eigenvalues in the window")
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be ascending")
    n = lam.size

    if estimator == "poly":
        ranks = np.arange(n, dtype=np.float64) + 0.5
        u = None
        used_degree = None
        for deg in range(int(degree), 0, -1):
            with warnings.catch_warnings():
                # rank-deficient fits surface during the degree fallback on
                # (near-)degenerate windows; the monotonicity check below and
                # the zero-span error handle those cases
                warnings.simplefilter("ignore", np.exceptions.RankWarning)
                p = Polynomial.fit(lam, ranks, deg)
            cand = p(lam)
            if np.all(np.diff(cand) >= -1e-9):
                u = np.maximum.accumulate(cand)
                used_degree = deg
                break
        if u is None:
            raise FitError("no monotone polynomial counting function found")
        method = f"poly(degree={used_degree})"
    elif estimator == "staircase":
        if reference is None:
            raise ValueError("staircase unfolding requires a pooled reference sample")
        ref = np.sort(np.asarray(reference, dtype=np.float64))
        u = np.searchsorted(ref, lam, side="right").astype(np.float64)
        method = f"staircase(reference={ref.size})"
    else:
        raise ValueError(f"unknown unfolding estimator {estimator!r}")

    span = u[-1] - u[0]
    if span <= 0:
        raise FitError("degenerate window: counting function has zero span")
    u = (u - u[0]) * ((n - 1) / span)
    return UnfoldedSpectrum(values=u, window=(float(lam[0]), float(lam[-1])), method=method)


def spacings(u: UnfoldedSpectrum):
    """Nearest-neighbor spacings of an unfolded spectrum (length N-1)."""
    if u.values.size < 2:
        raise ValueError("need at least two unfolded eigenvalues")
    return np.diff(u.values)


# ---------------------------------------------------------------------------
# two-parameter Wigner-like surmise
# ---------------------------------------------------------------------------

def _check_domain(q, r):
    if not (q > -1.0):
        raise ValueError(f"q must exceed -1, got {q}")
    if not (r > 0.0):
        raise ValueError(f"r must be positive, got {r}")


def surmise_ab(q, r):
    """Normalization constants (a, b) for unit total mass and unit mean."""
    _check_domain(q, r)
    lg1 = gammaln((q + 1.0) / r)
    lg2 = gammaln((q + 2.0) / r)
    a = r * math.exp((q + 1.0) * lg2 - (q + 2.0) * lg1)
    b = math.exp(r * (lg2 - lg1))
    return a, b


def surmise_pdf(q, r, s):
    """Spacing density a s^q exp(-b s^r)."""
    a, b = surmise_ab(q, r)
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("spacings must be nonnegative")
    with np.errstate(divide="ignore"):
        out = a * s ** q * np.exp(-b * s ** r)
    return out if out.ndim else float(out)


def surmise_cdf(q, r, s):
    """Closed-form CDF gammainc((q+1)/r, b s^r)."""
    _, b = surmise_ab(q, r)
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("spacings must be nonnegative")
    out = gammainc((q + 1.0) / r, b * s ** r)
    return out if out.ndim else float(out)


def surmise_sample(q, r, size, seed):
    """Inverse-CDF draws from the surmise density."""
    _, b = surmise_ab(q, r)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    u = rng.random(size)
    return (gammaincinv((q + 1.0) / r, u) / b) ** (1.0 / r)


@dataclass(frozen=True)
class SurmiseFit:
    """Fitted surmise exponents with derived constants and diagnostics.

    covariance is the 2x2 matrix of (q, r); goodness is the KS distance
    between the sample and the fitted CDF.
    """

    q: float
    r: float
    a: float
    b: float
    covariance: np.ndarray = field(repr=False)
    goodness: float
    n_spacings: int
    objective: str

    @property
    def q_stderr(self):
        return float(np.sqrt(self.covariance[0, 0]))

    @property
    def r_stderr(self):
        return float(np.sqrt(self.covariance[1, 1]))


def _ls_objective(theta, centers, heights):
    q, r = theta
    if q <= _Q_FLOOR or r <= _R_FLOOR:
        return np.inf
    resid = heights - surmise_pdf(q, r, centers)
    return float(resid @ resid)


def _ml_objective(theta, sample):
    q, r = theta
    if q <= _Q_FLOOR or r <= _R_FLOOR:
        return np.inf
    a, b = surmise_ab(q, r)
    s = np.clip(sample, 1e-300, None)
    return float(-(math.log(a) + q * np.mean(np.log(s)) - b * np.mean(s ** r)))


def _finite_diff_hessian(fn, theta, h=1e-4):
    theta = np.asarray(theta, dtype=np.float64)
    k = theta.size
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h
            ej[j] = h
            f_pp = fn(theta + ei + ej)
            f_pm = fn(theta + ei - ej)
            f_mp = fn(theta - ei + ej)
            f_mm = fn(theta - ei - ej)
            hess[i, j] = hess[j, i] = (f_pp - f_pm - f_mp + f_mm) / (4 * h * h)
    return hess


def fit_surmise(sample, objective="ls", bins="fd", starts=_FIT_STARTS) -> SurmiseFit:
    """Fit (q, r) of the surmise family to a spacing sample.

    The default objective is unweighted least squares between the binned
    spacing histogram and the model density; "ml" maximizes the sample
    likelihood instead.  A Nelder-Mead search is run from every start and
    the best converged result kept.
    """
    sample = np.asarray(sample, dtype=np.float64).ravel()
    if sample.size < 300:
        raise ValueError(f"need at least 300 spacings to fit, got {sample.size}")
    if np.any(~np.isfinite(sample)) or np.any(sample < 0):
        raise ValueError("spacings must be finite and nonnegative")

    if objective == "ls":
        hist = histogram_from_values(sample, bins=bins)
        centers, heights = hist.centers, hist.densities
        fn = lambda th: _ls_objective(th, centers, heights)
    elif objective == "ml":
        fn = lambda th: _ml_objective(th, sample)
    else:
        raise ValueError(f"unknown fit objective {objective!r}")

    best = None
    diagnostics = []
    for start in starts:
        res = minimize(fn, np.asarray(start, dtype=np.float64),
                       method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000})
        diagnostics.append((start, res.success, float(res.fun)))
        if res.success and np.isfinite(res.fun):
            if best is None or res.fun < best.fun:
                best = res
    if best is None:
        raise FitError(f"surmise fit failed from all starts: {diagnostics}")

    q, r = (float(best.x[0]), float(best.x[1]))
    a, b = surmise_ab(q, r)

    if objective == "ls":
        # Gauss-Newton covariance from the residual Jacobian at the optimum
        h = 1e-5
        jac = np.empty((centers.size, 2))
        for k, dth in enumerate(((h, 0.0), (0.0, h))):
            up = surmise_pdf(q + dth[0], r + dth[1], centers)
            dn = surmise_pdf(q - dth[0], r - dth[1], centers)
            jac[:, k] = (up - dn) / (2 * h)
        dof = max(centers.size - 2, 1)
        sigma2 = best.fun / dof
        try:
            cov = sigma2 * np.linalg.inv(jac.T @ jac)
        except np.linalg.LinAlgError:
            cov = np.full((2, 2), np.nan)
    else:
        hess = _finite_diff_hessian(fn, best.x) * sample.size
        try:
            cov = np.linalg.inv(hess)
        except np.linalg.LinAlgError:
            cov = np.full((2, 2), np.nan)

    ks = float(kstest(sample, lambda s: surmise_cdf(q, r, s)).statistic)
    return SurmiseFit(
        q=q, r=r, a=a, b=b, covariance=cov, goodness=ks,
        n_spacings=int(sample.size), objective=objective,
    )


# ---------------------------------------------------------------------------
# windowed scans over the spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanWindow:
    """One rank window of a spectral scan: center, fit result, quality flag."""

    center: float
    lo_rank: int
    hi_rank: int
    fit: SurmiseFit | None
    flag: str  # "ok" | "poor_fit" | "fit_failed"


def pooled_window_spacings(specs, lo_rank, hi_rank, estimator="poly", degree=7):
    """Unfold one rank window of every realization and pool the spacings."""
    pooled = []
    for spec in specs:
        window = spec.eigenvalues[lo_rank:hi_rank]
        u = unfold(window, estimator=estimator, degree=degree)
        pooled.append(spacings(u))
    return np.concatenate(pooled)


def windowed_surmise_scan(specs, window_size=None, estimator="poly", degree=7,
                          goodness_threshold=0.08, objective="ls"):
    """Slide rank windows across the spectrum and fit the surmise per window.

    Windows advance by half their size; each window of each realization is
    unfolded independently, spacings are pooled across realizations, and one
    fit is performed per window.  Windows where the optimizer fails are
    reported with flag "fit_failed"; converged fits whose KS distance exceeds
    goodness_threshold are flagged "poor_fit".

    The default window holds 1000 eigenvalues (600 when b0 >= 10, where the
    spectrum is broad enough that larger windows mix regimes).
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one spectrum")
    n = specs[0].n_atoms
    b0 = specs[0].cooperativeness
    if any((s.n_atoms, s.cooperativeness) != (n, b0) for s in specs):
        raise ValueError("all spectra must share (N, b0)")
    if window_size is None:
        window_size = 600 if b0 >= 10 else 1000
        window_size = min(window_size, n)
    if not (2 <= window_size <= n):
        raise ValueError(f"window_size must be in [2, {n}], got {window_size}")

    step = max(window_size // 2, 1)
    starts = list(range(0, n - window_size + 1, step))
    if starts[-1] != n - window_size:
        starts.append(n - window_size)

    windows = []
    for lo in starts:
        hi = lo + window_size
        pooled_values = np.concatenate([s.eigenvalues[lo:hi] for s in specs])
        center = float(np.median(pooled_values))
        try:
            pooled = pooled_window_spacings(specs, lo, hi,
                                            estimator=estimator, degree=degree)
            fit = fit_surmise(pooled, objective=objective)
        except (FitError, ValueError):
            windows.append(ScanWindow(center=center, lo_rank=lo, hi_rank=hi,
                                      fit=None, flag="fit_failed"))
            continue
        flag = "ok" if fit.goodness <= goodness_threshold else "poor_fit"
        windows.append(ScanWindow(center=center, lo_rank=lo, hi_rank=hi,
                                  fit=fit, flag=flag))
    return windows


def small_spacing_exponent(sample, s0_grid=None):
    """Repulsion exponent q from the small-spacing cumulative law.

    Regresses log P(s <= s0) on log s0 over a decreasing grid of cutoffs;
    the slope estimates q+1.  Returns (q, stderr).
    """
    sample = np.asarray(sample, dtype=np.float64).ravel()
    if sample.size < 10 ** 4:
        raise ValueError(
            f"need at least 1e4 spacings for a stable tail estimate, got {sample.size}"
        )
    if s0_grid is None:
        s0_grid = np.geomspace(0.3, 0.05, 8)
    s0_grid = np.asarray(s0_grid, dtype=np.float64)
    if np.any(np.diff(s0_grid) >= 0):
        raise ValueError("s0_grid must be strictly decreasing")
    counts = np.array([(sample <= s0).sum() for s0 in s0_grid])
    if np.any(counts == 0):
        raise EmptyRangeError(
            f"no spacings below cutoff {s0_grid[counts == 0].max()}"
        )
    frac = counts / sample.size
    reg = linregress(np.log(s0_grid), np.log(frac))
    return float(reg.slope - 1.0), float(reg.stderr)
