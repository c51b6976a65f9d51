"""Eigendecomposition and macroscopic spectral statistics.

Covers the full-matrix side of the analysis: spectra of S and of its
centered rescaling Q, moments, pooled eigenvalue histograms, the triangular
small-b0 fit, and the dissipative decay-rate quadratic form.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import DataError, EigensolverError, FitError
from .matrix import CenteredMatrix, DecayMatrix


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues of one realization, with optional eigenvectors.

    Column i of eigenvectors pairs with eigenvalues[i].  centered marks
    spectra of Q (zero-mean rescaled) as opposed to S.
    """

    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray | None = field(repr=False)
    source_seed: int
    n_atoms: int
    cooperativeness: float
    centered: bool = False

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "eigenvalues", w)
        if self.eigenvectors is not None:
            v = np.asarray(self.eigenvectors, dtype=np.float64)
            v.setflags(write=False)
            object.__setattr__(self, "eigenvectors", v)


@dataclass(frozen=True)
class Histogram:
    """Fixed-edge histogram; densities integrate to 1 when normalized."""

    bin_edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    sample_count: int
    normalized: bool = True

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def widths(self):
        return np.diff(self.bin_edges)


def _fix_vector_signs(v):
    # deterministic gauge: largest-magnitude component of each column positive
    idx = np.argmax(np.abs(v), axis=0)
    flip = v[idx, np.arange(v.shape[1])] < 0
    v[:, flip] *= -1.0
    return v


def eigendecompose(mat, with_vectors=False, source_seed=0) -> SpectrumResult:
    """Full symmetric eigendecomposition of a DecayMatrix or CenteredMatrix.

    Eigenvalues come back ascending; eigenvectors (on request) are
    orthonormal columns with the sign of each fixed by its largest
    component.  Solver failures raise EigensolverError carrying the
    realization seed.
    """
    if isinstance(mat, DecayMatrix):
        centered = False
        b0 = mat.cooperativeness
    elif isinstance(mat, CenteredMatrix):
        centered = True
        b0 = mat.cooperativeness
    else:
        raise TypeError(f"expected DecayMatrix or CenteredMatrix, got {type(mat)!r}")
    a = mat.entries
    if not np.all(np.isfinite(a)):
        raise DataError("matrix contains non-finite entries")
    if not np.array_equal(a, a.T):
        raise DataError("matrix is not exactly symmetric")

    try:
        if with_vectors:
            w, v = scipy.linalg.eigh(
                a.copy(), driver="evd", check_finite=False, overwrite_a=True
            )
        else:
            w = scipy.linalg.eigh(
                a.copy(), eigvals_only=True, driver="evd",
                check_finite=False, overwrite_a=True,
            )
            v = None
    except scipy.linalg.LinAlgError as exc:
        raise EigensolverError(
            f"eigensolver failed (seed={source_seed}): {exc}", seed=source_seed
        ) from exc

    order = np.argsort(w, kind="stable")
    w = w[order]
    if v is not None:
        v = _fix_vector_signs(v[:, order])
    return SpectrumResult(
        eigenvalues=w,
        eigenvectors=v,
        source_seed=int(source_seed),
        n_atoms=mat.n_atoms,
        cooperativeness=float(b0),
        centered=centered,
    )


def spectral_moment(spec: SpectrumResult, m) -> float:
    """m-th spectral moment (1/N) sum_i lambda_i^m."""
    if m < 0:
        raise ValueError(f"moment order must be >= 0, got {m}")
    if m == 0:
        return 1.0
    return float(np.mean(spec.eigenvalues ** m))


def histogram_from_values(values, bins="fd", normalized=True) -> Histogram:
    """Histogram with Freedman-Diaconis bins by default.

    bins may be "fd", an integer bin count, a float bin width, or an
    explicit edge array.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if isinstance(bins, str) or bins is None:
        edges = np.histogram_bin_edges(values, bins=bins or "fd")
    elif isinstance(bins, (int, np.integer)):
        edges = np.histogram_bin_edges(values, bins=int(bins))
    elif isinstance(bins, (float, np.floating)):
        lo, hi = values.min(), values.max()
        nbins = max(int(math.ceil((hi - lo) / bins)), 1)
        edges = lo + bins * np.arange(nbins + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    counts, edges = np.histogram(values, bins=edges)
    widths = np.diff(edges)
    if normalized:
        dens = counts / (values.size * widths)
    else:
        dens = counts.astype(np.float64)
    return Histogram(
        bin_edges=edges,
        densities=dens,
        counts=counts,
        sample_count=values.size,
        normalized=normalized,
    )


def eigenvalue_histogram(specs, bins="fd") -> Histogram:
    """Normalized histogram of all eigenvalues pooled over an ensemble.

    Every realization must share (N, b0) and the same matrix kind; mixing
    parameters would average incomparable densities.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one spectrum")
    key = (specs[0].n_atoms, specs[0].cooperativeness, specs[0].centered)
    for s in specs[1:]:
        if (s.n_atoms, s.cooperativeness, s.centered) != key:
            raise ValueError("all spectra must share (N, b0) and matrix kind")
    pooled = np.concatenate([s.eigenvalues for s in specs])
    return histogram_from_values(pooled, bins=bins)


# ---------------------------------------------------------------------------
# triangular approximation of the small-b0 eigenvalue density
# ---------------------------------------------------------------------------

def triangular_pdf(lam, a):
    """Symmetric triangular density centered at 1 with base [1-a, 1+a]."""
    lam = np.asarray(lam, dtype=np.float64)
    out = np.maximum(a - np.abs(lam - 1.0), 0.0) / (a * a)
    return out if out.ndim else float(out)


def fit_triangular(hist: Histogram):
    """Least-squares width of the triangular density against a histogram.

    Minimizes the unweighted squared deviation between bin heights and the
    model over the bins where the model is positive.  The returned
    uncertainty is the bin width, the resolution below which the histogram
    cannot constrain a.
    """
    if not hist.normalized:
        raise FitError("triangular fit requires a normalized histogram")
    if hist.bin_edges.size < 3:
        raise FitError("histogram is degenerate (fewer than two bins)")
    centers = hist.centers
    heights = hist.densities
    width = float(np.mean(hist.widths))
    span = float(hist.bin_edges[-1] - hist.bin_edges[0])

    def sse(a):
        model = np.maximum(a - np.abs(centers - 1.0), 0.0) / (a * a)
        mask = model > 0
        if not mask.any():
            return np.inf
        d = heights[mask] - model[mask]
        return float(d @ d)

    # coarse scan to bracket the minimum, then a bounded refine
    grid = np.linspace(width, max(span, 2 * width), 400)
    values = np.array([sse(a) for a in grid])
    if not np.isfinite(values).any():
        raise FitError("triangular model has no support on this histogram")
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(sse, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    if not res.success:
        raise FitError(f"triangular fit did not converge: {res.message}")
    return float(res.x), width


def q_fourth_moment(specs) -> float:
    """Ensemble average of (1/N) sum_i mu_i^4 over centered-matrix spectra."""
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one spectrum")
    if not all(s.centered for s in specs):
        raise ValueError("fourth-moment statistic is defined on centered spectra")
    return float(np.mean([spectral_moment(s, 4) for s in specs]))


def decay_rate(beta, s: DecayMatrix) -> float:
    """Instantaneous photon-emission rate beta^dagger S beta, in units of
    the isolated-atom rate.

    S is positive semidefinite, so the form is nonnegative; round-off
    below zero is clipped.
    """
    beta = np.asarray(beta, dtype=np.complex128).ravel()
    if beta.size != s.n_atoms:
        raise ValueError(
            f"state vector has length {beta.size}, matrix expects {s.n_atoms}"
        )
    if not np.all(np.isfinite(beta)):
        raise DataError("state vector contains non-finite amplitudes")
    val = float(np.real(np.vdot(beta, s.entries @ beta)))
    return max(val, 0.0)
