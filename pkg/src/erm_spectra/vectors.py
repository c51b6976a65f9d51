"""Eigenvector (de)localization diagnostics.

Participation ratios, Porter-Thomas amplitude statistics, eigenvector
moments, and the size scaling of inverse moments that yields fractal
dimensions.  Delocalized vectors behave like points uniform on the unit
sphere: scaled components u = sqrt(N) Psi_j are standard normal, the
participation ratio approaches N/3, and M_q -> (2q-1)!!/N^{q-1}.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kstest, linregress

from .cloud import sample_cloud
from .matrix import build_decay_matrix
from .spectra import SpectrumResult, Histogram, eigendecompose, histogram_from_values

PR_SMOOTH_WINDOW = 51
PR_PEAK_VECTORS = 100


def participation_ratio(v) -> float:
    """1 / sum_j |Psi_j|^4 for a normalized vector: 1 = localized, N = uniform."""
    v = np.asarray(v, dtype=np.float64).ravel()
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"vector must be normalized, |v| = {norm}")
    return float(1.0 / np.sum(v ** 4))


def _normalized_columns(vectors):
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("expected a 2D array of column vectors")
    norms = np.linalg.norm(v, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero vector cannot be normalized")
    return v / norms


def pr_profile(spec: SpectrumResult):
    """Participation ratio of every eigenvector, in eigenvalue order.

    Returns (eigenvalues, ratios).  Vectors are renormalized exactly before
    the statistic is taken.
    """
    if spec.eigenvectors is None:
        raise ValueError("spectrum was computed without eigenvectors")
    v = _normalized_columns(spec.eigenvectors)
    ratios = 1.0 / np.sum(v ** 4, axis=0)
    return spec.eigenvalues.copy(), ratios


def smoothed_profile(values, window=PR_SMOOTH_WINDOW):
    """Centered moving average; entries too close to the edges are NaN."""
    values = np.asarray(values, dtype=np.float64)
    if window % 2 == 0 or window < 1:
        raise ValueError("smoothing window must be odd and positive")
    half = window // 2
    out = np.full(values.size, np.nan)
    if values.size >= window:
        kernel = np.ones(window) / window
        out[half:values.size - half] = np.convolve(values, kernel, mode="valid")
    return out


def pr_peak_indices(spec: SpectrumResult, side, smooth_window=PR_SMOOTH_WINDOW,
                    n_vectors=PR_PEAK_VECTORS):
    """Indices of the eigenvectors around a maximum of the smoothed PR profile.

    side "sub" looks for the maximum among eigenvalues below 1, "super"
    above 1; the n_vectors indices nearest the peak (by rank) are returned.
    """
    if side not in ("sub", "super"):
        raise ValueError(f"side must be 'sub' or 'super', got {side!r}")
    evals, ratios = pr_profile(spec)
    smooth = smoothed_profile(ratios, smooth_window)
    mask = np.isfinite(smooth)
    mask &= (evals < 1.0) if side == "sub" else (evals > 1.0)
    if not mask.any():
        raise ValueError(f"no smoothed profile points on the {side} side of 1")
    candidates = np.flatnonzero(mask)
    peak = candidates[int(np.argmax(smooth[candidates]))]
    n = evals.size
    take = min(n_vectors, n)
    lo = int(np.clip(peak - take // 2, 0, n - take))
    return np.arange(lo, lo + take), peak


def bulk_indices(spec: SpectrumResult, lo_quantile=0.25, hi_quantile=0.75):
    """Rank band of the spectrum treated as 'bulk' (central half by default)."""
    n = spec.eigenvalues.size
    lo = int(lo_quantile * n)
    hi = max(int(hi_quantile * n), lo + 1)
    return np.arange(lo, hi)


def eigenvector_moment(vectors, q) -> float:
    """Mean over vectors of sum_j |Psi_j|^{2q} (M_1 = 1 by normalization)."""
    if q < 1:
        raise ValueError(f"moment order must be >= 1, got {q}")
    v = _normalized_columns(vectors)
    if v.shape[1] == 0:
        raise ValueError("window contains no vectors")
    return float(np.mean(np.sum(v ** (2 * q), axis=0)))


def porter_thomas_test(vectors, bins="fd"):
    """KS distance of pooled scaled components u = sqrt(N) Psi_j from N(0, 1).

    Returns (ks_statistic, histogram of u).
    """
    v = _normalized_columns(vectors)
    u = (np.sqrt(v.shape[0]) * v).ravel()
    if u.size < 10 ** 4:
        raise ValueError(f"need at least 1e4 pooled components, got {u.size}")
    ks = float(kstest(u, "norm").statistic)
    return ks, histogram_from_values(u, bins=bins)


def sample_sphere_vectors(n, count, seed):
    """Columns uniform on the unit (n-1)-sphere; the delocalized oracle."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    v = rng.standard_normal((n, count))
    return v / np.linalg.norm(v, axis=0)


# ---------------------------------------------------------------------------
# size scaling of inverse moments -> fractal dimensions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentScaling:
    """Scaling fit of one eigenvector moment across matrix sizes.

    inv_moments holds 1/M_q (ensemble means) per size; tau is the fitted
    log-log slope and d_q = tau/(q-1) the fractal dimension.
    """

    q: int
    sizes: tuple
    inv_moments: np.ndarray = field(repr=False)
    tau: float
    tau_stderr: float
    d_q: float
    d_q_stderr: float


_WINDOW_SELECTORS = ("superradiant-max", "subradiant-max", "bulk")


def _select_window(spec, selector):
    if selector == "superradiant-max":
        idx, _ = pr_peak_indices(spec, "super")
    elif selector == "subradiant-max":
        idx, _ = pr_peak_indices(spec, "sub")
    else:
        idx = bulk_indices(spec)
    return idx


def scaling_seed(master_seed, size_index, realization):
    """Documented seed-splitting rule for (size, realization) grid points."""
    ss = np.random.SeedSequence(int(master_seed),
                                spawn_key=(int(size_index), int(realization)))
    return int(ss.generate_state(1, np.uint64)[0])


def fractal_dimensions(selector, q_list, sizes, b0, realizations, seed,
                       n_vectors=PR_PEAK_VECTORS, vector_source=None):
    """Fit tau(q) from the growth of 1/M_q with matrix size.

    For each size, ``realizations`` independent clouds are built and the
    eigenvectors in the selected spectral window are pooled into the moment
    estimates; tau(q) is the slope of log(1/M_q) against log N and
    D_q = tau(q)/(q-1).

    vector_source, a callable (n, seed) -> (n, k) array of column vectors,
    replaces the ERM ensemble entirely; it exists so synthetic references
    (e.g. sphere-uniform vectors) can drive the same scaling fit.
    """
    if vector_source is None and selector not in _WINDOW_SELECTORS:
        raise ValueError(f"selector must be one of {_WINDOW_SELECTORS}")
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 3:
        raise ValueError("need at least 3 sizes for a scaling fit")
    if max(sizes) < 4 * min(sizes):
        raise ValueError("sizes must span at least a factor of 4")
    q_list = tuple(int(q) for q in q_list)
    if any(q < 2 for q in q_list):
        raise ValueError("fractal dimensions are defined for q >= 2")
    if realizations < 1:
        raise ValueError("need at least one realization per size")

    mean_moments = np.empty((len(q_list), len(sizes)))
    for si, n in enumerate(sizes):
        sums = np.zeros(len(q_list))
        total = 0
        for ri in range(realizations):
            member_seed = scaling_seed(seed, si, ri)
            if vector_source is not None:
                v = _normalized_columns(vector_source(n, member_seed))
            else:
                cloud = sample_cloud(n, member_seed)
                spec = eigendecompose(build_decay_matrix(cloud, b0),
                                      with_vectors=True, source_seed=cloud.seed)
                idx = _select_window(spec, selector)
                if selector in ("superradiant-max", "subradiant-max"):
                    idx = idx[: min(n_vectors, idx.size)]
                v = _normalized_columns(spec.eigenvectors[:, idx])
            for qi, q in enumerate(q_list):
                sums[qi] += np.sum(np.sum(v ** (2 * q), axis=0))
            total += v.shape[1]
        mean_moments[:, si] = sums / total

    results = []
    log_n = np.log(np.asarray(sizes, dtype=np.float64))
    for qi, q in enumerate(q_list):
        reg = linregress(log_n, np.log(1.0 / mean_moments[qi]))
        tau = float(reg.slope)
        err = float(reg.stderr)
        results.append(MomentScaling(
            q=q, sizes=sizes, inv_moments=1.0 / mean_moments[qi],
            tau=tau, tau_stderr=err,
            d_q=tau / (q - 1), d_q_stderr=err / (q - 1),
        ))
    return results
