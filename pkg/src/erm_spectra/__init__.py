"""Ensemble simulator and spectral-statistics toolkit for sinc-kernel
Euclidean random matrices of Gaussian atomic clouds."""

from .cloud import (
    CloudSample,
    joint_length_density,
    pairwise_distances,
    pdf_pair_distance,
    pdf_shared_vertex,
    sample_cloud,
)
from .ensemble import (
    EnsembleReport,
    ExperimentConfig,
    derive_realization_seeds,
    run_experiment,
)
from .errors import DataError, EigensolverError, EmptyRangeError, FitError
from .matrix import (
    CenteredMatrix,
    DecayMatrix,
    build_centered_matrix,
    build_decay_matrix,
    build_decay_matrix_from_modes,
    correlated_entry_moment,
    dump_decay_matrix,
    entry_moment_asymptotic_coefficient,
    entry_moment_exact,
    load_decay_matrix,
    monte_carlo_entry_moment,
    sinc_kernel,
)
from .spacings import (
    ScanWindow,
    SurmiseFit,
    UnfoldedSpectrum,
    fit_surmise,
    pooled_window_spacings,
    small_spacing_exponent,
    spacings,
    surmise_ab,
    surmise_cdf,
    surmise_pdf,
    surmise_sample,
    unfold,
    windowed_surmise_scan,
)
from .spectra import (
    Histogram,
    SpectrumResult,
    decay_rate,
    eigendecompose,
    eigenvalue_histogram,
    fit_triangular,
    histogram_from_values,
    q_fourth_moment,
    spectral_moment,
    triangular_pdf,
)
from .vectors import (
    MomentScaling,
    eigenvector_moment,
    fractal_dimensions,
    participation_ratio,
    porter_thomas_test,
    pr_peak_indices,
    pr_profile,
    sample_sphere_vectors,
)

__version__ = "0.1.0"
