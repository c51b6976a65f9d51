"""Sinc-kernel decay matrices and closed-form entry-moment oracles.

The decay matrix of an N-atom cloud is S_ij = sinc(sqrt(N/b0) |x_i - x_j|)
with unit diagonal; b0 = N/M is the single control parameter of the scaling
limit and M the effective transverse mode count.  The centered rescaling
Q = sqrt(2/(3 b0)) (S - I) is the natural variable for the small-b0 analysis.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import erf

from .cloud import CloudSample
from .errors import DataError

_SINC_TAYLOR_CUT = 1e-4


def sinc_kernel(x):
    """sin(x)/x with sinc(0) = 1.

    For |x| < 1e-4 a Taylor stub 1 - x^2/6 + x^4/120 replaces the ratio,
    avoiding the 0/0 at coincident points.
    """
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    small = np.abs(x) < _SINC_TAYLOR_CUT
    xs = x[small]
    out[small] = 1.0 - xs * xs / 6.0 + xs ** 4 / 120.0
    xl = x[~small]
    out[~small] = np.sin(xl) / xl
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class DecayMatrix:
    """Dense symmetric sinc-kernel matrix with unit diagonal.

    entries is (n_atoms, n_atoms); mode_count is M and cooperativeness b0,
    related through M = N/b0.
    """

    entries: np.ndarray = field(repr=False)
    n_atoms: int
    mode_count: float
    cooperativeness: float

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.float64)
        if m.shape != (self.n_atoms, self.n_atoms):
            raise ValueError("entries shape does not match n_atoms")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)


@dataclass(frozen=True)
class CenteredMatrix:
    """Q = sqrt(2/(3 b0)) (S - I): zero diagonal, same eigenvectors as S."""

    entries: np.ndarray = field(repr=False)
    cooperativeness: float

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.float64)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def n_atoms(self):
        return self.entries.shape[0]


def _kernel_matrix(points, scale):
    d = pdist(points)
    s = squareform(sinc_kernel(scale * d))
    np.fill_diagonal(s, 1.0)
    return s


def build_decay_matrix(cloud: CloudSample, b0):
    """Build S_ij = sinc(sqrt(N/b0) |x_i - x_j|) for a sampled cloud."""
    if b0 <= 0:
        raise ValueError(f"b0 must be positive, got {b0}")
    if not np.all(np.isfinite(cloud.points)):
        raise DataError("cloud contains non-finite coordinates")
    n = cloud.n_atoms
    scale = math.sqrt(n / b0)
    return DecayMatrix(
        entries=_kernel_matrix(cloud.points, scale),
        n_atoms=n,
        mode_count=n / b0,
        cooperativeness=float(b0),
    )


def build_decay_matrix_from_modes(cloud: CloudSample, modes_m):
    """Variant parameterized by the mode count M directly (fixed-M experiments)."""
    if modes_m <= 0:
        raise ValueError(f"M must be positive, got {modes_m}")
    if not np.all(np.isfinite(cloud.points)):
        raise DataError("cloud contains non-finite coordinates")
    n = cloud.n_atoms
    return DecayMatrix(
        entries=_kernel_matrix(cloud.points, math.sqrt(modes_m)),
        n_atoms=n,
        mode_count=float(modes_m),
        cooperativeness=n / float(modes_m),
    )


def build_centered_matrix(s: DecayMatrix) -> CenteredMatrix:
    """Center and rescale: Q = sqrt(2/(3 b0)) (S - I)."""
    b0 = s.cooperativeness
    q = math.sqrt(2.0 / (3.0 * b0)) * (s.entries - np.eye(s.n_atoms))
    np.fill_diagonal(q, 0.0)
    return CenteredMatrix(entries=q, cooperativeness=b0)


# ---------------------------------------------------------------------------
# closed-form / asymptotic entry moments
# ---------------------------------------------------------------------------

def entry_moment_exact(m, modes_m):
    """Exact off-diagonal entry moment <S_ij^m> for m in {1, 2, 3}.

    <S>   = e^{-M}
    <S^2> = (1 - e^{-4M}) / (4M)
    <S^3> = sqrt(pi) (3 erf(sqrt(M)) - erf(3 sqrt(M))) / (16 M^{3/2})

    The m=3 form follows from sin^3 t = (3 sin t - sin 3t)/4 integrated
    against the pair-distance density; it has the correct M->0 limit 1 and
    the large-M tail sqrt(pi)/(8 M^{3/2}).
    """
    if modes_m <= 0:
        raise ValueError(f"M must be positive, got {modes_m}")
    big_m = float(modes_m)
    if m == 1:
        return math.exp(-big_m)
    if m == 2:
        return -math.expm1(-4.0 * big_m) / (4.0 * big_m)
    if m == 3:
        root = math.sqrt(big_m)
        return (
            math.sqrt(math.pi)
            * (3.0 * erf(root) - erf(3.0 * root))
            / (16.0 * big_m ** 1.5)
        )
    raise ValueError(f"exact entry moments are available for m in {{1,2,3}}, got {m}")


def entry_moment_asymptotic_coefficient(m):
    """Coefficient a_m in <S_ij^m> ~ a_m M^{-3/2} for m >= 3.

    a_m = sqrt(pi) * sum_{k=0}^{floor(m/2)} (-1)^{k+1} C(m,k) (m-2k)^{m-3}
          / (2^{m+1} (m-3)!).
    """
    if m < 3:
        raise ValueError(f"asymptotic coefficients require m >= 3, got {m}")
    total = 0.0
    for k in range(m // 2 + 1):
        total += (-1) ** (k + 1) * math.comb(m, k) * float(m - 2 * k) ** (m - 3)
    return math.sqrt(math.pi) * total / (2 ** (m + 1) * math.factorial(m - 3))


def correlated_entry_moment(modes_m):
    """<S_ij S_il> for a shared atom i: e^{-2M} sinh(M)/M.

    Computed as (e^{-M} - e^{-3M})/(2M), which stays accurate for small M.
    """
    if modes_m <= 0:
        raise ValueError(f"M must be positive, got {modes_m}")
    big_m = float(modes_m)
    return (math.expm1(-big_m) - math.expm1(-3.0 * big_m)) / (2.0 * big_m)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    samples: int


_MC_KINDS = ("single", "shared-vertex", "4-cycle")
_MC_CHUNK = 200_000


def monte_carlo_entry_moment(kind, modes_m, samples, seed, power=1):
    """Unbiased Monte Carlo estimate of an entry-product moment.

    kind:
      "single"        <S_ij^power>       (2 fresh Gaussian points per sample)
      "shared-vertex" <S_ij S_il>        (3 points, distances share point i)
      "4-cycle"       <S_ij S_jk S_kl S_li>  (4 points around a cycle)

    Returns the sample mean and its standard error.
    """
    if kind not in _MC_KINDS:
        raise ValueError(f"kind must be one of {_MC_KINDS}, got {kind!r}")
    if modes_m <= 0:
        raise ValueError(f"M must be positive, got {modes_m}")
    if samples < 10 ** 3:
        raise ValueError(f"need at least 1000 samples, got {samples}")
    if kind == "single" and power < 1:
        raise ValueError(f"power must be >= 1, got {power}")

    scale = math.sqrt(float(modes_m))
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        chunk = min(_MC_CHUNK, samples - done)
        if kind == "single":
            pts = rng.standard_normal((chunk, 2, 3))
            r = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1)
            vals = sinc_kernel(scale * r) ** power
        elif kind == "shared-vertex":
            pts = rng.standard_normal((chunk, 3, 3))
            r1 = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
            r2 = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)
            vals = sinc_kernel(scale * r1) * sinc_kernel(scale * r2)
        else:
            pts = rng.standard_normal((chunk, 4, 3))
            vals = np.ones(chunk)
            for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
                vals *= sinc_kernel(scale * np.linalg.norm(pts[:, a] - pts[:, b], axis=1))
        total += vals.sum()
        total_sq += (vals * vals).sum()
        done += chunk

    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return MomentEstimate(
        value=float(mean),
        stderr=float(math.sqrt(var / samples)),
        samples=int(samples),
    )


# ---------------------------------------------------------------------------
# binary dump (debugging / cross-language checks)
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<Qd")  # N as uint64, b0 as float64, little-endian


def dump_decay_matrix(s: DecayMatrix, path):
    """Write a DecayMatrix: <u64 N><f64 b0> then row-major float64 entries."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(s.n_atoms, s.cooperativeness))
        fh.write(np.ascontiguousarray(s.entries, dtype="<f8").tobytes())


def load_decay_matrix(path) -> DecayMatrix:
    with open(path, "rb") as fh:
        n, b0 = _HEADER.unpack(fh.read(_HEADER.size))
        buf = fh.read(8 * n * n)
    if len(buf) != 8 * n * n:
        raise DataError(f"truncated matrix file: expected {8 * n * n} payload bytes")
    entries = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(n, n)
    return DecayMatrix(
        entries=entries, n_atoms=n, mode_count=n / b0, cooperativeness=b0
    )
