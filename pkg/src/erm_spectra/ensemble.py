"""Experiment configuration, seeding, parallel orchestration, persistence.

A run is a pure function of its configuration: per-realization seeds come
from a documented SeedSequence splitting rule, workers return their payloads
through an ordered reducer, and every output file is written atomically.
Only the "timing" section of a report differs between identical reruns.
"""

import math
import os
import time
import uuid
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass

import numpy as np

from . import io as eio
from .cloud import sample_cloud
from .errors import EigensolverError
from .matrix import (
    build_decay_matrix,
    build_decay_matrix_from_modes,
    build_centered_matrix,
    correlated_entry_moment,
    entry_moment_exact,
    monte_carlo_entry_moment,
)
from .spectra import (
    decay_rate,
    eigendecompose,
    eigenvalue_histogram,
    fit_triangular,
    spectral_moment,
)
from .spacings import pooled_window_spacings, small_spacing_exponent, windowed_surmise_scan
from .vectors import (
    bulk_indices,
    eigenvector_moment,
    fractal_dimensions,
    pr_peak_indices,
    pr_profile,
    porter_thomas_test,
)

EXPERIMENT_KINDS = (
    "spectrum", "triangle-fit", "nnsd-scan", "eigvec-stats",
    "fractal-scan", "entry-moments", "decay-rate",
)

WORKERS_ENV_VAR = "ERM_SPECTRA_WORKERS"

# Porter-Thomas KS distance above which a window is flagged non-PT
PT_KS_THRESHOLD = 0.05

# raw eigenvalues are echoed into the report only for runs this small
_EIGENVALUE_ECHO_LIMIT = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one ensemble experiment."""

    kind: str
    n_atoms: int = 1000
    b0: float | None = None
    modes_m: float | None = None
    realizations: int = 20
    master_seed: int = 0
    out_dir: str = "erm-run"
    workers: int | None = None
    bins: int | float | str | None = None
    window_size: int | None = None
    unfold_degree: int = 7
    unfold_estimator: str = "poly"
    samples: int = 10 ** 6
    sizes: tuple = (500, 1000, 2000, 4000)
    q_list: tuple = (2, 3, 4, 5)

    def validate(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be positive")
        if self.realizations < 1:
            raise ValueError("realizations must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        if (self.b0 is None) == (self.modes_m is None):
            raise ValueError("exactly one of b0 / modes_m must be set")
        if self.b0 is not None and self.b0 <= 0:
            raise ValueError("b0 must be positive")
        if self.modes_m is not None and self.modes_m <= 0:
            raise ValueError("modes_m must be positive")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be positive")
        if self.samples < 10 ** 3:
            raise ValueError("samples must be at least 1000")
        if self.window_size is not None and self.window_size < 2:
            raise ValueError("window_size must be at least 2")
        if self.unfold_degree < 1:
            raise ValueError("unfold_degree must be at least 1")
        if self.unfold_estimator not in ("poly", "staircase"):
            raise ValueError("unfold_estimator must be 'poly' or 'staircase'")
        if len(self.sizes) < 1 or any(n < 1 for n in self.sizes):
            raise ValueError("sizes must be positive")
        if any(q < 2 for q in self.q_list):
            raise ValueError("q_list entries must be >= 2")
        return self

    @property
    def effective_b0(self):
        if self.b0 is not None:
            return float(self.b0)
        return self.n_atoms / float(self.modes_m)

    @property
    def effective_modes(self):
        if self.modes_m is not None:
            return float(self.modes_m)
        return self.n_atoms / float(self.b0)

    def effective_workers(self):
        if self.workers is not None:
            return self.workers
        env = os.environ.get(WORKERS_ENV_VAR)
        return max(int(env), 1) if env else 1

    def to_dict(self):
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        d["q_list"] = list(self.q_list)
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "sizes" in data and data["sizes"] is not None:
            data["sizes"] = tuple(int(n) for n in data["sizes"])
        if "q_list" in data and data["q_list"] is not None:
            data["q_list"] = tuple(int(q) for q in data["q_list"])
        return cls(**data)


def derive_realization_seeds(master_seed, count):
    """Per-realization seeds: SeedSequence(master, spawn_key=(i,)) -> uint64.

    The rule is stable across platforms and keeps realizations statistically
    independent regardless of how many run in parallel.
    """
    seeds = [
        int(np.random.SeedSequence(int(master_seed), spawn_key=(i,))
            .generate_state(1, np.uint64)[0])
        for i in range(count)
    ]
    if len(set(seeds)) != len(seeds):
        raise RuntimeError("seed derivation produced a collision")
    return seeds


@dataclass
class EnsembleReport:
    """Aggregated outputs of one experiment run."""

    config: dict
    seeds: list
    results: dict
    failures: list
    timing: dict
    output_files: list

    def to_dict(self):
        return {
            "config": self.config,
            "seeds": self.seeds,
            "results": self.results,
            "failures": self.failures,
            "output_files": sorted(self.output_files),
            "timing": self.timing,
        }

    @property
    def failure_fraction(self):
        total = len(self.seeds) if self.seeds else 1
        return len(self.failures) / total


# ---------------------------------------------------------------------------
# worker tasks (module-level so they pickle across process boundaries)
# ---------------------------------------------------------------------------

def _build_matrix(n, b0, modes_m, seed):
    cloud = sample_cloud(n, seed)
    if modes_m is not None:
        return build_decay_matrix_from_modes(cloud, modes_m)
    return build_decay_matrix(cloud, b0)


def _spectrum_task(n, b0, modes_m, seed):
    t0 = time.perf_counter()
    s = _build_matrix(n, b0, modes_m, seed)
    spec = eigendecompose(s, source_seed=seed)
    return {"eigenvalues": spec.eigenvalues, "solve_seconds": time.perf_counter() - t0}


def _centered_spectrum_task(n, b0, modes_m, seed):
    t0 = time.perf_counter()
    s = _build_matrix(n, b0, modes_m, seed)
    spec = eigendecompose(build_centered_matrix(s), source_seed=seed)
    return {"eigenvalues": spec.eigenvalues, "solve_seconds": time.perf_counter() - t0}


def _eigvec_task(n, b0, modes_m, seed):
    t0 = time.perf_counter()
    s = _build_matrix(n, b0, modes_m, seed)
    spec = eigendecompose(s, with_vectors=True, source_seed=seed)
    evals, ratios = pr_profile(spec)
    bulk = bulk_indices(spec)
    payload = {
        "eigenvalues": evals,
        "pr": ratios,
        "bulk_pr_over_n": float(np.mean(ratios[bulk]) / n),
        "min_eigenvalue_pr": float(ratios[0]),
        "m2_bulk": eigenvector_moment(spec.eigenvectors[:, bulk], 2),
        "m3_bulk": eigenvector_moment(spec.eigenvectors[:, bulk], 3),
    }
    for side in ("sub", "super"):
        idx, peak = pr_peak_indices(spec, side)
        v = spec.eigenvectors[:, idx]
        v = v / np.linalg.norm(v, axis=0)
        payload[f"u_{side}"] = (math.sqrt(n) * v).ravel()
        payload[f"peak_eigenvalue_{side}"] = float(evals[peak])
    payload["solve_seconds"] = time.perf_counter() - t0
    return payload


def _decay_rate_task(n, b0, modes_m, seed):
    t0 = time.perf_counter()
    s = _build_matrix(n, b0, modes_m, seed)
    spec = eigendecompose(s, with_vectors=True, source_seed=seed)
    symmetric = np.full(n, 1.0 / math.sqrt(n))
    basis = np.zeros(n)
    basis[0] = 1.0
    return {
        "symmetric": decay_rate(symmetric, s),
        "basis_state": decay_rate(basis, s),
        "min_mode": decay_rate(spec.eigenvectors[:, 0], s),
        "max_mode": decay_rate(spec.eigenvectors[:, -1], s),
        "solve_seconds": time.perf_counter() - t0,
    }


def _run_tasks(fn, tasks, workers):
    """Ordered map over realization tasks, recording solver failures."""
    results = [None] * len(tasks)
    failures = []
    if workers <= 1:
        for i, args in enumerate(tasks):
            try:
                results[i] = fn(*args)
            except EigensolverError as exc:
                failures.append({"realization": i, "seed": exc.seed, "error": str(exc)})
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(fn, *args): i for i, args in enumerate(tasks)}
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    results[i] = fut.result()
                except EigensolverError as exc:
                    failures.append(
                        {"realization": i, "seed": exc.seed, "error": str(exc)}
                    )
    failures.sort(key=lambda f: f["realization"])
    return results, failures


def _mean_stderr(values):
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return {"mean": mean, "stderr": 0.0}
    return {
        "mean": mean,
        "stderr": float(values.std(ddof=1) / math.sqrt(values.size)),
    }


def _spectra_from_payloads(config, seeds, payloads, centered=False):
    from .spectra import SpectrumResult

    specs = []
    for seed, payload in zip(seeds, payloads):
        if payload is None:
            continue
        specs.append(SpectrumResult(
            eigenvalues=payload["eigenvalues"], eigenvectors=None,
            source_seed=seed, n_atoms=config.n_atoms,
            cooperativeness=config.effective_b0, centered=centered,
        ))
    return specs


# ---------------------------------------------------------------------------
# per-kind experiment drivers
# ---------------------------------------------------------------------------

def _drive_spectrum(config, seeds, workers, out_dir, fit_triangle=False):
    tasks = [(config.n_atoms, config.b0, config.modes_m, s) for s in seeds]
    payloads, failures = _run_tasks(_spectrum_task, tasks, workers)
    specs = _spectra_from_payloads(config, seeds, payloads)
    if not specs:
        raise RuntimeError("every realization failed")

    hist = eigenvalue_histogram(specs, bins=config.bins or "fd")
    results = {
        "moments": {
            f"m{m}": _mean_stderr([spectral_moment(s, m) for s in specs])
            for m in (1, 2, 3, 4)
        },
        "trace_error_max": max(
            abs(float(s.eigenvalues.sum()) - s.n_atoms) / s.n_atoms for s in specs
        ),
        "min_eigenvalue": min(float(s.eigenvalues[0]) for s in specs),
        "max_eigenvalue": max(float(s.eigenvalues[-1]) for s in specs),
        "histogram": {
            "file": "eigenvalue_histogram.csv",
            "bins": int(hist.densities.size),
            "range": [float(hist.bin_edges[0]), float(hist.bin_edges[-1])],
        },
    }
    if config.n_atoms * config.realizations <= _EIGENVALUE_ECHO_LIMIT:
        results["eigenvalues"] = [s.eigenvalues for s in specs]
    if fit_triangle:
        a, a_err = fit_triangular(hist)
        results["triangular_fit"] = {"a": a, "a_stderr": a_err}

    files = {}
    eio.write_histogram_csv(hist, os.path.join(out_dir, "eigenvalue_histogram.csv"))
    files["eigenvalue_histogram.csv"] = True
    eio.write_histogram_json(
        hist, os.path.join(out_dir, "eigenvalue_histogram.json"),
        metadata={
            "n_atoms": config.n_atoms, "b0": config.effective_b0,
            "seeds": seeds, "realizations": config.realizations,
        },
    )
    files["eigenvalue_histogram.json"] = True
    solve = sum(p["solve_seconds"] for p in payloads if p)
    return results, failures, list(files), solve


def _drive_nnsd(config, seeds, workers, out_dir):
    tasks = [(config.n_atoms, config.b0, config.modes_m, s) for s in seeds]
    payloads, failures = _run_tasks(_spectrum_task, tasks, workers)
    specs = _spectra_from_payloads(config, seeds, payloads)
    if not specs:
        raise RuntimeError("every realization failed")

    windows = windowed_surmise_scan(
        specs, window_size=config.window_size,
        estimator=config.unfold_estimator, degree=config.unfold_degree,
    )
    n = config.n_atoms
    ws = windows[0].hi_rank - windows[0].lo_rank
    lo = max((n - ws) // 2, 0)
    central = pooled_window_spacings(
        specs, lo, lo + ws,
        estimator=config.unfold_estimator, degree=config.unfold_degree,
    )
    results = {
        "windows": [
            {
                "center": w.center, "flag": w.flag,
                "q": None if w.fit is None else w.fit.q,
                "q_stderr": None if w.fit is None else w.fit.q_stderr,
                "r": None if w.fit is None else w.fit.r,
                "r_stderr": None if w.fit is None else w.fit.r_stderr,
                "goodness": None if w.fit is None else w.fit.goodness,
            }
            for w in windows
        ],
        "window_size": ws,
    }
    try:
        q_small, q_small_err = small_spacing_exponent(central)
        results["small_spacing"] = {"q": q_small, "stderr": q_small_err}
    except ValueError as exc:
        results["small_spacing"] = {"error": str(exc)}

    eio.write_scan_csv(windows, os.path.join(out_dir, "nnsd_scan.csv"))
    from .spectra import histogram_from_values

    eio.write_histogram_csv(
        histogram_from_values(central, bins=config.bins or "fd"),
        os.path.join(out_dir, "central_spacing_histogram.csv"),
    )
    solve = sum(p["solve_seconds"] for p in payloads if p)
    return results, failures, ["nnsd_scan.csv", "central_spacing_histogram.csv"], solve


def _drive_eigvec(config, seeds, workers, out_dir):
    tasks = [(config.n_atoms, config.b0, config.modes_m, s) for s in seeds]
    payloads, failures = _run_tasks(_eigvec_task, tasks, workers)
    alive = [p for p in payloads if p]
    if not alive:
        raise RuntimeError("every realization failed")

    results = {
        "bulk_pr_over_n": _mean_stderr([p["bulk_pr_over_n"] for p in alive]),
        "min_eigenvalue_pr": _mean_stderr([p["min_eigenvalue_pr"] for p in alive]),
        "m2_bulk": _mean_stderr([p["m2_bulk"] for p in alive]),
        "m3_bulk": _mean_stderr([p["m3_bulk"] for p in alive]),
        "porter_thomas": {},
        "peak_eigenvalues": {
            side: _mean_stderr([p[f"peak_eigenvalue_{side}"] for p in alive])
            for side in ("sub", "super")
        },
    }

    files = []
    from scipy.stats import kstest
    from .spectra import histogram_from_values

    for side in ("sub", "super"):
        pooled_u = np.concatenate([p[f"u_{side}"] for p in alive])
        ks = float(kstest(pooled_u, "norm").statistic)
        results["porter_thomas"][side] = {
            "ks": ks, "non_pt": bool(ks > PT_KS_THRESHOLD),
            "components": int(pooled_u.size),
        }
        hist = histogram_from_values(pooled_u, bins=config.bins or "fd")
        name = f"u_histogram_{side}.csv"
        eio.write_histogram_csv(hist, os.path.join(out_dir, name))
        files.append(name)

    rows = []
    for i, p in enumerate(alive):
        rows.extend(
            (i, repr(float(ev)), repr(float(pr)))
            for ev, pr in zip(p["eigenvalues"], p["pr"])
        )
    eio.write_table_csv(os.path.join(out_dir, "pr_profile.csv"),
                        ("realization", "eigenvalue", "participation_ratio"), rows)
    files.append("pr_profile.csv")
    solve = sum(p["solve_seconds"] for p in alive)
    return results, failures, files, solve


def _drive_fractal(config, seeds, workers, out_dir):
    t0 = time.perf_counter()
    scalings = fractal_dimensions(
        "superradiant-max", config.q_list, config.sizes,
        config.effective_b0, config.realizations, config.master_seed,
    )
    results = {"scalings": [
        {
            "q": sc.q, "sizes": list(sc.sizes),
            "inv_moments": sc.inv_moments,
            "tau": sc.tau, "tau_stderr": sc.tau_stderr,
            "d_q": sc.d_q, "d_q_stderr": sc.d_q_stderr,
        }
        for sc in scalings
    ]}
    rows = []
    for sc in scalings:
        for n, inv in zip(sc.sizes, sc.inv_moments):
            rows.append((sc.q, n, repr(float(inv))))
    eio.write_table_csv(os.path.join(out_dir, "fractal_scaling.csv"),
                        ("q", "n_atoms", "inverse_moment"), rows)
    return results, [], ["fractal_scaling.csv"], time.perf_counter() - t0


def _drive_entry_moments(config, seeds, workers, out_dir):
    t0 = time.perf_counter()
    big_m = config.effective_modes
    rows = []
    mc_seeds = derive_realization_seeds(config.master_seed, 4)
    for m in (1, 2, 3):
        exact = entry_moment_exact(m, big_m)
        est = monte_carlo_entry_moment("single", big_m, config.samples,
                                       mc_seeds[m - 1], power=m)
        z = (est.value - exact) / est.stderr if est.stderr > 0 else 0.0
        rows.append({
            "kind": "single", "power": m, "modes_m": big_m, "exact": exact,
            "monte_carlo": est.value, "stderr": est.stderr, "z_score": z,
        })
    exact = correlated_entry_moment(big_m)
    est = monte_carlo_entry_moment("shared-vertex", big_m, config.samples, mc_seeds[3])
    z = (est.value - exact) / est.stderr if est.stderr > 0 else 0.0
    rows.append({
        "kind": "shared-vertex", "power": 1, "modes_m": big_m, "exact": exact,
        "monte_carlo": est.value, "stderr": est.stderr, "z_score": z,
    })
    eio.write_table_csv(
        os.path.join(out_dir, "entry_moments.csv"),
        ("kind", "power", "modes_m", "exact", "monte_carlo", "stderr", "z_score"),
        [(r["kind"], r["power"], repr(float(r["modes_m"])), repr(float(r["exact"])),
          repr(float(r["monte_carlo"])), repr(float(r["stderr"])),
          repr(float(r["z_score"]))) for r in rows],
    )
    return {"rows": rows}, [], ["entry_moments.csv"], time.perf_counter() - t0


def _drive_decay_rate(config, seeds, workers, out_dir):
    tasks = [(config.n_atoms, config.b0, config.modes_m, s) for s in seeds]
    payloads, failures = _run_tasks(_decay_rate_task, tasks, workers)
    alive = [p for p in payloads if p]
    if not alive:
        raise RuntimeError("every realization failed")
    keys = ("symmetric", "basis_state", "min_mode", "max_mode")
    results = {"rates": {k: _mean_stderr([p[k] for p in alive]) for k in keys}}
    eio.write_table_csv(
        os.path.join(out_dir, "decay_rates.csv"),
        ("state", "mean_rate", "stderr"),
        [(k, repr(results["rates"][k]["mean"]), repr(results["rates"][k]["stderr"]))
         for k in keys],
    )
    solve = sum(p["solve_seconds"] for p in alive)
    return results, failures, ["decay_rates.csv"], solve


_DRIVERS = {
    "spectrum": _drive_spectrum,
    "triangle-fit": lambda c, s, w, o: _drive_spectrum(c, s, w, o, fit_triangle=True),
    "nnsd-scan": _drive_nnsd,
    "eigvec-stats": _drive_eigvec,
    "fractal-scan": _drive_fractal,
    "entry-moments": _drive_entry_moments,
    "decay-rate": _drive_decay_rate,
}


def run_experiment(config: ExperimentConfig) -> EnsembleReport:
    """Execute an experiment and persist its report under config.out_dir.

    The output directory is probed for writability before any computation;
    the report file lands last, atomically, so interrupted runs leave no
    partial report at the final path.
    """
    config.validate()
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, f".write-probe-{uuid.uuid4().hex}")
    with open(probe, "w") as fh:
        fh.write("ok")
    os.unlink(probe)

    wall_start = time.perf_counter()
    seeds = derive_realization_seeds(config.master_seed, config.realizations)
    workers = config.effective_workers()
    results, failures, files, solve_seconds = _DRIVERS[config.kind](
        config, seeds, workers, out_dir
    )

    report = EnsembleReport(
        config=config.to_dict(),
        seeds=seeds,
        results=eio.sanitize_json(results),
        failures=failures,
        timing={
            "wall_seconds": time.perf_counter() - wall_start,
            "solve_seconds": solve_seconds,
            "workers": workers,
        },
        output_files=files + ["report.json"],
    )
    eio.write_json(report.to_dict(), os.path.join(out_dir, "report.json"))
    return report
