"""Command-line surface: one subcommand per experiment kind.

Flags always win over the config file; the config file fills anything not
given on the command line; package defaults fill the rest.  Validation
failures exit with status 1 and a machine-readable JSON line on stderr;
argparse usage errors exit with status 2.
"""

import argparse
import json
import sys

from .ensemble import (
    EXPERIMENT_KINDS,
    WORKERS_ENV_VAR,
    ExperimentConfig,
    run_experiment,
)
from .errors import DataError, FitError
from .io import load_config_file

FAILURE_EXIT_FRACTION = 0.05


def _parse_bins(text):
    if text == "fd":
        return text
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"bins must be 'fd', an integer count, or a float width, got {text!r}"
        ) from exc


def _parse_int_list(text):
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected a comma-separated integer list, got {text!r}"
        ) from exc


def _add_common_flags(sub):
    sub.add_argument("--n", type=int, default=None, dest="n_atoms",
                     help="number of atoms N (matrix size)")
    sub.add_argument("--b0", type=float, default=None,
                     help="cooperativeness parameter b0 = N/M")
    sub.add_argument("--modes-m", type=float, default=None, dest="modes_m",
                     help="mode count M (alternative to --b0; set exactly one)")
    sub.add_argument("--realizations", type=int, default=None,
                     help="number of independent matrix realizations")
    sub.add_argument("--seed", type=int, default=None, dest="master_seed",
                     help="master seed; realization seeds are derived from it")
    sub.add_argument("--out", type=str, default=None, dest="out_dir",
                     help="output directory for report.json and CSV files")
    sub.add_argument("--workers", type=int, default=None,
                     help=f"parallel workers (default: ${WORKERS_ENV_VAR} or 1)")
    sub.add_argument("--config", type=str, default=None,
                     help="YAML config file; explicit flags override its values")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="erm-spectra",
        description="Ensemble simulator and spectral statistics for sinc-kernel "
                    "Euclidean random matrices of Gaussian atomic clouds.",
    )
    subparsers = parser.add_subparsers(dest="kind", required=True)

    helps = {
        "spectrum": "eigenvalue density histogram and spectral moments",
        "triangle-fit": "spectrum plus the small-b0 triangular density fit",
        "nnsd-scan": "windowed nearest-neighbor spacing fits across the spectrum",
        "eigvec-stats": "participation ratios and Porter-Thomas amplitude tests",
        "fractal-scan": "eigenvector moment scaling across matrix sizes",
        "entry-moments": "closed-form vs Monte Carlo matrix-entry moments",
        "decay-rate": "decay rates of reference excitation states",
    }
    subs = {}
    for kind in EXPERIMENT_KINDS:
        sub = subparsers.add_parser(kind, help=helps[kind])
        _add_common_flags(sub)
        subs[kind] = sub

    for kind in ("spectrum", "triangle-fit", "nnsd-scan", "eigvec-stats"):
        subs[kind].add_argument("--bins", type=_parse_bins, default=None,
                                help="histogram bins: 'fd', a count, or a width")
    subs["nnsd-scan"].add_argument("--window-size", type=int, default=None,
                                   dest="window_size",
                                   help="eigenvalues per scan window")
    subs["nnsd-scan"].add_argument("--unfold-degree", type=int, default=None,
                                   dest="unfold_degree",
                                   help="polynomial degree of the unfolding fit")
    subs["nnsd-scan"].add_argument("--unfold-estimator", type=str, default=None,
                                   dest="unfold_estimator",
                                   choices=("poly", "staircase"),
                                   help="counting-function estimator")
    subs["entry-moments"].add_argument("--samples", type=int, default=None,
                                       help="Monte Carlo samples per moment")
    subs["fractal-scan"].add_argument("--sizes", type=_parse_int_list, default=None,
                                      help="comma-separated matrix sizes")
    subs["fractal-scan"].add_argument("--q-list", type=_parse_int_list, default=None,
                                      dest="q_list",
                                      help="comma-separated moment orders (each >= 2)")
    return parser


def _error_line(code, message):
    print(json.dumps({"error": code, "message": str(message)}), file=sys.stderr)


def _summarize(report):
    kind = report.config["kind"]
    res = report.results
    out = report.config["out_dir"]
    lines = [f"report written to {out}/report.json"]
    if kind in ("spectrum", "triangle-fit"):
        m2 = res["moments"]["m2"]
        lines.append(f"<lambda^2> = {m2['mean']:.6f} +/- {m2['stderr']:.2g}")
        if "triangular_fit" in res:
            fit = res["triangular_fit"]
            lines.append(f"triangular a = {fit['a']:.5f} +/- {fit['a_stderr']:.2g}")
    elif kind == "nnsd-scan":
        ok = [w for w in res["windows"] if w["flag"] == "ok"]
        lines.append(f"{len(ok)}/{len(res['windows'])} windows fit cleanly")
        if "q" in res.get("small_spacing", {}):
            ss = res["small_spacing"]
            lines.append(f"small-spacing exponent q = {ss['q']:.3f} +/- {ss['stderr']:.3f}")
    elif kind == "eigvec-stats":
        bulk = res["bulk_pr_over_n"]
        lines.append(f"bulk PR/N = {bulk['mean']:.4f} +/- {bulk['stderr']:.2g}")
        for side in ("sub", "super"):
            pt = res["porter_thomas"][side]
            lines.append(f"PT KS ({side}) = {pt['ks']:.4f}"
                         + (" [non-PT]" if pt["non_pt"] else ""))
    elif kind == "fractal-scan":
        for sc in res["scalings"]:
            lines.append(f"tau({sc['q']}) = {sc['tau']:.3f} +/- {sc['tau_stderr']:.3f}"
                         f"  D_{sc['q']} = {sc['d_q']:.3f}")
    elif kind == "entry-moments":
        for row in res["rows"]:
            lines.append(
                f"{row['kind']} m={row['power']}: exact {row['exact']:.6g}, "
                f"MC {row['monte_carlo']:.6g} +/- {row['stderr']:.2g}"
            )
    elif kind == "decay-rate":
        for state, val in res["rates"].items():
            lines.append(f"rate[{state}] = {val['mean']:.6f} +/- {val['stderr']:.2g}")
    return "\n".join(lines)


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    flag_values = {
        k: v for k, v in vars(args).items()
        if k not in ("kind", "config") and v is not None
    }
    merged = {}
    if args.config:
        try:
            file_values = load_config_file(args.config)
        except (OSError, ValueError) as exc:
            _error_line("config-error", exc)
            return 1
        file_values.pop("kind", None)
        merged.update(file_values)
    merged.update(flag_values)

    try:
        config = ExperimentConfig.from_dict({"kind": args.kind, **merged})
        config.validate()
    except (TypeError, ValueError) as exc:
        _error_line("invalid-argument", exc)
        return 1

    try:
        report = run_experiment(config)
    except (OSError,) as exc:
        _error_line("io-error", exc)
        return 1
    except (DataError, FitError, ValueError, RuntimeError) as exc:
        _error_line("run-error", exc)
        return 1

    print(_summarize(report))
    if report.failure_fraction > FAILURE_EXIT_FRACTION:
        _error_line(
            "realizations-failed",
            f"{len(report.failures)} of {len(report.seeds)} realizations failed",
        )
        return 1
    return 0


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
