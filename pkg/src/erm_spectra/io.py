"""Serialization helpers: atomic file writes, CSV/JSON outputs, YAML configs.

All writers go through a write-temp-then-rename step so an interrupted run
never leaves a partial file at the final path.
"""

import csv
import io as _io
import json
import os

import numpy as np
import yaml


def atomic_write_text(path, text):
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def sanitize_json(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {str(k): sanitize_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize_json(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(obj, path):
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    text = json.dumps(sanitize_json(obj), indent=2, sort_keys=True) + "\n"
    atomic_write_text(path, text)


def _write_csv_rows(path, header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def write_histogram_csv(hist, path):
    """Columns: bin_left, bin_right, density."""
    rows = [
        (repr(float(l)), repr(float(r)), repr(float(d)))
        for l, r, d in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.densities)
    ]
    _write_csv_rows(path, ("bin_left", "bin_right", "density"), rows)


def write_histogram_json(hist, path, metadata=None):
    payload = {
        "bin_edges": hist.bin_edges,
        "densities": hist.densities,
        "counts": hist.counts,
        "sample_count": hist.sample_count,
        "normalized": hist.normalized,
        "metadata": metadata or {},
    }
    write_json(payload, path)


def write_scan_csv(windows, path):
    """Columns: window_center, q, q_err, r, r_err, goodness, flag."""
    rows = []
    for w in windows:
        if w.fit is None:
            rows.append((repr(w.center), "", "", "", "", "", w.flag))
        else:
            rows.append((
                repr(w.center),
                repr(w.fit.q), repr(w.fit.q_stderr),
                repr(w.fit.r), repr(w.fit.r_stderr),
                repr(w.fit.goodness), w.flag,
            ))
    _write_csv_rows(path, ("window_center", "q", "q_err", "r", "r_err",
                           "goodness", "flag"), rows)


def write_table_csv(path, header, rows):
    _write_csv_rows(path, header, [[str(c) for c in row] for row in rows])


def load_config_file(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a mapping")
    return data


def dump_config_yaml(config_dict):
    return yaml.safe_dump(config_dict, sort_keys=True, default_flow_style=False)
