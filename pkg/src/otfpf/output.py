"""Long-form CSV writers and the run manifest."""

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np

__all__ = ["RunManifest", "fmt", "write_trajectory_csv", "write_mse_csv",
           "write_chaos_csv", "write_levels_csv", "write_manifest"]


def fmt(value):
    """Round-trip decimal text (17 significant digits) for floats."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def _write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_trajectory_csv(path, result):
    """``t,kind,component,value`` rows from a :class:`DecayResult`.

    ``component`` is 1-based; for ``err_mean`` and ``err_cov_fro`` it is 1.
    """
    def rows():
        for k, t in enumerate(result.times):
            for kind, vec in (("truth", result.truth[k]),
                              ("kalman_mean", result.kalman_means[k]),
                              ("emp_mean", result.means[k])):
                for i, v in enumerate(vec):
                    yield (float(t), kind, i + 1, float(v))
            yield (float(t), "err_mean", 1, float(result.err_mean[k]))
            yield (float(t), "err_cov_fro", 1, float(result.err_cov[k]))
    return _write(path, ["t", "kind", "component", "value"], rows())


def write_mse_csv(path, records):
    rows = sorted(records, key=lambda r: (r.d, r.n, r.estimator))
    return _write(path, ["n", "d", "estimator", "mse", "std_err", "trials", "flag"],
                  ((r.n, r.d, r.estimator, r.mse, r.std_err, r.trials, r.flag)
                   for r in rows))


def write_chaos_csv(path, result):
    return _write(path, ["n", "trials", "err2_mean", "err2_stderr", "cor1_stat"],
                  ((r.n, r.trials, r.err2_mean, r.err2_stderr, r.cor1_stat)
                   for r in result.rows))


def write_levels_csv(path, result):
    return _write(path, ["estimator", "level", "d", "n_min"],
                  ((p.estimator, p.level, p.d, p.n_min) for p in result.levels))


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    config_hash: str
    master_seed: int
    command: str
    outputs: list = field(default_factory=list)
    runtime_seconds: float = 0.0
    version: str = field(default_factory=_version)


def write_manifest(out_dir, manifest):
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
