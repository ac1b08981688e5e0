"""Command-line entry point.

Two subcommands: ``run`` executes an experiment described by a JSON
config file and writes one CSV per learner plus a JSON manifest that
echoes the fully-resolved config; ``compare`` summarizes two or more
manifests produced this way.  All floats are written with full
round-trip precision, so identical configs and seeds produce
byte-identical CSVs.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError
from .harness import ExperimentConfig, Schedule, run_experiment
from .hmm import HmmParams, ModelDims
from .learners import CONFIG_FIELDS, LearnerConfig

# JSON spelling of LearnerConfig attributes that differ from the
# dataclass field name.
_JSON_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_JSON = {v: k for k, v in _JSON_TO_FIELD.items()}

_DEFAULTS_HELP = """\
configuration defaults:
  schedule            {"kind": "static"}; abrupt interval 500; gradual delta 0.01
  n_replicas          1
  seed                0
  snapshots           false (requires n_replicas = 1 when true)
  snapshot_stride     10
  init_jitter         0.0 (learners start exactly symmetric)
  teacher             null (a fresh random teacher per replica, flat Dirichlet rows)
  eta_bw              0.1     (bwo)
  eta_bc              1.0     (bc)
  lambda              0.01    (bc softmax gain)
  prior_strength      1.0     (bona/mpa; flat prior, all concentrations 1)
  floor               1e-12   (bwo/bc parameter clamp)

fixed numerical defaults:
  digamma-system solver: tolerance 1e-10, max 500 iterations
  hidden-path and sequence enumeration caps: 10^6
  non-finite KL export sentinel: 1e9 (flagged in the inf_flag column)
"""


def _check_keys(data, allowed, required, path):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in data:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")


def _as_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _as_number(value, path, positive=False, nonnegative=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    value = float(value)
    if positive and not value > 0.0:
        raise ConfigError(path, f"must be positive, got {value}")
    if nonnegative and value < 0.0:
        raise ConfigError(path, f"must be non-negative, got {value}")
    return value


def _parse_dims(data):
    if not isinstance(data, dict):
        raise ConfigError("dims", "must be an object with keys n, m, T")
    _check_keys(data, {"n", "m", "T"}, {"n", "m", "T"}, "dims")
    return ModelDims(
        _as_int(data["n"], "dims.n", minimum=1),
        _as_int(data["m"], "dims.m", minimum=1),
        _as_int(data["T"], "dims.T", minimum=1),
    )


def _parse_learner(data, path):
    if not isinstance(data, dict):
        raise ConfigError(path, "must be an object")
    if "algorithm" not in data:
        raise ConfigError(f"{path}.algorithm", "missing required key")
    algorithm = data["algorithm"]
    if algorithm not in CONFIG_FIELDS:
        raise ConfigError(
            f"{path}.algorithm",
            f"unknown algorithm {algorithm!r}; expected one of {sorted(CONFIG_FIELDS)}",
        )
    allowed_fields = CONFIG_FIELDS[algorithm]
    allowed_keys = {"algorithm"} | {_FIELD_TO_JSON.get(f, f) for f in allowed_fields}
    _check_keys(data, allowed_keys, {"algorithm"}, path)
    kwargs = {}
    for key, value in data.items():
        if key == "algorithm":
            continue
        field = _JSON_TO_FIELD.get(key, key)
        kwargs[field] = _as_number(value, f"{path}.{key}", positive=True)
    return LearnerConfig(algorithm=algorithm, **kwargs)


def _parse_schedule(data):
    if data is None:
        return Schedule()
    if not isinstance(data, dict):
        raise ConfigError("schedule", "must be an object")
    if "kind" not in data:
        raise ConfigError("schedule.kind", "missing required key")
    kind = data["kind"]
    if kind == "static":
        _check_keys(data, {"kind"}, {"kind"}, "schedule")
        return Schedule(kind="static")
    if kind == "abrupt":
        _check_keys(data, {"kind", "interval"}, {"kind"}, "schedule")
        return Schedule(
            kind="abrupt",
            interval=_as_int(data.get("interval", 500), "schedule.interval", minimum=1),
        )
    if kind == "gradual":
        _check_keys(data, {"kind", "delta"}, {"kind"}, "schedule")
        return Schedule(
            kind="gradual",
            delta=_as_number(data.get("delta", 0.01), "schedule.delta", positive=True),
        )
    raise ConfigError("schedule.kind", f"must be static, abrupt or gradual, got {kind!r}")


def _parse_teacher(data, dims):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("teacher", "must be an object")
    _check_keys(data, {"n", "m", "T", "pi", "A", "B"}, {"n", "m", "T", "pi", "A", "B"}, "teacher")
    for name, want in (("n", dims.n), ("m", dims.m), ("T", dims.T)):
        if _as_int(data[name], f"teacher.{name}", minimum=1) != want:
            raise ConfigError(f"teacher.{name}", f"must equal dims.{name} ({want})")
    try:
        return HmmParams.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ConfigError("teacher", str(exc)) from None


_TOP_KEYS = {
    "dims",
    "learners",
    "schedule",
    "n_sequences",
    "n_replicas",
    "seed",
    "teacher",
    "init_jitter",
    "snapshots",
    "snapshot_stride",
}


def config_from_dict(data):
    """Build a validated :class:`ExperimentConfig` from plain JSON types."""
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    _check_keys(data, _TOP_KEYS, {"dims", "learners", "n_sequences"}, "")
    dims = _parse_dims(data["dims"])
    raw_learners = data["learners"]
    if not isinstance(raw_learners, list) or not raw_learners:
        raise ConfigError("learners", "must be a non-empty array")
    learners = [
        _parse_learner(entry, f"learners[{i}]") for i, entry in enumerate(raw_learners)
    ]
    snapshots = data.get("snapshots", False)
    if not isinstance(snapshots, bool):
        raise ConfigError("snapshots", f"must be a boolean, got {snapshots!r}")
    config = ExperimentConfig(
        dims=dims,
        learners=learners,
        n_sequences=_as_int(data["n_sequences"], "n_sequences", minimum=1),
        n_replicas=_as_int(data.get("n_replicas", 1), "n_replicas", minimum=1),
        schedule=_parse_schedule(data.get("schedule")),
        seed=_as_int(data.get("seed", 0), "seed"),
        teacher=_parse_teacher(data.get("teacher"), dims),
        init_jitter=_as_number(data.get("init_jitter", 0.0), "init_jitter", nonnegative=True),
        snapshots=snapshots,
        snapshot_stride=_as_int(data.get("snapshot_stride", 10), "snapshot_stride", minimum=1),
    )
    return config.validate()


def config_to_dict(config):
    """Fully-resolved echo of ``config``; round-trips through
    :func:`config_from_dict` exactly."""
    schedule = {"kind": config.schedule.kind}
    if config.schedule.kind == "abrupt":
        schedule["interval"] = config.schedule.interval
    elif config.schedule.kind == "gradual":
        schedule["delta"] = config.schedule.delta
    learners = []
    for cfg in config.learners:
        entry = {"algorithm": cfg.algorithm}
        for field in CONFIG_FIELDS[cfg.algorithm]:
            entry[_FIELD_TO_JSON.get(field, field)] = getattr(cfg, field)
        learners.append(entry)
    return {
        "dims": {"n": config.dims.n, "m": config.dims.m, "T": config.dims.T},
        "learners": learners,
        "schedule": schedule,
        "n_sequences": config.n_sequences,
        "n_replicas": config.n_replicas,
        "seed": config.seed,
        "teacher": None if config.teacher is None else config.teacher.to_dict(),
        "init_jitter": config.init_jitter,
        "snapshots": config.snapshots,
        "snapshot_stride": config.snapshot_stride,
    }


def parse_config(path):
    """Load and validate an experiment config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config file: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return config_from_dict(data)


def _snapshot_columns(dims):
    names = [f"pi_{i}" for i in range(dims.n)]
    names += [f"A_{i}{j}" for i in range(dims.n) for j in range(dims.n)]
    names += [f"B_{i}{a}" for i in range(dims.n) for a in range(dims.m)]
    return names


def _snapshot_values(params):
    return np.concatenate([params.pi, params.A.ravel(), params.B.ravel()])


def _write_curve_csv(path, curve, dims, with_snapshots):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        header = ["p", "kl_mean", "kl_stderr", "inf_flag"]
        if with_snapshots:
            header += _snapshot_columns(dims)
        writer.writerow(header)
        for i, p in enumerate(curve.p):
            row = [
                str(int(p)),
                repr(float(curve.kl_mean[i])),
                repr(float(curve.kl_stderr[i])),
                str(int(curve.inf_flags[i])),
            ]
            if with_snapshots:
                if int(p) in curve.snapshots:
                    row += [repr(float(v)) for v in _snapshot_values(curve.snapshots[int(p)])]
                else:
                    row += [""] * len(_snapshot_columns(dims))
            writer.writerow(row)


def run(config, out_dir, n_jobs=1):
    """Execute ``config`` and write CSVs plus ``manifest.json`` to ``out_dir``.

    Returns the manifest as a dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_experiment(config, n_jobs=n_jobs)
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "threads": n_jobs,
        "config": config_to_dict(config),
        "learners": [],
    }
    for index, result in enumerate(results):
        csv_name = f"{index}_{result.config.algorithm}.csv"
        _write_curve_csv(out / csv_name, result.curve, config.dims, config.snapshots)
        manifest["learners"].append(
            {
                "index": index,
                "algorithm": result.config.algorithm,
                "csv": csv_name,
                "wall_clock_seconds": result.wall_clock_seconds,
            }
        )
    with open(out / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    return manifest


def _load_manifest(path):
    try:
        with open(path) as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise RuntimeError(f"cannot read manifest {path}: {exc}") from None


def _read_curve(csv_path):
    with open(csv_path, newline="") as handle:
        reader = csv.DictReader(handle)
        p, kl = [], []
        for row in reader:
            p.append(int(row["p"]))
            kl.append(float(row["kl_mean"]))
    return np.asarray(p, dtype=np.float64), np.asarray(kl)


def compare(manifest_paths, stream=None):
    """Print a final-KL / area-under-curve / wall-clock summary table.

    All manifests must share dims and schedule; rows follow the order
    of the inputs and each manifest's learner list.
    """
    stream = stream or sys.stdout
    if len(manifest_paths) < 2:
        raise RuntimeError("compare needs at least 2 manifests")
    manifests = [(Path(p), _load_manifest(p)) for p in manifest_paths]
    reference = manifests[0][1]["config"]
    for path, manifest in manifests[1:]:
        for key in ("dims", "schedule"):
            if manifest["config"][key] != reference[key]:
                raise RuntimeError(
                    f"incompatible manifests: {path} differs from "
                    f"{manifests[0][0]} in {key}"
                )
    rows = []
    for path, manifest in manifests:
        for entry in manifest["learners"]:
            p, kl = _read_curve(path.parent / entry["csv"])
            rows.append(
                (
                    str(path),
                    entry["algorithm"],
                    kl[-1],
                    float(np.trapezoid(kl, p)),
                    entry["wall_clock_seconds"],
                )
            )
    header = f"{'manifest':<32} {'learner':<8} {'final_kl':>14} {'auc':>14} {'wall_clock_s':>14}"
    print(header, file=stream)
    print("-" * len(header), file=stream)
    for source, algorithm, final_kl, auc, wall in rows:
        print(
            f"{source:<32} {algorithm:<8} {final_kl:>14.6g} {auc:>14.6g} {wall:>14.6g}",
            file=stream,
        )
    return rows


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="onlinehmm",
        description="Teacher-student experiments for online HMM learners.",
        epilog=_DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser(
        "run",
        help="execute an experiment config",
        epilog=_DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    run_parser.add_argument("--config", required=True, help="experiment config JSON file")
    run_parser.add_argument("--out", required=True, help="output directory")
    run_parser.add_argument(
        "--seed", type=int, default=None, help="override the config's master seed"
    )
    run_parser.add_argument(
        "--threads", type=int, default=1, help="replica worker processes (default 1)"
    )

    compare_parser = sub.add_parser("compare", help="summarize two or more run manifests")
    compare_parser.add_argument("manifests", nargs="+", help="manifest.json files")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = parse_config(args.config)
            if args.seed is not None:
                config.seed = args.seed
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
        try:
            manifest = run(config, args.out, n_jobs=args.threads)
        except Exception as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for entry in manifest["learners"]:
            print(f"wrote {Path(args.out) / entry['csv']}")
        print(f"wrote {Path(args.out) / 'manifest.json'}")
        return 0
    try:
        compare(args.manifests)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
