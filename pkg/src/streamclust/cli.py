"""Command-line interface.

Subcommands
-----------
replay       Replay a recorded stream file under one algorithm.
simulate     Generate a seeded synthetic stream and replay it.
compare      Replay the same stream under several algorithms; one table.
fingerprint  Describe clusters by cosine similarity to keyword vectors.

Exit codes: 0 success, 1 runtime failure (bad stream contents, algorithm
errors), 2 usage or configuration error (bad flags, unreadable paths,
missing or unknown config keys).

File formats
------------
Stream files are JSON lines: a header ``{"dim": <int>, "labels": <bool>}``
followed by one record per point:
``{"id": "...", "t": <float>, "vector": [...], "label": <int|null>}``
(``label`` only when the header declares labels).  Records must be in
(jitter-tolerant) time order.

Config files are INI.  ``[replay]`` needs ``pretrain_window`` and
``target_window``; ``[metrics]`` optionally sets ``distance``,
``distinctness_combine`` and ``contingency_rank``; each algorithm reads its
own section — see ``_SCHEMAS`` below for the exact keys (``lambda`` is the
decay rate).  Unknown keys are rejected.

Outputs land in ``--out``: ``report.csv`` (columns exactly ``algorithm,
silhouette,dbi,distinctness,contingency,variance,train_s,predict_s,
clusters``), ``assignments.csv`` (``id,label``; one file per algorithm for
``compare``), optional ``per_cluster.csv``, ``fingerprints.jsonl``.  All
writes are atomic (temp file + rename).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys

import numpy as np

from .base import atomic_write_text
from .core import NOISE, TIME_JITTER, StreamPoint
from .exceptions import InvalidParameterError, OutOfOrderError
from .harness import (
    COMPARE_COLUMNS,
    ReplayConfig,
    SyntheticStreamSpec,
    compare,
    generate_stream,
    replay,
)
from .metrics import contingency, distinctness, fingerprint, variance, write_fingerprint_file

__all__ = ["main", "console_main", "ingest", "write_stream"]


class UsageError(Exception):
    """Bad flags, paths, or configuration; exits with status 2."""


# -- stream files ------------------------------------------------------------


def ingest(path):
    """Lazily yield :class:`StreamPoint`s from a JSONL stream file.

    Validates the header, every record's shape against it, and time order.
    Errors carry the line number and, where known, the point id.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: line 1: missing stream header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: line 1: malformed header: {e}") from e
        if (
            not isinstance(header, dict)
            or set(header) != {"dim", "labels"}
            or not isinstance(header.get("dim"), int)
            or isinstance(header.get("dim"), bool)
            or header["dim"] < 1
            or not isinstance(header.get("labels"), bool)
        ):
            raise ValueError(
                f'{path}: line 1: header must be {{"dim": <int>=1>, "labels": <bool>}}'
            )
        dim = header["dim"]
        has_labels = header["labels"]
        allowed = {"id", "t", "vector", "label"} if has_labels else {"id", "t", "vector"}
        last_t = -math.inf
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {lineno}: malformed JSON: {e}") from e
            if not isinstance(rec, dict):
                raise ValueError(f"{path}: line {lineno}: record must be an object")
            unknown = set(rec) - allowed
            if unknown:
                raise ValueError(
                    f"{path}: line {lineno}: unknown record keys {sorted(unknown)}"
                )
            missing = {"id", "t", "vector"} - set(rec)
            if missing:
                raise ValueError(
                    f"{path}: line {lineno}: record lacks keys {sorted(missing)}"
                )
            vec = rec["vector"]
            if not isinstance(vec, list) or len(vec) != dim:
                raise ValueError(
                    f"{path}: line {lineno}: point {rec.get('id')!r} vector must "
                    f"be a list of length {dim}"
                )
            label = rec.get("label")
            if label is not None:
                if not has_labels:
                    raise ValueError(
                        f"{path}: line {lineno}: label present but header says "
                        "labels=false"
                    )
                if not isinstance(label, int) or isinstance(label, bool):
                    raise ValueError(
                        f"{path}: line {lineno}: label must be an int or null"
                    )
            try:
                point = StreamPoint(
                    id=rec["id"], t=rec["t"], x=np.asarray(vec, dtype=np.float64),
                    label=label,
                )
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path}: line {lineno}: {e}") from e
            if point.t < last_t - TIME_JITTER:
                raise OutOfOrderError(
                    f"{path}: line {lineno}: point {point.id!r} at t={point.t!r} "
                    f"arrived after t={last_t!r}"
                )
            last_t = max(last_t, point.t)
            yield point


def write_stream(path, points, dim=None, labels=True):
    """Write points to a JSONL stream file (atomically).

    ``dim`` is taken from the first point unless given; required for an
    empty stream.
    """
    buf = io.StringIO()
    first = True
    for p in points:
        if first:
            if dim is None:
                dim = p.dim
            buf.write(json.dumps({"dim": int(dim), "labels": bool(labels)}) + "\n")
            first = False
        rec = {"id": p.id, "t": p.t, "vector": p.x.tolist()}
        if labels:
            rec["label"] = None if p.label is None else int(p.label)
        buf.write(json.dumps(rec) + "\n")
    if first:
        if dim is None:
            raise ValueError("dim is required to write an empty stream")
        buf.write(json.dumps({"dim": int(dim), "labels": bool(labels)}) + "\n")
    atomic_write_text(path, buf.getvalue())


# -- config files ---------------------------------------------------------------

# section -> key -> (required, parser); `lambda` is the decay rate.
_SCHEMAS = {
    "replay": {
        "pretrain_window": (True, float),
        "target_window": (True, float),
    },
    "metrics": {
        "distance": (False, str),
        "distinctness_combine": (False, str),
        "contingency_rank": (False, str),
    },
    "denstream": {
        "eps": (True, float),
        "beta": (True, float),
        "mu": (True, float),
        "lambda": (True, float),
        "eps_offline": (False, float),
        "assign_radius": (False, float),
    },
    "dbstream": {
        "radius": (True, float),
        "lambda": (True, float),
        "cleanup_interval": (True, float),
        "connectivity": (True, float),
        "min_weight": (False, float),
        "kernel_sigma": (False, float),
    },
    "batch": {
        "eps": (True, float),
        "min_samples": (False, int),
        "metric": (False, str),
    },
}

_STREAM_SCHEMA = {
    "dim": (True, int),
    "components": (True, int),
    "component_std": (True, float),
    "rate": (True, float),
    "duration": (True, float),
    "drift_std": (False, float),
    "birth_rate": (False, float),
    "lifetime_mean": (False, float),
    "noise_fraction": (False, float),
    "mean_box": (False, float),
    "min_separation": (False, float),
}

# config key -> constructor keyword
_PARAM_NAMES = {"lambda": "decay"}


def _read_ini(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise UsageError(f"cannot read config {path!r}: {e}") from e
    except configparser.Error as e:
        raise UsageError(f"bad config {path!r}: {e}") from e
    return parser


def _parse_section(parser, path, section, schema):
    if not parser.has_section(section):
        required = [k for k, (req, _) in schema.items() if req]
        if required:
            raise UsageError(
                f"{path}: missing section [{section}] (required key "
                f"{required[0]!r} and {len(required) - 1} more)"
                if len(required) > 1
                else f"{path}: missing section [{section}] (required key {required[0]!r})"
            )
        return {}
    out = {}
    for key, raw in parser.items(section):
        if key not in schema:
            raise UsageError(
                f"{path}: unknown key {key!r} in section [{section}]"
            )
        _, parse = schema[key]
        raw = raw.strip()
        if raw == "":
            continue
        try:
            out[key] = parse(raw)
        except ValueError as e:
            raise UsageError(
                f"{path}: key {key!r} in [{section}]: cannot parse {raw!r} "
                f"as {parse.__name__}"
            ) from e
    for key, (required, _) in schema.items():
        if required and key not in out:
            raise UsageError(
                f"{path}: missing required key {key!r} in section [{section}]"
            )
    return out


def _check_sections(parser, path, expected):
    unknown = set(parser.sections()) - set(expected)
    if unknown:
        raise UsageError(
            f"{path}: unknown config section [{sorted(unknown)[0]}]"
        )


def _reject_unknown_keys(parser, path, schemas):
    """Flag typo'd keys in *every* present section, parsed or not.

    A run only parses its own algorithm's section, but a stray key in a
    sibling section is still a config mistake the user should hear about.
    """
    for section in parser.sections():
        schema = schemas.get(section)
        if schema is None:
            continue
        for key in parser.options(section):
            if key not in schema:
                raise UsageError(
                    f"{path}: unknown key {key!r} in section [{section}]"
                )


def _load_replay_config(path, algorithm):
    parser = _read_ini(path)
    _check_sections(parser, path, _SCHEMAS)
    _reject_unknown_keys(parser, path, _SCHEMAS)
    rep = _parse_section(parser, path, "replay", _SCHEMAS["replay"])
    met = _parse_section(parser, path, "metrics", _SCHEMAS["metrics"])
    if algorithm not in _SCHEMAS or algorithm in ("replay", "metrics"):
        raise UsageError(f"unknown algorithm {algorithm!r}")
    raw_params = _parse_section(parser, path, algorithm, _SCHEMAS[algorithm])
    params = {_PARAM_NAMES.get(k, k): v for k, v in raw_params.items()}
    try:
        return ReplayConfig(
            algorithm=algorithm,
            pretrain_window=rep["pretrain_window"],
            target_window=rep["target_window"],
            params=params,
            metric=met.get("distance", "euclidean"),
            distinctness_combine=met.get("distinctness_combine", "mean"),
            contingency_rank=met.get("contingency_rank", "similarity"),
        )
    except InvalidParameterError as e:
        raise UsageError(f"{path}: {e}") from e


def _load_stream_spec(path):
    parser = _read_ini(path)
    _check_sections(parser, path, {"stream": None})
    raw = _parse_section(parser, path, "stream", _STREAM_SCHEMA)
    kwargs = {
        "dim": raw["dim"],
        "n_components": raw["components"],
        "component_std": raw["component_std"],
        "rate": raw["rate"],
        "duration": raw["duration"],
    }
    for key in ("drift_std", "birth_rate", "lifetime_mean", "noise_fraction",
                "mean_box", "min_separation"):
        if key in raw:
            kwargs[key] = raw[key]
    try:
        return SyntheticStreamSpec(**kwargs)
    except InvalidParameterError as e:
        raise UsageError(f"{path}: {e}") from e


# -- outputs -------------------------------------------------------------------------


def _fmt_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _write_report(path, table_rows):
    _write_csv(
        path,
        COMPARE_COLUMNS,
        [[row[col] for col in COMPARE_COLUMNS] for row in table_rows],
    )


def _write_assignments(path, assignment):
    _write_csv(
        path, ("id", "label"),
        [(i, int(lab)) for i, lab in zip(assignment.ids, assignment.labels)],
    )


def _read_assignments(path):
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "label"]:
            raise ValueError(f"{path}: expected header 'id,label', got {header!r}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 'id,label'")
            pid, lab = row
            if pid in out:
                raise ValueError(f"{path}: line {lineno}: duplicate id {pid!r}")
            try:
                out[pid] = int(lab)
            except ValueError as e:
                raise ValueError(
                    f"{path}: line {lineno}: label {lab!r} is not an int"
                ) from e
    return out


def _read_keywords(path):
    keywords = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {lineno}: malformed JSON: {e}") from e
            if (
                not isinstance(rec, dict)
                or set(rec) != {"name", "vector"}
                or not isinstance(rec.get("name"), str)
                or not isinstance(rec.get("vector"), list)
            ):
                raise ValueError(
                    f'{path}: line {lineno}: expected {{"name": ..., "vector": [...]}}'
                )
            if rec["name"] in keywords:
                raise ValueError(
                    f"{path}: line {lineno}: duplicate keyword {rec['name']!r}"
                )
            vec = np.asarray(rec["vector"], dtype=np.float64)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(
                    f"{path}: line {lineno}: keyword {rec['name']!r} has dimension "
                    f"{vec.shape[0]}, expected {dim}"
                )
            keywords[rec["name"]] = vec
    if not keywords:
        raise ValueError(f"{path}: no keywords found")
    return keywords


def _per_cluster_rows(algorithm, X, labels, config):
    dis = distinctness(X, labels, combine=config.distinctness_combine)
    con = contingency(X, labels, rank=config.contingency_rank)
    var = variance(X, labels)
    if var is None:
        return []
    rows = []
    for lab in sorted(var.per_cluster):
        rows.append(
            (
                algorithm,
                lab,
                None if dis is None else dis.per_cluster.get(lab),
                None if con is None else con.per_cluster.get(lab),
                var.per_cluster.get(lab),
            )
        )
    return rows


def _target_vectors(points, assignment):
    """Vectors for the assignment's ids, in assignment order."""
    wanted = dict.fromkeys(assignment.ids)
    for p in points:
        if p.id in wanted and wanted[p.id] is None:
            wanted[p.id] = p.x
    missing = [i for i, v in wanted.items() if v is None]
    if missing:
        raise ValueError(f"stream lacks point id {missing[0]!r} from the assignment")
    return np.stack([wanted[i] for i in assignment.ids])


def _ensure_outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {path!r}: {e}") from e
    if not os.path.isdir(path):
        raise UsageError(f"output path {path!r} is not a directory")


# -- subcommands ---------------------------------------------------------------------------


def _row_from_report(algorithm, report):
    return {
        "algorithm": algorithm,
        "silhouette": report.silhouette,
        "dbi": report.dbi,
        "distinctness": report.distinctness,
        "contingency": report.contingency,
        "variance": report.variance,
        "train_s": report.train_seconds,
        "predict_s": report.predict_seconds,
        "clusters": report.n_clusters,
    }


def _replay_to_outputs(points_factory, config, args):
    """Shared tail of replay/simulate: run, write report + assignments."""
    assignment, report = replay(points_factory(), config)
    _ensure_outdir(args.out)
    _write_report(os.path.join(args.out, "report.csv"),
                  [_row_from_report(config.algorithm, report)])
    _write_assignments(os.path.join(args.out, "assignments.csv"), assignment)
    if args.per_cluster:
        rows = []
        if len(assignment):
            X = _target_vectors(points_factory(), assignment)
            rows = _per_cluster_rows(config.algorithm, X, assignment.labels, config)
        _write_csv(
            os.path.join(args.out, "per_cluster.csv"),
            ("algorithm", "cluster", "distinctness", "contingency", "variance"),
            rows,
        )


def _cmd_replay(args):
    config = _load_replay_config(args.config, args.algorithm)
    if not os.path.exists(args.stream):
        raise UsageError(f"stream file {args.stream!r} does not exist")
    _replay_to_outputs(lambda: ingest(args.stream), config, args)


def _cmd_simulate(args):
    config = _load_replay_config(args.config, args.algorithm)
    spec = _load_stream_spec(args.stream_config)
    if args.dump_stream:
        write_stream(args.dump_stream, generate_stream(spec, args.seed),
                     dim=spec.dim, labels=True)
    _replay_to_outputs(lambda: generate_stream(spec, args.seed), config, args)


def _cmd_compare(args):
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if not algorithms:
        raise UsageError("--algorithms must name at least one algorithm")
    if len(set(algorithms)) != len(algorithms):
        raise UsageError("--algorithms lists an algorithm twice")
    configs = [_load_replay_config(args.config, a) for a in algorithms]
    if args.stream is not None:
        if not os.path.exists(args.stream):
            raise UsageError(f"stream file {args.stream!r} does not exist")
        points = list(ingest(args.stream))
    else:
        if args.seed is None:
            raise UsageError("--seed is required with --stream-config")
        spec = _load_stream_spec(args.stream_config)
        points = list(generate_stream(spec, args.seed))
    _ensure_outdir(args.out)
    rows = []
    for config in configs:
        assignment, report = replay(iter(points), config)
        rows.append(_row_from_report(config.algorithm, report))
        _write_assignments(
            os.path.join(args.out, f"assignments_{config.algorithm}.csv"), assignment
        )
    _write_report(os.path.join(args.out, "report.csv"), rows)


def _cmd_fingerprint(args):
    if not os.path.exists(args.stream):
        raise UsageError(f"stream file {args.stream!r} does not exist")
    if not os.path.exists(args.assignments):
        raise UsageError(f"assignments file {args.assignments!r} does not exist")
    if not os.path.exists(args.keywords):
        raise UsageError(f"keywords file {args.keywords!r} does not exist")
    labels_by_id = _read_assignments(args.assignments)
    keywords = _read_keywords(args.keywords)
    sums = {}
    counts = {}
    seen = set()
    for p in ingest(args.stream):
        if p.id not in labels_by_id:
            continue
        seen.add(p.id)
        lab = labels_by_id[p.id]
        if lab == NOISE:
            continue
        if lab in sums:
            sums[lab] = sums[lab] + p.x
            counts[lab] += 1
        else:
            sums[lab] = p.x.copy()
            counts[lab] = 1
    missing = set(labels_by_id) - seen
    if missing:
        raise ValueError(
            f"stream lacks point id {sorted(missing)[0]!r} from the assignments"
        )
    per_cluster = {
        lab: fingerprint(sums[lab] / counts[lab], keywords) for lab in sums
    }
    _ensure_outdir(args.out)
    write_fingerprint_file(
        os.path.join(args.out, "fingerprints.jsonl"), per_cluster
    )


# -- entry point ----------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="streamclust",
        description="Streaming density-based clustering: replay, simulate, "
        "compare, fingerprint.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True,
                       help="INI config file (see module docstring for keys)")
        p.add_argument("--out", required=True, help="output directory")

    p_replay = sub.add_parser("replay", help="replay a recorded stream file")
    p_replay.add_argument("--stream", required=True, help="JSONL stream file")
    p_replay.add_argument("--algorithm", required=True,
                          choices=("denstream", "dbstream", "batch"))
    p_replay.add_argument("--per-cluster", action="store_true",
                          help="also write per_cluster.csv")
    add_common(p_replay)
    p_replay.set_defaults(func=_cmd_replay)

    p_sim = sub.add_parser("simulate", help="generate a synthetic stream and replay it")
    p_sim.add_argument("--stream-config", required=True,
                       help="INI file with a [stream] section")
    p_sim.add_argument("--algorithm", required=True,
                       choices=("denstream", "dbstream", "batch"))
    p_sim.add_argument("--seed", required=True, type=int,
                       help="rng seed (single seed for all randomness)")
    p_sim.add_argument("--per-cluster", action="store_true",
                       help="also write per_cluster.csv")
    p_sim.add_argument("--dump-stream", default=None,
                       help="also write the generated stream to this JSONL file")
    add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_cmp = sub.add_parser("compare", help="replay one stream under several algorithms")
    src = p_cmp.add_mutually_exclusive_group(required=True)
    src.add_argument("--stream", help="JSONL stream file")
    src.add_argument("--stream-config", help="INI file with a [stream] section")
    p_cmp.add_argument("--seed", type=int, default=None,
                       help="rng seed (required with --stream-config)")
    p_cmp.add_argument("--algorithms", required=True,
                       help="comma-separated subset of denstream,dbstream,batch")
    add_common(p_cmp)
    p_cmp.set_defaults(func=_cmd_compare)

    p_fp = sub.add_parser("fingerprint",
                          help="cosine-fingerprint clusters against keyword vectors")
    p_fp.add_argument("--stream", required=True, help="JSONL stream file")
    p_fp.add_argument("--assignments", required=True, help="id,label CSV")
    p_fp.add_argument("--keywords", required=True,
                      help='JSONL of {"name": ..., "vector": [...]}')
    p_fp.add_argument("--out", required=True, help="output directory")
    p_fp.set_defaults(func=_cmd_fingerprint)
    return parser


def main(argv=None):
    """Run the CLI; returns the exit code instead of exiting."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        args.func(args)
        return 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InvalidParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures: bad stream contents, math errors
        print(f"error: {e}", file=sys.stderr)
        return 1


def console_main():
    sys.exit(main())
