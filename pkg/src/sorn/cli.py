"""Command-line entry point: ``sorn <command> [options]``.

Every command accepts the flat run-config flags (``--learning-rate``,
``--window-length``, ``--lambda``, ...), a ``--config`` JSON file and
``--set KEY=JSON`` overrides. Precedence is flag > ``--set`` > config file >
``SORN_SEED`` (seed only) > built-in default. Each run writes its resolved
config next to its outputs.

Exit codes: 0 success, 1 internal error, 2 invalid input or config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DistributionSeries, bin_events, get_scheme, normalize, read_events_csv, read_labels,
                   read_series, write_series)
from .model import SornModel, TrainConfig
from .scoring import ScoreReport, anomaly_score, choose_threshold, normalize_rows, parse_policy, read_scores, write_scores
from .synth import SynthSpec, generate
from .training import train

log = logging.getLogger("sorn")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2
MALFORMED_LIMIT = 0.01

TRAIN_KEYS = [f.name for f in dataclasses.fields(TrainConfig) if f.name != "seed"]
SYNTH_KEYS = [f.name for f in dataclasses.fields(SynthSpec) if f.name != "seed"]
EXTRA_DEFAULTS = {"seed": 0, "train_fraction": 0.7, "point_adjust": False}
# structured values are only settable through --config or --set
STRUCTURED_KEYS = {"tones", "segments"}
FLAG_ALIASES = {"lam": ["--lambda"]}


class InvalidInput(Exception):
    """Raised for user errors; mapped to exit code 2."""


# ------------------------------------------------------------------ config


def default_run_config() -> dict:
    cfg = dict(EXTRA_DEFAULTS)
    tc = TrainConfig().to_dict()
    cfg.update({k: tc[k] for k in TRAIN_KEYS})
    sd = dataclasses.asdict(SynthSpec())
    cfg.update({k: sd[k] for k in SYNTH_KEYS})
    cfg["tones"] = [list(t) for t in cfg["tones"]]
    return cfg


def _flag_type(default):
    if isinstance(default, bool):
        return None
    if isinstance(default, int):
        return int
    if isinstance(default, float) or default is None:
        return float
    return str


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run config")
    g.add_argument("--config", type=Path, help="JSON file of run-config keys")
    g.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="override any run-config key, e.g. --set 'tones=[[40,288]]'")
    for key, default in default_run_config().items():
        if key in STRUCTURED_KEYS:
            continue
        names = ["--" + key.replace("_", "-")] + FLAG_ALIASES.get(key, [])
        kind = _flag_type(default)
        if kind is None:
            g.add_argument(*names, dest=f"cfg_{key}", action=argparse.BooleanOptionalAction,
                           default=argparse.SUPPRESS)
        else:
            g.add_argument(*names, dest=f"cfg_{key}", type=kind, default=argparse.SUPPRESS,
                           metavar=key.upper())


def resolve_config(args, env=None) -> dict:
    env = os.environ if env is None else env
    cfg = default_run_config()
    known = set(cfg)
    layered: dict = {}
    if getattr(args, "config", None) is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise InvalidInput(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise InvalidInput("config file must hold a JSON object")
        layered.update(file_cfg)
    if "seed" not in layered and env.get("SORN_SEED"):
        try:
            layered["seed"] = int(env["SORN_SEED"])
        except ValueError:
            raise InvalidInput(f"SORN_SEED must be an integer, got {env['SORN_SEED']!r}") from None
    for item in getattr(args, "set", []) or []:
        key, eq, raw = item.partition("=")
        if not eq:
            raise InvalidInput(f"--set expects KEY=JSON, got {item!r}")
        try:
            layered[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            layered[key.strip()] = raw
    for name, value in vars(args).items():
        if name.startswith("cfg_"):
            layered[name[4:]] = value
    unknown = sorted(set(layered) - known)
    if unknown:
        raise InvalidInput(f"unknown config keys: {unknown}")
    cfg.update(layered)
    # validate eagerly so every command fails fast on a bad config
    train_config(cfg)
    synth_spec(cfg)
    parse_policy(cfg["threshold_policy"])
    if not 0 < cfg["train_fraction"] <= 1:
        raise InvalidInput("train_fraction must lie in (0, 1]")
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig.from_dict({**{k: cfg[k] for k in TRAIN_KEYS}, "seed": int(cfg["seed"])})
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"invalid training config: {exc}") from None


def synth_spec(cfg: dict) -> SynthSpec:
    try:
        return SynthSpec.from_dict({**{k: cfg[k] for k in SYNTH_KEYS}, "seed": int(cfg["seed"])})
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"invalid generator spec: {exc}") from None


def write_run_config(path, command: str, cfg: dict, **inputs) -> Path:
    path = Path(path)
    payload = {"command": command, "version": __version__, "config": cfg,
               "inputs": {k: str(v) for k, v in inputs.items() if v is not None}}
    path.write_text(json.dumps(payload, indent=2, default=str))
    return path


def _beside(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _load_series(path) -> DistributionSeries:
    try:
        return normalize(read_series(path))
    except FileNotFoundError as exc:
        raise InvalidInput(f"file not found: {exc.filename}") from None


def _load_model(path) -> SornModel:
    try:
        return SornModel.load(path)
    except FileNotFoundError:
        raise InvalidInput(f"checkpoint not found: {path}") from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"{path} is not a valid checkpoint: {exc}") from None


def _check_compatible(model: SornModel, series: DistributionSeries) -> None:
    if model.dim != series.dim:
        raise InvalidInput(f"checkpoint expects D={model.dim} but the series has D={series.dim}")
    if model.scheme is not None:
        a, b = model.scheme.to_dict(), series.scheme.to_dict()
        if a["edges"] != b["edges"] or a["overflow"] != b["overflow"]:
            raise InvalidInput(f"checkpoint interval scheme {a} does not match the series scheme {b}")


def _series_scores(model: SornModel, series: DistributionSeries) -> tuple[np.ndarray, dict]:
    rec = model.reconstruct(series.proportions)
    recon = normalize_rows(rec["reconstruction"])
    scores = anomaly_score(series.proportions, recon, series.scheme.midpoints)
    # slots without tasks carry no evidence either way
    scores[series.missing] = 0.0
    return scores, rec


# ---------------------------------------------------------------- commands


def cmd_generate(args, cfg) -> int:
    spec = synth_spec(cfg)
    ds = generate(spec)
    paths = ds.write(args.out, args.stem)
    paths["config"] = write_run_config(Path(args.out) / f"{args.stem}.run_config.json", "generate", cfg)
    print(f"generated T={spec.T} D={ds.series.dim} anomaly ratio={ds.labels.mean():.4f}")
    for k, v in paths.items():
        print(f"  {k}: {v}")
    return EXIT_OK


def cmd_ingest(args, cfg) -> int:
    scheme = get_scheme(cfg["scheme"])
    slot = float(cfg["slot_duration"])
    try:
        events, bad = read_events_csv(args.events)
    except FileNotFoundError:
        raise InvalidInput(f"events file not found: {args.events}") from None
    total = len(events) + len(bad)
    for lineno, why in bad[:20]:
        print(f"{args.events}:{lineno}: malformed row: {why}", file=sys.stderr)
    if len(bad) > 20:
        print(f"... {len(bad) - 20} more malformed rows", file=sys.stderr)
    if total and len(bad) / total > MALFORMED_LIMIT:
        raise InvalidInput(f"{len(bad)} of {total} rows malformed (limit {MALFORMED_LIMIT:.0%})")
    out = Path(args.out)
    if not events:
        print(f"warning: {args.events} holds no events; writing an empty series", file=sys.stderr)
        series = DistributionSeries(np.zeros(0), np.zeros((0, scheme.dim), dtype=np.int64), scheme, slot)
        report = {"total": 0, "binned": 0, "out_of_span": 0, "out_of_range": 0}
    else:
        if args.span is not None:
            span = tuple(args.span)
        else:
            ends = np.array([e.end_timestamp for e in events])
            lo = math.floor(ends.min() / slot) * slot
            span = (lo, math.floor(ends.max() / slot) * slot + slot)
        series, rep = bin_events(events, scheme, slot, span)
        report = rep.to_dict()
    filled = int((series.counts.sum(axis=1) > 0).sum())
    report.update({
        "malformed": [{"line": ln, "reason": why} for ln, why in bad],
        "dropped": len(bad) + report["out_of_span"] + report["out_of_range"],
        "slots": len(series),
        "slots_with_tasks": filled,
        "slot_coverage": filled / len(series) if len(series) else 0.0,
    })
    write_series(series, out, use_counts=True)
    _beside(out, ".ingest.json").write_text(json.dumps(report, indent=2))
    write_run_config(_beside(out, ".run_config.json"), "ingest", cfg, events=args.events)
    print(f"binned {report['binned']} of {total} rows into {len(series)} slots "
          f"(dropped {report['dropped']}, coverage {report['slot_coverage']:.1%})")
    return EXIT_OK


def _train_one(series_path: str, cfg: dict, out_path: str) -> dict:
    series = _load_series(series_path)
    frac = float(cfg["train_fraction"])
    cut = len(series) if frac >= 1 else int(math.floor(len(series) * frac))
    if cut < 1:
        raise InvalidInput("training prefix is empty")
    model = train(series.slice(0, cut), train_config(cfg))
    model.meta = {"series": str(series_path), "T": len(series), "t0": float(series.timestamps[0]),
                  "train_slots": cut, "train_fraction": frac}
    out = Path(out_path)
    model.save(out)
    write_run_config(_beside(out, ".run_config.json"), "train", cfg, series=series_path)
    return {"checkpoint": str(out), "epochs": len(model.loss_trace), "final_loss": model.loss_trace[-1],
            "sigma": [float(s.value) for s in model.sigmas]}


def cmd_train(args, cfg) -> int:
    paths = [str(p) for p in args.series]
    out = Path(args.out)
    if len(paths) == 1:
        jobs = [(paths[0], str(out))]
    else:
        out.mkdir(parents=True, exist_ok=True)
        stems = [Path(p).stem for p in paths]
        if len(set(stems)) != len(stems):
            raise InvalidInput("subset series need distinct file names")
        jobs = [(p, str(out / f"{s}.model.json")) for p, s in zip(paths, stems)]
    workers = max(1, int(args.parallel_subsets))
    if workers == 1 or len(jobs) == 1:
        results = [_train_one(p, cfg, o) for p, o in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_train_one, [p for p, _ in jobs], [cfg] * len(jobs), [o for _, o in jobs]))
    for r in results:
        print(f"{r['checkpoint']}: {r['epochs']} epochs, final loss {r['final_loss']:.6g}, "
              f"sigma {np.round(r['sigma'], 4).tolist()}")
    return EXIT_OK


def _train_prefix(model: SornModel, series: DistributionSeries) -> int:
    meta = model.meta or {}
    if meta.get("T") == len(series) and len(series) and meta.get("t0") == float(series.timestamps[0]):
        return int(meta.get("train_slots", 0))
    return 0


def cmd_score(args, cfg) -> int:
    model = _load_model(args.checkpoint)
    series = _load_series(args.series)
    _check_compatible(model, series)
    scores, _ = _series_scores(model, series)
    n_train = _train_prefix(model, series)
    policy = parse_policy(cfg["threshold_policy"])
    train_scores = scores[:n_train]
    if policy.kind == "quantile" and args.train_series is not None:
        ref = _load_series(args.train_series)
        _check_compatible(model, ref)
        train_scores = _series_scores(model, ref)[0]
    labels = None
    if args.labels is not None:
        labels = _aligned_labels(args.labels, series.timestamps)
    if policy.kind == "quantile" and train_scores.size == 0:
        raise InvalidInput("the quantile policy needs training scores: score the training series "
                           "or pass --train-series")
    if policy.kind == "best_f1" and labels is None:
        raise InvalidInput("the best_f1 policy needs --labels")
    th = choose_threshold(policy, train_scores, scores, labels)
    pred = (scores > th).astype(np.int64)
    out = Path(args.out)
    write_scores(out, series.timestamps, scores, pred)
    meta = {"threshold": th, "threshold_policy": str(policy), "train_slots": n_train,
            "checkpoint": str(args.checkpoint), "series": str(args.series)}
    _beside(out, ".meta.json").write_text(json.dumps(meta, indent=2))
    write_run_config(_beside(out, ".run_config.json"), "score", cfg, checkpoint=args.checkpoint,
                     series=args.series, labels=args.labels, train_series=args.train_series)
    print(f"scored {len(scores)} slots; threshold {th:.6g} ({policy}); {int(pred.sum())} flagged")
    return EXIT_OK


def _aligned_labels(path, timestamps) -> np.ndarray:
    try:
        ts, labels = read_labels(path)
    except FileNotFoundError:
        raise InvalidInput(f"labels file not found: {path}") from None
    if ts.shape != np.shape(timestamps) or not np.allclose(ts, timestamps, rtol=0, atol=1e-9):
        raise InvalidInput(f"{path}: label timestamps do not match the scored slots")
    return labels


def cmd_eval(args, cfg) -> int:
    try:
        ts, scores, _ = read_scores(args.scores)
    except FileNotFoundError:
        raise InvalidInput(f"scores file not found: {args.scores}") from None
    labels = _aligned_labels(args.labels, ts)
    meta_path = _beside(Path(args.scores), ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    n_train = int(meta.get("train_slots", 0))
    start = 0 if args.include_train else n_train
    if start >= len(scores):
        raise InvalidInput("no slots left to evaluate after the training prefix")
    policy = parse_policy(cfg["threshold_policy"])
    if policy.kind == "quantile" and n_train == 0:
        raise InvalidInput("the quantile policy needs the training prefix recorded by `score`")
    report = ScoreReport.build(scores[start:], policy, scores[:n_train], labels[start:], bool(cfg["point_adjust"]))
    metrics = report.metrics()
    metrics["evaluated_slots"] = [start, len(scores)]
    out = Path(args.out)
    out.write_text(json.dumps(metrics, indent=2))
    write_run_config(_beside(out, ".run_config.json"), "eval", cfg, scores=args.scores, labels=args.labels)
    print(f"precision {metrics['precision']:.4f} recall {metrics['recall']:.4f} f1 {metrics['f1']:.4f}")
    print(f"threshold {metrics['threshold']:.6g} from {metrics['threshold_policy']}: "
          f"{metrics['threshold_provenance']}")
    return EXIT_OK


def cmd_verify_theorems(args, cfg) -> int:
    from .theorems import verify_all

    report = verify_all(seed=int(cfg["seed"]))
    for name in ("two_tone", "fourier", "shift_invariance", "dominance"):
        part = report[name]
        detail = {k: v for k, v in part.items() if k != "passed"}
        print(f"{'PASS' if part['passed'] else 'FAIL'} {name}: {json.dumps(detail, default=float)}")
    out = Path(args.out)
    out.write_text(json.dumps(report, indent=2, default=float))
    write_run_config(_beside(out, ".run_config.json"), "verify-theorems", cfg)
    return EXIT_OK if report["passed"] else EXIT_INTERNAL


def cmd_export_plots(args, cfg) -> int:
    from .plots import export_plots

    model = _load_model(args.checkpoint)
    series = _load_series(args.series)
    _check_compatible(model, series)
    scores, rec = _series_scores(model, series)
    th = None
    if args.scores is not None:
        ts, scores, _ = read_scores(args.scores)
        if len(ts) != len(series):
            raise InvalidInput("scores and series differ in length")
        meta_path = _beside(Path(args.scores), ".meta.json")
        if meta_path.exists():
            th = json.loads(meta_path.read_text()).get("threshold")
    labels = _aligned_labels(args.labels, series.timestamps) if args.labels is not None else None
    mids = series.scheme.midpoints
    paths = export_plots(args.out, series.timestamps, scores, series.proportions @ mids,
                         normalize_rows(rec["reconstruction"]) @ mids, rec["trust"], th, labels,
                         rec["layers"] @ mids)
    write_run_config(Path(args.out) / "plots.run_config.json", "export-plots", cfg,
                     checkpoint=args.checkpoint, series=args.series, scores=args.scores, labels=args.labels)
    for k, v in paths.items():
        print(f"  {k}: {v}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sorn", description="Cluster-wide task slowdown detection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and show tracebacks")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _add_config_flags(sp)
        sp.set_defaults(func=func)
        return sp

    sp = command("generate", cmd_generate, "write a synthetic dataset")
    sp.add_argument("--out", required=True, type=Path, help="output directory")
    sp.add_argument("--stem", default="sync", help="file name stem")

    sp = command("ingest", cmd_ingest, "bin a task-event CSV into a distribution series")
    sp.add_argument("events", type=Path, help="CSV with task_id,end_timestamp,duration_min")
    sp.add_argument("--out", required=True, type=Path, help="series CSV to write")
    sp.add_argument("--span", nargs=2, type=float, metavar=("START", "END"),
                    help="time range in minutes (default: the events' range on the slot grid)")

    sp = command("train", cmd_train, "train a model on a series")
    sp.add_argument("--series", required=True, nargs="+", type=Path,
                    help="series CSV; several files train one model per subset")
    sp.add_argument("--out", required=True, type=Path, help="checkpoint (one series) or directory")
    sp.add_argument("--parallel-subsets", type=int, default=1, metavar="N",
                    help="train up to N subset models in parallel processes")

    sp = command("score", cmd_score, "score every slot of a series")
    sp.add_argument("--checkpoint", required=True, type=Path)
    sp.add_argument("--series", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path, help="scores CSV to write")
    sp.add_argument("--labels", type=Path, help="labels CSV (needed by best_f1)")
    sp.add_argument("--train-series", type=Path, help="reference series for the quantile policy")

    sp = command("eval", cmd_eval, "compute precision, recall and F1 from scores and labels")
    sp.add_argument("--scores", required=True, type=Path)
    sp.add_argument("--labels", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path, help="metrics JSON to write")
    sp.add_argument("--include-train", action="store_true", help="also evaluate the training prefix")

    sp = command("verify-theorems", cmd_verify_theorems, "run the closed-form vs quadrature checks")
    sp.add_argument("--out", type=Path, default=Path("theorems.json"), help="report JSON to write")

    sp = command("export-plots", cmd_export_plots, "render score, reconstruction and weight traces to SVG")
    sp.add_argument("--checkpoint", required=True, type=Path)
    sp.add_argument("--series", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path, help="output directory")
    sp.add_argument("--scores", type=Path, help="scores CSV (default: recompute)")
    sp.add_argument("--labels", type=Path)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (InvalidInput, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
