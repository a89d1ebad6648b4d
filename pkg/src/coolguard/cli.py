"""Command-line entry points: simulate, train, evaluate, serve, replay.

Every command accepts --config FILE, a JSON object of generator overrides
(SimConfig field names). Explicit flags win over the config file. Exit
codes: 0 on success, 2 on any validation or input error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import analytics, forest, lstm
from .features import chronological_split, fit_norm, make_windows
from .model import NS_PER_MINUTE, ParseError, read_dataset, write_dataset
from .simgen import ConfigError, SimConfig, generate_dataset, leak_flags

HOLDOUT_MINUTES = 1440
DEFAULT_CHECKPOINT = "checkpoints/forecaster.npz"
DEFAULT_FOREST = "checkpoints/detector.json"


class CliError(Exception):
    """Validation failure surfaced to the user; exits with code 2."""


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"config file is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise CliError("config file must contain a JSON object")
    return raw


def _build_sim_config(args: argparse.Namespace) -> SimConfig:
    overrides = _load_config(getattr(args, "config", None))
    fields = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = sorted(set(overrides) - fields)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    # Tuple-typed fields arrive from JSON as lists.
    for key, value in list(overrides.items()):
        if isinstance(value, list):
            overrides[key] = tuple(value)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "days", None) is not None:
        if args.days <= 0:
            raise CliError("--days must be positive")
        overrides["duration_minutes"] = int(round(args.days * 1440))
    try:
        return SimConfig(**overrides)
    except (TypeError, ConfigError) as exc:
        raise CliError(str(exc))


def _config_header(cfg: SimConfig) -> list[str]:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return [f"generator config: {blob}", "prng: PCG64 (per-minute SeedSequence streams)"]


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _build_sim_config(args)
    readings, events = generate_dataset(cfg)
    flags = leak_flags(readings, events)
    labels = None
    if args.labels:
        windows, _ = make_windows(readings, events, fit_norm(readings))
        by_end = {w.end_timestamp: w.time_to_leak for w in windows}
        labels = [by_end.get(r.timestamp, 8.0) for r in readings]
    write_dataset(args.out, readings, flags, labels, header_comments=_config_header(cfg))
    print(f"wrote {len(readings)} readings, {len(events)} leak episodes -> {args.out}")
    if args.publish:
        _publish_rows(cfg, readings, args.speedup)
    return 0


def _publish_rows(cfg: SimConfig, readings, speedup: float) -> None:
    """Replay dataset rows through the in-process broker at the given pace

    (one simulated minute per 60/speedup wall seconds); bridges to MQTT when
    COOLGUARD_MQTT_URL is set.
    """
    from .broker import Broker
    from .model import serialize_reading

    if speedup <= 0:
        raise CliError("--speedup must be positive")
    broker = Broker()
    publisher = broker.publisher("simulate")
    topic = f"dc/{cfg.rack_id}/telemetry"
    interval = 60.0 / speedup
    try:
        for reading in readings:
            publisher.publish(topic, serialize_reading(reading), qos=1).wait(5.0)
            time.sleep(interval)
    finally:
        broker.stop()
    print(f"published {len(readings)} readings to {topic}")


def _read_or_generate(args: argparse.Namespace):
    if getattr(args, "data", None):
        try:
            readings, flags, _ = read_dataset(args.data)
        except FileNotFoundError:
            raise CliError(f"dataset not found: {args.data}")
        except ParseError as exc:
            raise CliError(f"dataset unreadable: {exc}")
        if not readings:
            raise CliError(f"dataset is empty: {args.data}")
        from .simgen import events_from_flags

        return readings, events_from_flags(readings, flags), flags
    cfg = _build_sim_config(args)
    readings, events = generate_dataset(cfg)
    return readings, events, leak_flags(readings, events)


def _cmd_train(args: argparse.Namespace) -> int:
    import numpy as np

    readings, events, flags = _read_or_generate(args)
    train_span = int((len(readings) - HOLDOUT_MINUTES) * 0.8)
    if train_span < 120:
        raise CliError("dataset too short to train on (need > ~1 day)")
    stats = fit_norm(readings[:train_span])
    windows, _ = make_windows(readings, events, stats)
    split = chronological_split(windows, 0.8, holdout_minutes=HOLDOUT_MINUTES)
    log = print if args.verbose else None
    model, curve = lstm.train(split.train, split.validation, max_epochs=args.max_epochs, log=log)
    cal = lstm.calibrate(model, split.validation)
    ckpt = Path(args.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    lstm.save_checkpoint(ckpt, model, stats, cal)

    x = np.array([r.channel_values() for r in readings])
    fmodel = forest.fit(x, np.array(flags, dtype=np.int8))
    fpath = Path(args.forest)
    fpath.parent.mkdir(parents=True, exist_ok=True)
    forest.dump(fmodel, fpath)

    summary = {
        "epochs": len(curve),
        "best_val_mse": min(c.val_mse for c in curve),
        "eps90_hours": cal.eps90,
        "forest_train_f1": fmodel.train_f1,
        "checkpoint": str(ckpt),
        "forest": str(fpath),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _load_artifacts(args: argparse.Namespace):
    try:
        model, stats, cal = lstm.load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {args.checkpoint} (run `coolguard train` first)")
    if cal is None:
        raise CliError("checkpoint has no calibration; retrain with `coolguard train`")
    try:
        fmodel = forest.load(args.forest)
    except FileNotFoundError:
        raise CliError(f"detector model not found: {args.forest} (run `coolguard train` first)")
    return model, stats, cal, fmodel


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    import numpy as np

    from .features import windows_to_arrays

    readings, events, flags = _read_or_generate(args)
    if not events:
        raise CliError("dataset has no leak episodes; nothing to evaluate")
    model, stats, cal, fmodel = _load_artifacts(args)

    x = np.array([r.channel_values() for r in readings])
    votes = fmodel.vote_score(x)
    det_report = analytics.evaluate_detector(
        lambda i: bool(votes[i] >= 0.5), flags, events, readings[0].timestamp
    )

    windows, _ = make_windows(readings, events, stats)
    last_ts = readings[-1].timestamp
    test_windows = [
        w for w in windows if w.end_timestamp > last_ts - HOLDOUT_MINUTES * NS_PER_MINUTE
    ]
    fc_report = analytics.evaluate_forecaster(model, cal, test_windows)

    # Coverage: forecast alerts from every window, detections from the forest.
    from .model import DetectionResult

    x_all, _, _ = windows_to_arrays(windows)
    preds = model.predict_batch(x_all)
    forecast_alerts = []
    for w, est in zip(windows, preds):
        prob = lstm.prob_within(cal, float(est), 4.0)
        if prob > 0.8:
            forecast_alerts.append((w.end_timestamp, prob))
    detections = [
        DetectionResult(
            issued_at=readings[i].timestamp,
            rack_id=readings[i].rack_id,
            is_leak=True,
            vote_score=float(votes[i]),
        )
        for i in np.flatnonzero(votes >= 0.5)
    ]
    cov_report = analytics.integrated_coverage(forecast_alerts, detections, events)
    energy = analytics.energy_savings(*analytics.DEFAULT_FLEET, cov_report.integrated_coverage)

    leak_rows = x[np.array(flags, dtype=bool)]
    norm_rows = x[~np.array(flags, dtype=bool)]
    channel_rows = []
    for i, name in enumerate(("pressure", "flow", "humidity", "temperature")):
        t, p = analytics.welch_t(leak_rows[:, i], norm_rows[:, i])
        channel_rows.append(
            [name, f"{analytics.cohen_d(leak_rows[:, i], norm_rows[:, i]):.4f}",
             f"{t:.4f}", f"{p:.6e}",
             f"{float(leak_rows[:, i].mean()):.4f}", f"{float(norm_rows[:, i].mean()):.4f}"]
        )

    report = {
        "dataset": {
            "readings": len(readings),
            "episodes": len(events),
            "leak_fraction": float(np.mean(flags)),
        },
        "detector": det_report.as_dict(),
        "forecaster": fc_report.as_dict(),
        "coverage": cov_report.as_dict(),
        "energy_savings_kwh": energy,
    }

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    c = det_report.confusion
    _write_csv(out_dir / "confusion.csv",
               ["tp", "fp", "fn", "tn", "precision", "recall", "f1", "accuracy"],
               [[c.tp, c.fp, c.fn, c.tn, f"{c.precision:.4f}", f"{c.recall:.4f}",
                 f"{c.f1:.4f}", f"{c.accuracy:.4f}"]])
    _write_csv(out_dir / "channel_stats.csv",
               ["channel", "cohen_d", "welch_t", "welch_p", "leak_mean", "normal_mean"],
               channel_rows)
    _write_csv(out_dir / "tolerance.csv",
               ["probability_level", "horizon_hours", "tolerance_minutes", "accuracy", "n"],
               [[a.probability_level, a.horizon_hours, a.tolerance_minutes,
                 f"{a.accuracy:.4f}", a.n] for a in fc_report.tolerance_accuracy])
    lat = sorted(det_report.detection_latency_minutes)
    _write_csv(out_dir / "latency.csv",
               ["episode", "detection_latency_minutes"],
               [[i, v] for i, v in enumerate(lat)])
    _write_csv(out_dir / "coverage.csv",
               ["integrated_coverage", "forecast_covered", "detection_covered",
                "uncovered", "energy_savings_kwh"],
               [[f"{cov_report.integrated_coverage:.4f}",
                 cov_report.attribution.get("forecast", 0),
                 cov_report.attribution.get("detection", 0),
                 cov_report.attribution.get("uncovered", 0),
                 f"{energy:.2f}"]])
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import PipelineConfig, PipelineService, create_app

    cfg = _build_sim_config(args)
    pipeline = PipelineConfig(
        sim=cfg,
        checkpoint_path=args.checkpoint,
        forest_path=args.forest,
        data_dir=args.data_dir,
        speedup=args.speedup,
        host=args.host,
        port=args.port,
        static_dir=args.static,
    )
    service = PipelineService(pipeline)
    try:
        service.start()
    except Exception as exc:
        raise CliError(str(exc))
    app = create_app(service)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        service.stop()
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    from .service import replay

    try:
        report = replay(args.data, args.checkpoint, args.forest)
    except FileNotFoundError as exc:
        raise CliError(str(exc))
    except (ValueError, ParseError) as exc:
        raise CliError(str(exc))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON file of generator overrides")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--days", type=float, help="simulated span in days")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coolguard",
        description="Leak forecasting and detection for liquid-cooled GPU racks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a telemetry dataset")
    _add_config_flags(p_sim)
    p_sim.add_argument("--out", required=True, metavar="FILE", help="CSV output path")
    p_sim.add_argument("--labels", action="store_true",
                       help="include the time_to_leak_h label column")
    p_sim.add_argument("--speedup", type=float, default=60.0,
                       help="stream rate for --publish (simulated seconds per wall second)")
    p_sim.add_argument("--publish", action="store_true",
                       help="also stream the readings through the broker")
    p_sim.set_defaults(func=_cmd_simulate)

    p_train = sub.add_parser("train", help="train forecaster and detector")
    _add_config_flags(p_train)
    p_train.add_argument("--data", metavar="FILE", help="dataset CSV (default: generate)")
    p_train.add_argument("--checkpoint", default=DEFAULT_CHECKPOINT, metavar="FILE")
    p_train.add_argument("--forest", default=DEFAULT_FOREST, metavar="FILE")
    p_train.add_argument("--max-epochs", type=int, default=50)
    p_train.add_argument("--verbose", action="store_true", help="log per-epoch stats")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="score trained models against a dataset")
    _add_config_flags(p_eval)
    p_eval.add_argument("--data", metavar="FILE", help="dataset CSV (default: generate)")
    p_eval.add_argument("--checkpoint", default=DEFAULT_CHECKPOINT, metavar="FILE")
    p_eval.add_argument("--forest", default=DEFAULT_FOREST, metavar="FILE")
    p_eval.add_argument("--out-dir", default="eval-out", metavar="DIR",
                        help="directory for report.json and CSV tables")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_serve = sub.add_parser("serve", help="run the live pipeline and API")
    _add_config_flags(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--checkpoint", default=DEFAULT_CHECKPOINT, metavar="FILE")
    p_serve.add_argument("--forest", default=DEFAULT_FOREST, metavar="FILE")
    p_serve.add_argument("--data-dir", default="data", metavar="DIR",
                         help="time-series store directory")
    p_serve.add_argument("--speedup", type=float, default=60.0,
                         help="simulated seconds per wall second")
    p_serve.add_argument("--static", metavar="DIR", default="frontend/dist",
                         help="operator console build to serve at /")
    p_serve.set_defaults(func=_cmd_serve)

    p_replay = sub.add_parser("replay", help="re-run the pipeline over a recorded dataset")
    p_replay.add_argument("--data", required=True, metavar="FILE")
    p_replay.add_argument("--checkpoint", default=DEFAULT_CHECKPOINT, metavar="FILE")
    p_replay.add_argument("--forest", default=DEFAULT_FOREST, metavar="FILE")
    p_replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
