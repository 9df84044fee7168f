"""Command-line entry point: ``npfx <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or corrupt files), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .baselines import BASELINES
from .baselines.transport import SinkhornError
from .config import ConfigError, RunConfig
from .eval import (
    build_imputers, dump_flow, format_table, make_masks, run_benchmark, run_elasticity,
)
from .metrics import evaluate
from .model import io as model_io
from .model.train import train
from .odesolve import SolverConfig, SolverError
from .sequence import FrameSequence, IntermittentSequence
from .synthdata import ContainerError, generate, load, read_dataset, save, write_dataset

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    """Every flag overrides the config field named in its help text."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--seed", type=int, help="seed (falls back to config, then NPFX_SEED, then 0)")
    common.add_argument("--report", help="JSON report path [outputs.report]")
    common.add_argument("--no-timestamps", action="store_true",
                        help="omit wall-clock fields from reports [outputs.timestamps=false]")
    common.add_argument("--jobs", type=int, help="worker processes [eval.jobs]")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver", choices=["euler", "rk4", "adaptive"], help="[solver.method]")
    solver.add_argument("--ode-tol", type=float, help="adaptive rtol = atol [solver.rtol, solver.atol]")
    solver.add_argument("--ode-step", type=float, help="fixed step in seconds [solver.step]")

    masking = argparse.ArgumentParser(add_help=False)
    masking.add_argument("--mode", choices=["interp", "extrap", "retro"], help="[mask.mode]")
    masking.add_argument("--rate", type=float, help="fraction of frames dropped [mask.rate]")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="dataset directory [data.dir]")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", help="model file [outputs.model]")

    p = _Parser(prog="npfx", description="Intermittent heatmap sequence imputation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--out", help="output directory [data.dir]")
    g.add_argument("--domain", help="domain preset or config domain name [data.domain]")
    g.add_argument("--windows", type=int, help="[data.windows]")
    g.add_argument("--window-len", type=int, help="[data.window_len]")

    t = sub.add_parser("train", parents=[common, solver, data], help="train a model")
    t.add_argument("--out", help="model file to write [outputs.model]")
    t.add_argument("--epochs", type=int, help="[train.epochs]")
    t.add_argument("--batch-size", type=int, help="[train.batch_size]")
    t.add_argument("--lr", type=float, help="[train.lr]")
    t.add_argument("--mode", choices=["interp", "extrap"], help="[train.mode]")

    i = sub.add_parser("impute", parents=[common, solver, masking, model],
                       help="impute one sequence")
    i.add_argument("--input", help="NPFX1 sequence [data.input]")
    i.add_argument("--query-times", type=_float_list,
                   help="impute at these times, every input frame observed [mask.query_times]")
    i.add_argument("--reverse-order", action="store_true",
                   help="compose frames from the later neighbour backwards [model.reverse_order]")
    i.add_argument("--out", help="output directory [outputs.dir]")

    sub.add_parser("eval", parents=[common, solver, masking, model, data], help="evaluate a model")

    b = sub.add_parser("bench", parents=[common, solver, masking, data], help="compare imputers")
    b.add_argument("--baselines", type=_csv_list,
                   help=f"comma list of {','.join(BASELINES)} and model:PATH [eval.baselines]")

    el = sub.add_parser("elasticity", parents=[common, masking, model, data],
                        help="tolerance sweep")
    el.add_argument("--tols", type=_float_list, help="[eval.tolerances]")

    f = sub.add_parser("flow", parents=[common, solver, masking, model], help="dump motion fields")
    f.add_argument("--input", help="NPFX1 sequence [data.input]")
    f.add_argument("--out", help="output directory [outputs.dir]")
    return p


# -- helpers ------------------------------------------------------------------

def _flag(args, name):
    return getattr(args, name, None)


def _resolve(args) -> RunConfig:
    """Config file, then flags on top; the result is echoed into every report."""
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    elif cfg.seed is None:
        env = os.environ.get("NPFX_SEED")
        try:
            cfg.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise ConfigError(f"NPFX_SEED must be an integer, got {env!r}") from None
    cmd = args.command

    if cmd == "train":
        overrides = {k: _flag(args, k) for k in ("epochs", "batch_size", "lr", "mode")}
        cfg.train = replace(cfg.train, seed=cfg.seed,
                            **{k: v for k, v in overrides.items() if v is not None})
    else:
        if _flag(args, "mode"):
            cfg.mask = replace(cfg.mask, mode=args.mode)
        if _flag(args, "rate") is not None:
            cfg.mask = replace(cfg.mask, rate=args.rate)
    if _flag(args, "query_times"):
        cfg.mask = replace(cfg.mask, query_times=args.query_times)

    if _flag(args, "solver") or _flag(args, "ode_tol") is not None \
            or _flag(args, "ode_step") is not None:
        s = cfg.solver
        tol = args.ode_tol
        cfg.solver = SolverConfig(args.solver or s.method, args.ode_step or s.step,
                                  tol if tol is not None else s.rtol,
                                  tol if tol is not None else s.atol, s.max_evals)
        if cmd == "train":
            cfg.train = replace(cfg.train, solver=cfg.solver)
    if _flag(args, "reverse_order"):
        cfg.model = replace(cfg.model, reverse_order=True)

    for flag, field in (("domain", "domain"), ("windows", "windows"),
                        ("window_len", "window_len"), ("data", "dir"), ("input", "input")):
        if _flag(args, flag) is not None:
            setattr(cfg.data, field, getattr(args, flag))
    if cmd == "gen" and args.out:
        cfg.data.dir = args.out
    if cmd == "train" and args.out:
        cfg.outputs.model = args.out
    if cmd in ("impute", "flow") and args.out:
        cfg.outputs.dir = args.out
    if _flag(args, "model"):
        cfg.outputs.model = args.model

    if _flag(args, "baselines"):
        cfg.eval.baselines = args.baselines
    if _flag(args, "tols"):
        cfg.eval = replace(cfg.eval, tolerances=args.tols)
    if args.jobs is not None:
        cfg.eval = replace(cfg.eval, jobs=args.jobs)
    if args.report:
        cfg.outputs.report = args.report
    if args.no_timestamps:
        cfg.outputs.timestamps = False
    return cfg


def _need(value, what: str):
    if value in (None, ""):
        raise UsageError(f"{what} is required")
    return value


def _jobs(cfg: RunConfig) -> int:
    return cfg.eval.jobs if cfg.eval.jobs is not None else _default_jobs()


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, inf/nan to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


_WALL_KEYS = {"wall_time", "created_at", "elapsed"}


def _strip_wall(obj):
    if isinstance(obj, dict):
        return {k: _strip_wall(v) for k, v in obj.items() if k not in _WALL_KEYS}
    if isinstance(obj, list):
        return [_strip_wall(v) for v in obj]
    return obj


def _emit(args, cfg: RunConfig, body: dict) -> dict:
    report = {"command": args.command, "seed": cfg.seed, "config": cfg.to_dict(), **body}
    if cfg.outputs.timestamps:
        report["created_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    else:
        report = _strip_wall(report)
    report = _clean(report)
    if cfg.outputs.report:
        path = Path(cfg.outputs.report)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _metric_kw(cfg: RunConfig) -> dict:
    m = cfg.metrics
    return {"window": m.window, "k1": m.k1, "k2": m.k2, "data_range": m.data_range}


def _load_model(cfg: RunConfig):
    return model_io.load(_need(cfg.outputs.model, "--model (or outputs.model in the config)"))


def _dataset(cfg: RunConfig):
    return read_dataset(_need(cfg.data.dir, "--data (or data.dir in the config)"))[0]


def _input(cfg: RunConfig) -> FrameSequence:
    return load(_need(cfg.data.input, "--input (or data.input in the config)"))


def _query_sequence(cfg: RunConfig, seq: FrameSequence) -> IntermittentSequence:
    if cfg.mask.query_times:
        return IntermittentSequence(seq.frames, seq.timestamps, np.asarray(cfg.mask.query_times),
                                    cfg.mask.mode)
    return make_masks([seq], cfg.mask.rate, cfg.mask.mode, cfg.seed)[0]


# -- subcommands --------------------------------------------------------------

def cmd_gen(args, cfg: RunConfig) -> dict:
    out = _need(cfg.data.dir, "--out (or data.dir in the config)")
    spec = cfg.domain_spec()
    seqs = generate(spec, cfg.data.windows, cfg.data.window_len, cfg.seed)
    write_dataset(out, seqs, domain=spec.to_dict(), domain_name=cfg.data.domain, seed=cfg.seed)
    return _emit(args, cfg, {"dataset": {"dir": out, "windows": len(seqs)}})


def cmd_train(args, cfg: RunConfig) -> dict:
    seqs = _dataset(cfg)
    H, W, C = seqs[0].frame_shape
    cfg.model = replace(cfg.model, frame_shape=(H, W, C))
    out = Path(cfg.outputs.model or "model.npfxm")
    cfg.outputs.model = str(out)
    started = time.perf_counter()
    model, history = train(seqs, cfg.model, cfg.train)
    elapsed = time.perf_counter() - started
    out.parent.mkdir(parents=True, exist_ok=True)
    model_io.save(model, out)
    hist_path = out.with_name(out.stem + "_history.csv")
    with open(hist_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0]))
        writer.writeheader()
        writer.writerows(history)
    return _emit(args, cfg, {"model": str(out), "history_csv": str(hist_path),
                             "checksum": model.checksum(), "final_loss": history[-1]["loss"],
                             "windows": len(seqs), "elapsed": elapsed})


def cmd_impute(args, cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    seq = _input(cfg)
    q = _query_sequence(cfg, seq)
    started = time.perf_counter()
    res = model.impute(q, solver=cfg.solver, reverse_order=cfg.model.reverse_order or None)
    body = {"mode": q.mode, "masked_times": q.masked_times, "telemetry": res.telemetry.to_dict(),
            "wall_time": time.perf_counter() - started}
    if q.masked_idx is not None:
        body["metrics"] = evaluate(res.frames, seq.frames[q.masked_idx], frame_ids=q.masked_idx,
                                   **_metric_kw(cfg)).to_dict()
    out = cfg.outputs.dir
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        if len(q.masked_times):
            save(FrameSequence(res.frames, q.masked_times), Path(out) / "imputed.npfx")
            body["imputed"] = str(Path(out) / "imputed.npfx")
        if not cfg.outputs.report:
            cfg.outputs.report = str(Path(out) / "report.json")
    line = f"imputed {len(q.masked_times)} frames, nfev={res.telemetry.nfev}"
    if "metrics" in body:
        line += f", ssim={body['metrics']['ssim']:.4f}"
    print(line)
    return _emit(args, cfg, body)


def cmd_eval(args, cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    seqs = _dataset(cfg)
    rep = run_benchmark(build_imputers(["model"], cfg.seed, model, cfg.solver), seqs,
                        cfg.mask.rate, cfg.mask.mode, cfg.seed, cfg.tracking, _jobs(cfg),
                        _metric_kw(cfg))
    print(format_table(rep))
    return _emit(args, cfg, {"benchmark": rep})


def cmd_bench(args, cfg: RunConfig) -> dict:
    names = list(cfg.eval.baselines or BASELINES)
    model = None
    plain = []
    for n in names:
        if n.startswith("model:"):
            if model is not None:
                raise UsageError("only one model:PATH entry is supported")
            model = model_io.load(n.split(":", 1)[1])
            plain.append("model")
        elif n in BASELINES:
            plain.append(n)
        else:
            raise UsageError(f"unknown imputer {n!r}; use {','.join(BASELINES)} or model:PATH")
    seqs = _dataset(cfg)
    rep = run_benchmark(build_imputers(plain, cfg.seed, model, cfg.solver), seqs,
                        cfg.mask.rate, cfg.mask.mode, cfg.seed, cfg.tracking, _jobs(cfg),
                        _metric_kw(cfg))
    print(format_table(rep))
    return _emit(args, cfg, {"imputers": names, "benchmark": rep})


def cmd_elasticity(args, cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    seqs = _dataset(cfg)
    rows = run_elasticity(model, seqs, cfg.eval.tolerances, cfg.mask.rate, cfg.mask.mode,
                          cfg.seed, cfg.solver, _metric_kw(cfg))
    for r in rows:
        print(f"tol={r['tol']:<8g} ssim={r['ssim']:.4f} nfev={r['nfev']}")
    return _emit(args, cfg, {"tolerances": cfg.eval.tolerances, "rows": rows})


def cmd_flow(args, cfg: RunConfig) -> dict:
    model = _load_model(cfg)
    seq = _input(cfg)
    q = _query_sequence(cfg, seq)
    out = _need(cfg.outputs.dir, "--out (or outputs.dir in the config)")
    files = dump_flow(model, q, out, cfg.solver)
    if not cfg.outputs.report:
        cfg.outputs.report = str(Path(out) / "flow.json")
    return _emit(args, cfg, {"files": files})


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "impute": cmd_impute, "eval": cmd_eval,
            "bench": cmd_bench, "elasticity": cmd_elasticity, "flow": cmd_flow}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        try:
            cfg = _resolve(args)
        except ValueError as exc:  # flag values failing config validation
            raise ConfigError(str(exc)) from None
        COMMANDS[args.command](args, cfg)
        return 0
    except UsageError as exc:
        print(f"npfx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"npfx: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContainerError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"npfx: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, SinkhornError, FloatingPointError) as exc:
        print(f"npfx: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"npfx: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
