"""Imputation benchmarks, zero-shot transfer and solver-elasticity studies."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..baselines import get_imputer
from ..metrics import evaluate, psnr_from_mse
from ..model.network import PrefixImputer
from ..odesolve import SolverConfig
from ..synthdata.masking import mask, mask_hash
from .tracking import PolarCalibration, empirical_cdf, track_frames


class ModelImputer:
    """Adapts a trained model to the ``imputer(seq) -> frames`` interface."""

    def __init__(self, model: PrefixImputer, solver: SolverConfig | None = None,
                 reverse_order: bool | None = None):
        self.model = model
        self.solver = solver
        self.reverse_order = reverse_order

    def run(self, seq):
        return self.model.impute(seq, solver=self.solver, reverse_order=self.reverse_order)

    def __call__(self, seq) -> np.ndarray:
        return self.run(seq).frames


def make_masks(dataset, rate: float, mode: str, seed: int):
    """One intermittent view per window; window ``i`` uses seed ``(seed, i)``."""
    return [mask(w, rate, mode, seed=[seed, i]) for i, w in enumerate(dataset)]


def _run_window(imputers: dict, window, seq, calib, metric_kw=None):
    out = {}
    truth = window.frames[seq.masked_idx]
    for name, imp in imputers.items():
        try:
            nfev = None
            if isinstance(imp, ModelImputer):
                res = imp.run(seq)
                pred, nfev = res.frames, res.telemetry.nfev
            else:
                pred = imp(seq)
            if pred.shape != truth.shape:
                raise ValueError(f"imputer returned {pred.shape}, expected {truth.shape}")
            if not np.all(np.isfinite(pred)):
                raise FloatingPointError("imputer returned non-finite values")
            rep = evaluate(pred, truth, frame_ids=seq.masked_idx, **(metric_kw or {}))
            track = None
            if window.centers is not None:
                track = track_frames(pred, window.centers[seq.masked_idx, 0], calib).errors
            out[name] = {"frames": rep.per_frame, "tracking": track, "nfev": nfev}
        except Exception as exc:  # recorded per window, never fatal
            out[name] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def _summarise(name, per_window, data_range: float = 1.0) -> dict:
    rows, errors, failures, nfev = [], [], [], 0
    has_nfev = False
    for w, res in enumerate(per_window):
        r = res[name]
        if "error" in r:
            failures.append({"window": w, "error": r["error"]})
            continue
        rows.extend({"window": w, **f} for f in r["frames"])
        if r["tracking"] is not None:
            errors.extend(r["tracking"])
        if r["nfev"] is not None:
            has_nfev = True
            nfev += r["nfev"]
    mse = float(np.mean([f["mse"] for f in rows])) if rows else float("nan")
    ssim = float(np.mean([f["ssim"] for f in rows])) if rows else float("nan")
    cdf_x, cdf_y = empirical_cdf(errors)
    return {
        "name": name, "frames": len(rows), "mse": mse, "ssim": ssim,
        "psnr": psnr_from_mse(mse, data_range) if rows else float("nan"),
        "tracking": {"median": float(np.median(errors)) if errors else None,
                     "cdf_x": cdf_x, "cdf_y": cdf_y},
        "nfev": nfev if has_nfev else None, "failures": failures, "per_frame": rows,
    }


def run_benchmark(imputers: dict, dataset, rate: float = 0.5, mode: str = "interp",
                  seed: int = 0, calib: PolarCalibration | None = None, jobs: int = 1,
                  metric_kw: dict | None = None) -> dict:
    """Score every imputer on identical masks; one row per imputer.

    ``metric_kw`` is forwarded to the SSIM/PSNR evaluation (window, k1, k2, data_range).
    """
    dataset = list(dataset)
    calib = calib or PolarCalibration()
    seqs = make_masks(dataset, rate, mode, seed)
    args = [(imputers, w, s, calib, metric_kw) for w, s in zip(dataset, seqs)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_window = list(pool.map(_run_window, *zip(*args)))
    else:
        per_window = [_run_window(*a) for a in args]
    return {
        "mask": {"rate": rate, "mode": mode, "seed": seed, "windows": len(dataset),
                 "hash": mask_hash(s.masked_idx for s in seqs)},
        "calibration": calib.to_dict(),
        "rows": [_summarise(name, per_window, (metric_kw or {}).get("data_range", 1.0))
                 for name in imputers],
    }


def _fmt(x, spec):
    return "-" if x is None or (isinstance(x, float) and np.isnan(x)) else format(x, spec)


def format_table(report: dict) -> str:
    """Aligned text rendering of a benchmark report."""
    head = ["imputer", "MSE", "SSIM", "PSNR", "track-med", "nfev", "failed"]
    lines = [head]
    for r in report["rows"]:
        lines.append([r["name"], _fmt(r["mse"], ".6f"), _fmt(r["ssim"], ".4f"),
                      _fmt(r["psnr"], ".2f"), _fmt(r["tracking"]["median"], ".4f"),
                      _fmt(r["nfev"], "d"), str(len(r["failures"]))])
    widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(row, widths))) for row in lines)


def build_imputers(names, seed: int = 0, model: PrefixImputer | None = None,
                   solver: SolverConfig | None = None) -> dict:
    imputers = {}
    for name in names:
        if name == "model":
            if model is None:
                raise ValueError("the model imputer needs a trained model")
            imputers[name] = ModelImputer(model, solver)
        else:
            imputers[name] = get_imputer(name, seed)
    return imputers


@dataclass
class ZeroShotReport:
    zero_shot: dict  # model on the unseen domain
    in_domain: dict  # model on its training domain
    locf_unseen: dict  # baseline on the unseen domain
    deltas: dict
    flags: dict
    mask_hashes: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _brief(row: dict) -> dict:
    return {k: row[k] for k in ("mse", "ssim", "psnr", "frames", "nfev")} | {
        "tracking_median": row["tracking"]["median"], "failures": len(row["failures"])}


def run_zero_shot(model: PrefixImputer, unseen, reference, rate: float = 0.5,
                  mode: str = "interp", seed: int = 0, solver: SolverConfig | None = None,
                  jobs: int = 1, metric_kw: dict | None = None) -> ZeroShotReport:
    """Apply a model to a domain it never saw, next to its in-domain score and LOCF."""
    unseen, reference = list(unseen), list(reference)
    shape = model.cfg.frame_shape
    for name, data in (("unseen", unseen), ("reference", reference)):
        if data and data[0].frame_shape != shape:
            raise ValueError(f"{name} frames {data[0].frame_shape} do not match model {shape}")
    imp = ModelImputer(model, solver)
    on_b = run_benchmark({"model": imp, "locf": get_imputer("locf")}, unseen, rate, mode, seed,
                         jobs=jobs, metric_kw=metric_kw)
    on_a = run_benchmark({"model": imp}, reference, rate, mode, seed, jobs=jobs,
                         metric_kw=metric_kw)
    zs, loc, ind = (_brief(r) for r in (on_b["rows"][0], on_b["rows"][1], on_a["rows"][0]))
    deltas = {"ssim_vs_locf": zs["ssim"] - loc["ssim"],
              "ssim_gap_to_in_domain": ind["ssim"] - zs["ssim"],
              "mse_vs_locf": zs["mse"] - loc["mse"]}
    flags = {"below_locf": bool(zs["ssim"] <= loc["ssim"])}
    return ZeroShotReport(zs, ind, loc, deltas, flags,
                          {"unseen": on_b["mask"]["hash"], "reference": on_a["mask"]["hash"]})


def run_elasticity(model: PrefixImputer, dataset, tolerances, rate: float = 0.5,
                   mode: str = "interp", seed: int = 0, base: SolverConfig | None = None,
                   metric_kw: dict | None = None) -> list:
    """Quality and dynamics evaluations per adaptive tolerance, on fixed masks."""
    dataset = list(dataset)
    seqs = make_masks(dataset, rate, mode, seed)
    base = base or model.cfg.solver
    rows = []
    for tol in tolerances:
        solver = base.with_tolerance(float(tol))
        started = time.perf_counter()
        preds, truths, nfev = [], [], 0
        for w, s in zip(dataset, seqs):
            res = model.impute(s, solver=solver)
            preds.append(res.frames)
            truths.append(w.frames[s.masked_idx])
            nfev += res.telemetry.nfev
        wall = time.perf_counter() - started
        rep = evaluate(np.concatenate(preds), np.concatenate(truths), **(metric_kw or {}))
        rows.append({"tol": float(tol), "ssim": rep.ssim, "mse": rep.mse, "psnr": rep.psnr,
                     "nfev": nfev, "wall_time": wall})
    return rows
