"""One-pass evaluation (precision / success / AUC), suite running, ablations."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import TrackerConfig
from .featnet import BoundingBox
from .model import MemTrackNet, VARIANTS
from .tracker import track_sequence
from . import seqio

PRECISION_THRESHOLDS = np.arange(0, 51, 1.0)          # pixels
SUCCESS_THRESHOLDS = np.arange(0, 21, 1.0) / 20.0     # IoU, 21 samples


@dataclass
class EvalResult:
    center_errors: np.ndarray     # per scored frame
    ious: np.ndarray
    precision: np.ndarray         # over PRECISION_THRESHOLDS
    success: np.ndarray           # over SUCCESS_THRESHOLDS
    auc: float

    @property
    def precision_at_20(self) -> float:
        return float(self.precision[20])

    @property
    def mean_iou(self) -> float:
        return float(self.ious.mean()) if self.ious.size else 0.0

    @property
    def mean_center_error(self) -> float:
        return float(self.center_errors.mean()) if self.center_errors.size else 0.0


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ax0, ay0, aw, ah = a.to_corner()
    bx0, by0, bw, bh = b.to_corner()
    ix0, iy0 = max(ax0, bx0), max(ay0, by0)
    ix1, iy1 = min(ax0 + aw, bx0 + bw), min(ay0 + ah, by0 + bh)
    iw, ih = max(0.0, ix1 - ix0), max(0.0, iy1 - iy0)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def evaluate(results: list[BoundingBox], truth: list[BoundingBox]) -> EvalResult:
    """OTB-style one-pass scoring; the initialization frame is excluded."""
    if len(results) != len(truth):
        raise ValueError(f"results ({len(results)}) and truth ({len(truth)}) lengths differ")
    if len(results) < 2:
        raise ValueError("need at least two frames to score")
    errs = []
    ious = []
    for r, t in zip(results[1:], truth[1:]):
        errs.append(float(np.hypot(r.cx - t.cx, r.cy - t.cy)))
        ious.append(iou(r, t))
    errs = np.asarray(errs)
    ious = np.asarray(ious)
    precision = np.array([(errs <= th).mean() for th in PRECISION_THRESHOLDS])
    success = np.array([(ious >= th).mean() for th in SUCCESS_THRESHOLDS])
    return EvalResult(center_errors=errs, ious=ious, precision=precision,
                      success=success, auc=float(success.mean()))


def run_suite(net: MemTrackNet, suite_dir: str, tier: str | None = None
              ) -> dict[str, EvalResult]:
    """Track every sequence in a suite directory and score against ground truth."""
    out: dict[str, EvalResult] = {}
    for name in seqio.list_sequences(suite_dir):
        if tier is not None and not name.startswith(tier + "_"):
            continue
        frames, truth = seqio.load_sequence(os.path.join(suite_dir, name))
        boxes, _ = track_sequence(net, frames, truth[0])
        out[name] = evaluate(boxes, truth)
    if not out:
        raise ValueError(f"no sequences matched in {suite_dir}"
                         + (f" for tier {tier!r}" if tier else ""))
    return out


def mean_auc(results: dict[str, EvalResult]) -> float:
    return float(np.mean([r.auc for r in results.values()]))


def _net_for(checkpoint_path: str, variant: str, memory_slots: int | None = None) -> MemTrackNet:
    from .trainer import load_checkpoint, net_from_checkpoint
    ckpt = load_checkpoint(checkpoint_path)
    net = net_from_checkpoint(ckpt)
    net.cfg.variant = variant
    if memory_slots is not None:
        net.cfg.memory_slots = memory_slots
    return net


def run_ablation(ckpts: dict[str, str], suite_dir: str, tier: str | None = None
                 ) -> list[dict]:
    """Per-variant mean AUC rows, ordered by the canonical variant list."""
    missing = [v for v in ckpts if not os.path.exists(ckpts[v])]
    if missing:
        raise FileNotFoundError("missing checkpoints for variants: " + ", ".join(sorted(missing)))
    rows = []
    for variant in VARIANTS:
        if variant not in ckpts:
            continue
        net = _net_for(ckpts[variant], variant)
        results = run_suite(net, suite_dir, tier=tier)
        rows.append({"variant": variant, "mean_auc": mean_auc(results),
                     "sequences": len(results)})
    return rows


def memory_size_sweep(ckpts: dict[int, str], suite_dir: str, tier: str | None = None
                      ) -> list[dict]:
    """AUC per memory size; the same weights may back several sizes since
    parameter shapes do not depend on the slot count."""
    missing = [n for n in ckpts if not os.path.exists(ckpts[n])]
    if missing:
        raise FileNotFoundError("missing checkpoints for sizes: "
                                + ", ".join(str(n) for n in sorted(missing)))
    rows = []
    for n_slots in sorted(ckpts):
        net = _net_for(ckpts[n_slots], "full", memory_slots=n_slots)
        results = run_suite(net, suite_dir, tier=tier)
        rows.append({"memory_slots": n_slots, "mean_auc": mean_auc(results),
                     "sequences": len(results)})
    return rows


def write_csv(path: str, rows: list[dict]):
    import csv
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def read_csv(path: str) -> list[dict]:
    import csv
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def curve_rows(result: EvalResult) -> list[dict]:
    """Plot-data rows for precision/success curves (external plotting)."""
    rows = []
    for th, val in zip(PRECISION_THRESHOLDS, result.precision):
        rows.append({"curve": "precision", "threshold": float(th), "value": float(val)})
    for th, val in zip(SUCCESS_THRESHOLDS, result.success):
        rows.append({"curve": "success", "threshold": float(th), "value": float(val)})
    return rows
