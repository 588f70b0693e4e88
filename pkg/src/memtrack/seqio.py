"""Sequence directories, box files, and PNG helpers.

A sequence directory holds numbered PNG frames plus groundtruth.txt with one
corner-convention "x,y,w,h" line per frame.  Results files use the same
format.
"""

from __future__ import annotations

import base64
import os

import cv2
import numpy as np

from .featnet import BoundingBox


def write_boxes(path: str, boxes: list[BoundingBox]):
    with open(path, "w") as f:
        for b in boxes:
            x, y, w, h = b.to_corner()
            f.write(f"{x:.2f},{y:.2f},{w:.2f},{h:.2f}\n")


def read_boxes(path: str) -> list[BoundingBox]:
    boxes = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            x, y, w, h = (float(v) for v in line.replace("\t", ",").split(","))
            boxes.append(BoundingBox.from_corner(x, y, w, h))
    return boxes


def save_sequence(seq_dir: str, frames: list[np.ndarray], boxes: list[BoundingBox]):
    os.makedirs(seq_dir, exist_ok=True)
    for i, frame in enumerate(frames):
        cv2.imwrite(os.path.join(seq_dir, f"{i + 1:06d}.png"),
                    cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    write_boxes(os.path.join(seq_dir, "groundtruth.txt"), boxes)


def load_sequence(seq_dir: str) -> tuple[list[np.ndarray], list[BoundingBox]]:
    """Load frames as float32 RGB in [0, 1] plus ground-truth boxes."""
    names = sorted(n for n in os.listdir(seq_dir) if n.endswith(".png"))
    if not names:
        raise FileNotFoundError(f"no PNG frames under {seq_dir}")
    frames = []
    for name in names:
        bgr = cv2.imread(os.path.join(seq_dir, name), cv2.IMREAD_COLOR)
        if bgr is None:
            raise IOError(f"unreadable frame {name} in {seq_dir}")
        frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0)
    gt_path = os.path.join(seq_dir, "groundtruth.txt")
    boxes = read_boxes(gt_path) if os.path.exists(gt_path) else []
    return frames, boxes


def list_sequences(suite_dir: str) -> list[str]:
    return sorted(d for d in os.listdir(suite_dir)
                  if os.path.isdir(os.path.join(suite_dir, d)))


def frame_to_png_b64(frame_uint8: np.ndarray) -> str:
    ok, buf = cv2.imencode(".png", cv2.cvtColor(frame_uint8, cv2.COLOR_RGB2BGR))
    if not ok:
        raise IOError("PNG encoding failed")
    return base64.b64encode(buf.tobytes()).decode("ascii")


def frame_from_png_b64(payload: str) -> np.ndarray:
    """Decode a base64 PNG into float32 RGB in [0, 1]."""
    raw = np.frombuffer(base64.b64decode(payload), np.uint8)
    bgr = cv2.imdecode(raw, cv2.IMREAD_COLOR)
    if bgr is None:
        raise ValueError("undecodable PNG payload")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0
