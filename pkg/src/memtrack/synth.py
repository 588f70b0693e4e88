"""Synthetic tracking sequences with exact ground truth.

Sequences are textured targets moving over a textured background, with
optional appearance drift, occlusion events, and distractor objects.  Three
difficulty tiers back the benchmark suite: "easy" (clean motion), "drift"
(appearance morphs away from the first frame), and "hard" (fast jittery
motion, occlusion, distractors).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .featnet import BoundingBox


@dataclass
class OcclusionEvent:
    start: int
    duration: int
    coverage: float      # fraction of the target box hidden


@dataclass
class SyntheticSpec:
    seed: int = 0
    canvas: int = 128
    length: int = 120
    target_size: int = 22
    velocity: float = 1.5
    jitter: float = 0.3
    drift_rate: float = 0.0          # appearance morph per frame, [0, 1]
    size_pulse: float = 0.0          # relative size oscillation amplitude
    distractors: int = 0
    occlusions: list[OcclusionEvent] = field(default_factory=list)


TIERS = {
    "easy": dict(velocity=1.6, jitter=0.4, drift_rate=0.0, size_pulse=0.0,
                 distractors=0, occlusions=[]),
    "drift": dict(velocity=1.6, jitter=0.6, drift_rate=0.9, size_pulse=0.08,
                  distractors=1, occlusions=[]),
    "hard": dict(velocity=3.0, jitter=1.5, drift_rate=0.5, size_pulse=0.12,
                 distractors=2, occlusions=[OcclusionEvent(start=45, duration=12, coverage=0.7)]),
}

SUITE_SEEDS = {
    "easy": list(range(0, 7)),
    "drift": list(range(7, 14)),
    "hard": list(range(14, 20)),
}


def spec_for(tier: str, seed: int, length: int = 120) -> SyntheticSpec:
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    return SyntheticSpec(seed=seed, length=length, **TIERS[tier])


def suite_specs(length: int = 120) -> list[tuple[str, SyntheticSpec]]:
    """The fixed 20-sequence benchmark: (name, spec) pairs, seeds 0-19."""
    out = []
    for tier, seeds in SUITE_SEEDS.items():
        for seed in seeds:
            out.append((f"{tier}_{seed:02d}", spec_for(tier, seed, length)))
    return out


def _texture(rng: np.random.Generator, size: int, cells: int = 6) -> np.ndarray:
    base = rng.random((cells, cells, 3)).astype(np.float32)
    tint = 0.35 + 0.65 * rng.random(3).astype(np.float32)
    tex = cv2.resize(base, (size, size), interpolation=cv2.INTER_CUBIC)
    return np.clip(tex * tint, 0.0, 1.0)


def _shape_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    kind = rng.integers(0, 3)
    mask = np.zeros((size, size), np.uint8)
    if kind == 0:
        mask[:] = 1
    elif kind == 1:
        cv2.ellipse(mask, (size // 2, size // 2), (size // 2, int(size * 0.42)),
                    0, 0, 360, 1, -1)
    else:
        pts = np.array([[size // 2, 0], [size - 1, size // 2],
                        [size // 2, size - 1], [0, size // 2]], np.int32)
        cv2.fillPoly(mask, [pts], 1)
    return mask.astype(np.float32)


class _Mover:
    """Bouncing point mass with velocity jitter; keeps the body inside the walls."""

    def __init__(self, rng, canvas, body, speed, jitter):
        self.canvas = canvas
        self.half = body / 2.0
        self.jitter = jitter
        margin = self.half + 2.0
        self.pos = np.array([rng.uniform(margin, canvas - margin),
                             rng.uniform(margin, canvas - margin)])
        angle = rng.uniform(0, 2 * np.pi)
        self.vel = speed * np.array([np.cos(angle), np.sin(angle)])

    def advance(self, rng, half=None):
        if half is not None:
            self.half = half
        self.pos = self.pos + self.vel + rng.normal(0.0, self.jitter, 2)
        lo, hi = self.half + 1.0, self.canvas - self.half - 1.0
        for ax in range(2):
            if self.pos[ax] < lo:
                self.pos[ax] = lo + (lo - self.pos[ax])
                self.vel[ax] = abs(self.vel[ax])
            elif self.pos[ax] > hi:
                self.pos[ax] = hi - (self.pos[ax] - hi)
                self.vel[ax] = -abs(self.vel[ax])
            self.pos[ax] = float(np.clip(self.pos[ax], lo, hi))


def _paste(canvas: np.ndarray, sprite: np.ndarray, mask: np.ndarray, cx: float, cy: float):
    size = sprite.shape[0]
    x0 = int(round(cx - size / 2.0))
    y0 = int(round(cy - size / 2.0))
    h, w = canvas.shape[:2]
    sx0, sy0 = max(0, -x0), max(0, -y0)
    dx0, dy0 = max(0, x0), max(0, y0)
    dx1, dy1 = min(w, x0 + size), min(h, y0 + size)
    if dx1 <= dx0 or dy1 <= dy0:
        return
    sub = sprite[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]
    m = mask[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0), None]
    region = canvas[dy0:dy1, dx0:dx1]
    canvas[dy0:dy1, dx0:dx1] = region * (1.0 - m) + sub * m


def generate(spec: SyntheticSpec, rng: np.random.Generator | None = None
             ) -> tuple[list[np.ndarray], list[BoundingBox]]:
    """Render the sequence; returns (uint8 RGB frames, per-frame ground truth)."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    size = spec.target_size
    canvas = spec.canvas

    bg_cells = rng.random((10, 10, 3)).astype(np.float32) * 0.55
    background = cv2.resize(bg_cells, (canvas, canvas), interpolation=cv2.INTER_CUBIC)
    background = np.clip(background, 0.0, 1.0)

    tex_a = _texture(rng, size)
    tex_b = _texture(rng, size)
    mask = _shape_mask(rng, size)
    target = _Mover(rng, canvas, size, spec.velocity, spec.jitter)

    distractors = []
    for _ in range(spec.distractors):
        d_size = int(size * rng.uniform(0.8, 1.2))
        distractors.append((_texture(rng, d_size), _shape_mask(rng, d_size),
                            _Mover(rng, canvas, d_size, spec.velocity, spec.jitter)))

    occ_tex = _texture(rng, max(4, int(size * 1.2)))

    frames: list[np.ndarray] = []
    boxes: list[BoundingBox] = []
    for t in range(spec.length):
        img = background.copy()

        for tex_d, mask_d, mover_d in distractors:
            mover_d.advance(rng)
            _paste(img, tex_d, mask_d, mover_d.pos[0], mover_d.pos[1])

        morph = min(1.0, t * spec.drift_rate / 40.0)
        tex = (1.0 - morph) * tex_a + morph * tex_b
        pulse = 1.0 + spec.size_pulse * np.sin(2 * np.pi * t / 60.0)
        cur = max(8, int(round(size * pulse)))
        if cur != size:
            tex_r = cv2.resize(tex, (cur, cur), interpolation=cv2.INTER_LINEAR)
            mask_r = cv2.resize(mask, (cur, cur), interpolation=cv2.INTER_NEAREST)
        else:
            tex_r, mask_r = tex, mask
        if t > 0:
            target.advance(rng, half=cur / 2.0)
        _paste(img, tex_r, mask_r, target.pos[0], target.pos[1])

        for ev in spec.occlusions:
            if ev.start <= t < ev.start + ev.duration:
                side = int(np.ceil(cur * np.sqrt(ev.coverage)))
                occ = cv2.resize(occ_tex, (side, side), interpolation=cv2.INTER_LINEAR)
                _paste(img, occ, np.ones((side, side), np.float32),
                       target.pos[0], target.pos[1])

        frames.append((np.clip(img, 0.0, 1.0) * 255).astype(np.uint8))
        boxes.append(BoundingBox(float(target.pos[0]), float(target.pos[1]),
                                 float(cur), float(cur)))
    return frames, boxes
