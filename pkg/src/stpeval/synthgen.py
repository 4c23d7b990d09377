"""Deterministic bouncing-sprites video generator (Moving-MNIST stand-in).

Each sequence holds ``n_sprites`` 16x16 binary digit glyphs moving at constant
speed inside an ``H x W`` frame and reflecting off its walls. Frames are
composited with a per-pixel max.

Random numbers come from SplitMix64 so any implementation can reproduce the
exact same sequences:

    state <- state + 0x9E3779B97F4A7C15   (mod 2**64)
    z <- state
    z <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z <- (z ^ (z >> 27)) * 0x94D049BB133111EB
    out <- z ^ (z >> 31)

A uniform float in [0, 1) is ``(out >> 11) * 2**-53``. For every sprite, in
order, the generator draws: glyph id ``floor(u * 10)``, row ``u * (H - 16)``,
column ``u * (W - 16)``, speed ``smin + u * (smax - smin)`` and direction
``u * 2*pi``; the velocity is ``(speed * sin(a), speed * cos(a))``.

Sprite positions are real-valued; rendering pastes the glyph at the top-left
pixel ``floor(pos + 0.5)``. Frame 0 shows the initial positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError
from .tensor import SequenceTensor

SPRITE = 16
MASK64 = (1 << 64) - 1

# 5x7 digit font, upscaled x2 into the 16x16 sprite canvas at offset (1, 3).
_FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def _build_sprites() -> np.ndarray:
    out = np.zeros((10, SPRITE, SPRITE), dtype=np.float32)
    for digit, rows in _FONT.items():
        glyph = np.array([[int(ch) for ch in row] for row in rows], dtype=np.float32)
        big = np.kron(glyph, np.ones((2, 2), dtype=np.float32))
        out[digit, 1 : 1 + 14, 3 : 3 + 10] = big
    out.flags.writeable = False
    return out


SPRITES = _build_sprites()


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class SpriteState:
    sprite_id: int
    row: float
    col: float
    dr: float
    dc: float

    @property
    def speed_sq(self) -> float:
        return self.dr * self.dr + self.dc * self.dc


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_sprites: int = 2
    T: int = 20
    H: int = 64
    W: int = 64
    speed_range: tuple[float, float] = (2.0, 4.0)

    def __post_init__(self):
        if self.H < SPRITE or self.W < SPRITE:
            raise ConfigError(f"frame must be at least {SPRITE}x{SPRITE}, got {self.H}x{self.W}")
        if self.n_sprites < 1:
            raise ConfigError("n_sprites must be >= 1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ConfigError(f"speed_range must satisfy 0 <= min <= max, got {self.speed_range}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "n_sprites": self.n_sprites, "T": self.T, "H": self.H,
            "W": self.W, "speed_range": list(self.speed_range),
        }


def _reflect(p: float, v: float, hi: float) -> tuple[float, float]:
    p = p + v
    if hi == 0.0:
        return 0.0, (-v if p != 0.0 else v)
    while p < 0.0 or p > hi:
        if p < 0.0:
            p = -p
        else:
            p = 2.0 * hi - p
        v = -v
    return p, v


def step_dynamics(state: SpriteState, bounds: tuple[int, int]) -> SpriteState:
    """Advance one frame; wall crossings are mirrored back and flip the velocity."""
    H, W = bounds
    row, dr = _reflect(state.row, state.dr, float(H - SPRITE))
    col, dc = _reflect(state.col, state.dc, float(W - SPRITE))
    return SpriteState(state.sprite_id, row, col, dr, dc)


def initial_states(cfg: GenConfig) -> list[SpriteState]:
    rng = SplitMix64(cfg.seed)
    lo, hi = cfg.speed_range
    states = []
    for _ in range(cfg.n_sprites):
        sprite_id = min(int(rng.uniform() * 10), 9)
        row = rng.uniform() * (cfg.H - SPRITE)
        col = rng.uniform() * (cfg.W - SPRITE)
        speed = lo + rng.uniform() * (hi - lo)
        angle = rng.uniform() * 2.0 * math.pi
        states.append(SpriteState(sprite_id, row, col, speed * math.sin(angle), speed * math.cos(angle)))
    return states


def trajectory(cfg: GenConfig) -> list[list[SpriteState]]:
    """Sprite states for every frame; ``trajectory(cfg)[t][k]`` is sprite k at frame t."""
    states = initial_states(cfg)
    out = [states]
    for _ in range(cfg.T - 1):
        states = [step_dynamics(s, (cfg.H, cfg.W)) for s in states]
        out.append(states)
    return out


def render(states: list[SpriteState], H: int, W: int) -> np.ndarray:
    frame = np.zeros((H, W), dtype=np.float32)
    for s in states:
        r = int(math.floor(s.row + 0.5))
        c = int(math.floor(s.col + 0.5))
        view = frame[r : r + SPRITE, c : c + SPRITE]
        np.maximum(view, SPRITES[s.sprite_id], out=view)
    return frame


def generate_sequence(cfg: GenConfig) -> SequenceTensor:
    """Render a ``[T, 1, H, W]`` float32 sequence with values in {0, 1}."""
    frames = np.empty((cfg.T, 1, cfg.H, cfg.W), dtype=np.float32)
    for t, states in enumerate(trajectory(cfg)):
        frames[t, 0] = render(states, cfg.H, cfg.W)
    return SequenceTensor(frames, (0.0, 1.0))


class SynthDataset:
    """Lazy collection of ``count`` sequences; sequence ``i`` uses seed ``base.seed + i``."""

    def __init__(self, base: GenConfig, count: int):
        if count < 0:
            raise ConfigError("count must be >= 0")
        self.base = base
        self.count = count

    def config(self, i: int) -> GenConfig:
        return GenConfig(
            seed=(self.base.seed + i) & MASK64, n_sprites=self.base.n_sprites, T=self.base.T,
            H=self.base.H, W=self.base.W, speed_range=self.base.speed_range,
        )

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> SequenceTensor:
        if not 0 <= i < self.count:
            raise IndexError(i)
        return generate_sequence(self.config(i))

    def __iter__(self) -> Iterator[SequenceTensor]:
        for i in range(self.count):
            yield self[i]
