"""Synthetic ground truth and the simulated measurement device."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nv import Control, InitialState, NvModel

CELL_PITCH = 4
CORRIDOR = 2


@dataclass(frozen=True)
class WindowIndex:
    """Ordered, contiguous sites of one scan window."""

    sites: tuple[tuple[int, int], ...]
    direction: str = "H"

    def __post_init__(self):
        if not self.sites:
            raise ValueError("window needs at least one site")
        rows = {r for r, _ in self.sites}
        cols = {c for _, c in self.sites}
        if not (len(rows) == 1 or len(cols) == 1):
            raise ValueError("window sites must share a row or a column")

    @property
    def rows(self) -> np.ndarray:
        return np.array([r for r, _ in self.sites])

    @property
    def cols(self) -> np.ndarray:
        return np.array([c for _, c in self.sites])

    def __len__(self) -> int:
        return len(self.sites)

    @classmethod
    def horizontal(cls, row: int, col: int, M: int) -> "WindowIndex":
        return cls(tuple((row, col + k) for k in range(M)), "H")

    @classmethod
    def vertical(cls, col: int, row: int, M: int) -> "WindowIndex":
        return cls(tuple((row + k, col) for k in range(M)), "V")


@dataclass
class TruthSequence:
    frames: list[np.ndarray]
    J_true: float
    seed: int
    sigma_true: float
    B_base: float = 50e-6
    B_amp: float = 5e-6
    increments: list[np.ndarray] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def metadata(self) -> dict:
        return {"seed": self.seed, "J_true": self.J_true, "sigma_true": self.sigma_true,
                "B_base": self.B_base, "B_amp": self.B_amp, "frames": len(self.frames)}


def maze_mask(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean corridor mask from a recursive-backtracker maze.

    Cells sit on a 4-pixel pitch; each cell is a 2x2 corridor block, and an
    open passage to the east or south neighbour fills the 2-pixel gap.
    """
    if H < 8 or W < 8:
        raise ValueError("maze grid must be at least 8x8")
    nr, nc = -(-H // CELL_PITCH), -(-W // CELL_PITCH)
    mask = np.zeros((nr * CELL_PITCH, nc * CELL_PITCH), dtype=bool)
    visited = np.zeros((nr, nc), dtype=bool)

    def open_cell(i, j):
        mask[i * CELL_PITCH:i * CELL_PITCH + CORRIDOR, j * CELL_PITCH:j * CELL_PITCH + CORRIDOR] = True

    start = (int(rng.integers(nr)), int(rng.integers(nc)))
    stack = [start]
    visited[start] = True
    open_cell(*start)
    while stack:
        i, j = stack[-1]
        nbrs = [(i + di, j + dj) for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1))
                if 0 <= i + di < nr and 0 <= j + dj < nc and not visited[i + di, j + dj]]
        if not nbrs:
            stack.pop()
            continue
        ni, nj = nbrs[int(rng.integers(len(nbrs)))]
        # carve the gap between the two cells
        r0 = min(i, ni) * CELL_PITCH
        c0 = min(j, nj) * CELL_PITCH
        if ni != i:
            mask[r0 + CORRIDOR:r0 + CELL_PITCH, c0:c0 + CORRIDOR] = True
        else:
            mask[r0:r0 + CORRIDOR, c0 + CORRIDOR:c0 + CELL_PITCH] = True
        visited[ni, nj] = True
        open_cell(ni, nj)
        stack.append((ni, nj))
    return mask[:H, :W]


def generate_maze_field(H: int, W: int, B_base: float, B_amp: float, seed) -> np.ndarray:
    """Two-level field map: corridors at B_base + B_amp, walls at B_base."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return np.where(maze_mask(H, W, rng), B_base + B_amp, B_base).astype(float)


def evolve_truth(B: np.ndarray, sigma_true: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One frame of i.i.d. Gaussian drift. Returns (next frame, increments)."""
    inc = sigma_true * rng.standard_normal(B.shape) if sigma_true else np.zeros_like(B)
    return B + inc, inc


def generate_truth(H: int, W: int, frames: int, B_base: float, B_amp: float, J_true: float,
                   sigma_true: float, seed: int, maze_rng: np.random.Generator,
                   drift_rng: np.random.Generator) -> TruthSequence:
    B = generate_maze_field(H, W, B_base, B_amp, maze_rng)
    out, incs = [B], []
    for _ in range(frames - 1):
        B, inc = evolve_truth(B, sigma_true, drift_rng)
        out.append(B)
        incs.append(inc)
    return TruthSequence(out, J_true, seed, sigma_true, B_base, B_amp, incs)


def extract_window(B: np.ndarray, w: WindowIndex) -> np.ndarray:
    H, W = B.shape
    rows, cols = w.rows, w.cols
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= H or cols.max() >= W:
        raise ValueError(f"window {w.sites[0]}..{w.sites[-1]} outside {H}x{W} map")
    return B[rows, cols].copy()


def measure(truth: TruthSequence, t: int, w: WindowIndex, u: Control, init: InitialState,
            model: NvModel, rng: np.random.Generator, p_true: float | None = None) -> int:
    """Binomial count drawn with the estimator's own likelihood model.

    ``p_true`` may be supplied when the caller already evaluated the true
    success probability for this control.
    """
    if p_true is None:
        b = extract_window(truth.frames[t], w)
        psi = model.point_state(b, truth.J_true, u, init)
        p_true = float(model.probability_of(psi, u.observable, clamp=False))
    return int(rng.binomial(u.n_shots, min(1.0, max(0.0, p_true))))
