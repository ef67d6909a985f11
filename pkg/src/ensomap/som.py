"""Online Kohonen SOM training with a Gaussian neighborhood whose sigma
decays linearly, plus the four quality metrics used to judge a trained
grid: quantization error, topographic error, explained variance, and mean
smoothness.

The neighborhood schedule is parameterized by kR (initial neighborhood
area as a fraction of the squared grid dimension) and kS (final/initial
sigma ratio):

    sigma_initial = dim * sqrt(kR),   sigma_final = kS * sigma_initial
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .data import SampleMatrix


class SomError(ValueError):
    pass


@dataclass(frozen=True)
class SomConfig:
    rows: int = 30
    cols: int = 30
    kR: float = 0.03
    kS: float = 0.2
    iterations: int = 0  # 0 means "20 passes over the data" at train time
    lr_initial: float = 0.5
    lr_final: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise SomError("rows and cols must be >= 2")
        if not self.kR > 0:
            raise SomError("kR must be positive")
        if not 0 < self.kS <= 1:
            raise SomError("kS must be in (0, 1]")
        if self.iterations < 0:
            raise SomError("iterations must be >= 0")

    @property
    def dim(self) -> float:
        """Grid dimension entering the kR formula (geometric mean of the
        two lattice sizes; equals rows for square grids)."""
        return float(np.sqrt(self.rows * self.cols))

    @property
    def sigma_initial(self) -> float:
        return self.dim * np.sqrt(self.kR)

    @property
    def sigma_final(self) -> float:
        return self.kS * self.sigma_initial


@dataclass
class SomGrid:
    config: SomConfig
    weights: np.ndarray  # (rows*cols, num_cells), node-major (row-major lattice)

    @property
    def num_nodes(self) -> int:
        return self.config.rows * self.config.cols

    @property
    def grid_coords(self) -> np.ndarray:
        """(num_nodes, 2) integer lattice coordinates (i, j) per node."""
        r, c = self.config.rows, self.config.cols
        ii, jj = np.mgrid[0:r, 0:c]
        return np.column_stack([ii.ravel(), jj.ravel()])

    def node_index(self, i: int, j: int) -> int:
        return i * self.config.cols + j


@dataclass
class SomMetrics:
    quantization_error: float
    topographic_error: float
    explained_variance: float
    mean_smoothness: float


def sigma_schedule(config: SomConfig, t: int, iterations: int | None = None) -> float:
    """Linearly interpolated sigma at training step t.

    sigma(0) = sigma_initial and sigma(iterations - 1) = sigma_final,
    both exactly.
    """
    total = config.iterations if iterations is None else iterations
    if total < 1:
        raise SomError("iterations must be >= 1")
    if not 0 <= t < total:
        raise SomError(f"iteration {t} out of range [0, {total})")
    if total == 1:
        return config.sigma_initial
    frac = t / (total - 1)
    return config.sigma_initial + frac * (config.sigma_final - config.sigma_initial)


def _lr_schedule(config: SomConfig, t: int, total: int) -> float:
    if total == 1:
        return config.lr_initial
    frac = t / (total - 1)
    return config.lr_initial + frac * (config.lr_final - config.lr_initial)


ProgressFn = Callable[[int, float, float], None]


def train_som(
    samples: SampleMatrix | np.ndarray,
    config: SomConfig,
    progress: ProgressFn | None = None,
    progress_every: int | None = None,
) -> SomGrid:
    """Online Kohonen training, deterministic given config.seed.

    Samples are drawn by seeded per-epoch shuffling; every node k is
    updated as w_k += lr(t) * exp(-d_lattice(k, bmu)^2 / (2 sigma(t)^2))
    * (x - w_k), with Euclidean lattice distance.
    """
    X = samples.X if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SomError("samples must be a non-empty 2D matrix")
    n, d = X.shape
    total = config.iterations if config.iterations > 0 else 20 * n

    rng = np.random.default_rng(config.seed)
    lo, hi = X.min(axis=0), X.max(axis=0)
    num_nodes = config.rows * config.cols
    weights = rng.uniform(0.0, 1.0, size=(num_nodes, d)) * (hi - lo) + lo

    ii, jj = np.mgrid[0 : config.rows, 0 : config.cols]
    coords = np.column_stack([ii.ravel(), jj.ravel()]).astype(float)

    # fixed subsample for progress QE reporting
    qe_idx = rng.choice(n, size=min(64, n), replace=False)
    if progress_every is None:
        progress_every = max(1, total // 100)

    order = rng.permutation(n)
    for t in range(total):
        if t % n == 0 and t > 0:
            order = rng.permutation(n)
        x = X[order[t % n]]
        dists = np.einsum("nd,nd->n", weights - x, weights - x)
        best = int(np.argmin(dists))
        sigma = sigma_schedule(config, t, total)
        lr = _lr_schedule(config, t, total)
        lattice_d2 = np.sum((coords - coords[best]) ** 2, axis=1)
        h = np.exp(-lattice_d2 / (2.0 * sigma * sigma))
        weights += (lr * h)[:, None] * (x - weights)
        if progress is not None and (t % progress_every == 0 or t == total - 1):
            grid = SomGrid(config=config, weights=weights)
            _, qdist = bmu_batch(grid, X[qe_idx])
            progress(t, sigma, float(qdist.mean()))

    return SomGrid(config=config, weights=weights)


def bmu(grid: SomGrid, x: np.ndarray) -> tuple[int, int]:
    """Best and second-best matching node for one sample; ties broken by
    lowest node index (argmin/argsort are stable)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (grid.weights.shape[1],):
        raise SomError("sample dimension mismatch")
    diffs = grid.weights - x
    d2 = np.einsum("nd,nd->n", diffs, diffs)
    best = int(np.argmin(d2))
    d2b = d2.copy()
    d2b[best] = np.inf
    second = int(np.argmin(d2b))
    return best, second


def bmu_batch(grid: SomGrid, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """BMU index and BMU distance for each row of X."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != grid.weights.shape[1]:
        raise SomError("sample dimension mismatch")
    # blocked to bound memory on wide inputs
    n = X.shape[0]
    best = np.empty(n, dtype=int)
    dist = np.empty(n)
    step = max(1, int(2e7 // max(1, grid.num_nodes)))
    w2 = np.einsum("nd,nd->n", grid.weights, grid.weights)
    for s in range(0, n, step):
        block = X[s : s + step]
        d2 = w2[None, :] - 2.0 * block @ grid.weights.T + np.einsum("nd,nd->n", block, block)[:, None]
        b = np.argmin(d2, axis=1)
        best[s : s + step] = b
        dist[s : s + step] = np.sqrt(np.maximum(d2[np.arange(len(block)), b], 0.0))
    return best, dist


def _second_bmu_batch(grid: SomGrid, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    first = np.empty(n, dtype=int)
    second = np.empty(n, dtype=int)
    w2 = np.einsum("nd,nd->n", grid.weights, grid.weights)
    step = max(1, int(2e7 // max(1, grid.num_nodes)))
    for s in range(0, n, step):
        block = X[s : s + step]
        d2 = w2[None, :] - 2.0 * block @ grid.weights.T + np.einsum("nd,nd->n", block, block)[:, None]
        part = np.argsort(d2, axis=1, kind="stable")[:, :2]
        first[s : s + step] = part[:, 0]
        second[s : s + step] = part[:, 1]
    return first, second


def metrics(grid: SomGrid, samples: SampleMatrix | np.ndarray) -> SomMetrics:
    """QE, TE, EV, and mean smoothness on the given sample set."""
    X = samples.X if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=float)
    if X.shape[0] == 0:
        raise SomError("empty samples")
    best, dist = bmu_batch(grid, X)
    qe = float(dist.mean())

    total_ss = float(np.sum((X - X.mean(axis=0)) ** 2))
    if total_ss <= 0.0:
        raise SomError("samples identical to their mean; EV undefined")
    ev = 1.0 - float(np.sum(dist**2)) / total_ss

    first, second = _second_bmu_batch(grid, X)
    coords = grid.grid_coords
    manhattan = np.abs(coords[first] - coords[second]).sum(axis=1)
    te = float(np.mean(manhattan != 1))

    mu_s = float(np.mean(_local_smoothness(grid)))
    return SomMetrics(
        quantization_error=qe,
        topographic_error=te,
        explained_variance=ev,
        mean_smoothness=mu_s,
    )


def _local_smoothness(grid: SomGrid) -> np.ndarray:
    """Per-node mean Euclidean weight distance to existing 4-neighbors."""
    r, c = grid.config.rows, grid.config.cols
    W = grid.weights.reshape(r, c, -1)
    ls = np.zeros((r, c))
    for i in range(r):
        for j in range(c):
            ds = []
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ni, nj = i + di, j + dj
                if 0 <= ni < r and 0 <= nj < c:
                    ds.append(np.linalg.norm(W[i, j] - W[ni, nj]))
            ls[i, j] = np.mean(ds)
    return ls.ravel()


_MAGIC = b"SOMCKPT1"


def save_checkpoint(grid: SomGrid, path: str | Path) -> None:
    """Header (JSON config echo) + little-endian float32 weights, node-major."""
    header = json.dumps(
        {
            "rows": grid.config.rows,
            "cols": grid.config.cols,
            "dim": grid.weights.shape[1],
            "config": asdict(grid.config),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(grid.weights.astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> SomGrid:
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise SomError("not a SOM checkpoint file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        weights = np.frombuffer(f.read(), dtype="<f4").astype(np.float64)
    config = SomConfig(**header["config"])
    weights = weights.reshape(config.rows * config.cols, header["dim"])
    return SomGrid(config=config, weights=weights)
