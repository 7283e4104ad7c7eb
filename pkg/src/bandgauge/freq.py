"""High- and low-frequency map generation.

The high-frequency map is the gradient magnitude under the isotropic Sobel
operator (sqrt-2 center weights), with image borders handled by edge
replication.

The low-frequency map is a piecewise-smooth approximation of the input: the
minimizer of

    F(L) = 1/2 sum (I - L)^2  +  alpha * sum_active (L_q - L_p)^2  +  beta*|E|

where the second sum runs over 4-neighbour pixel pairs whose endpoints both
lie outside a frozen edge set E.  E is fixed up front from the input's
forward-difference gradient magnitude (threshold tau, default mean + 2 std),
which turns the problem into a single positive-definite quadratic.  That
quadratic is solved by red-black Gauss-Seidel sweeps with natural (Neumann)
boundary handling; red-black ordering makes every sweep deterministic and
exact coordinate minimization makes the energy non-increasing per sweep.
Smoothing never crosses E, so strong edges survive while plateau noise is
averaged away.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import PlanarImage

_SQ2 = np.sqrt(2.0)
SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-_SQ2, 0.0, _SQ2], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True)
class HighFreqMap:
    """Non-negative gradient magnitudes, same shape as the source."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("expected a 2-D magnitude field")
        if v.size and float(v.min()) < 0.0:
            raise ValueError("gradient magnitudes must be non-negative")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class LowFreqMap:
    """Smoothed field in [0, 1] plus the per-sweep energy trace."""

    values: np.ndarray
    energy_trace: tuple = ()

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2:
            raise ValueError("expected a 2-D field")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if len(self.energy_trace) >= 2 and self.energy_trace[-1] > self.energy_trace[0] + 1e-9:
            raise ValueError("solver ended above its starting energy")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PwsConfig:
    """Solver knobs for the piecewise-smooth decomposition.

    edge_threshold None means: derive tau per image as mean + 2 std of the
    forward-difference gradient magnitude.
    """

    reg_alpha: float = 2.0
    reg_beta: float = 0.05
    edge_threshold: float | None = None
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.reg_alpha <= 0 or self.reg_beta <= 0:
            raise ValueError("regularization constants must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def _as_plane(img) -> np.ndarray:
    if isinstance(img, PlanarImage):
        if img.channels != 1 or not img.is_float:
            raise ValueError("expected a 1-channel float image")
        return img.planes[0].astype(np.float64)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D array")
    return arr


def sobel_hfm(patch) -> HighFreqMap:
    """Gradient-magnitude map of a 1-channel float patch."""
    arr = _as_plane(patch)
    if min(arr.shape) < 3:
        raise ValueError("patch must be at least 3x3")
    h, w = arr.shape
    p = np.pad(arr, 1, mode="edge")
    # Opposite kernel taps are differenced first so constants cancel exactly.
    east_west = p[:, 2 : w + 2] - p[:, 0:w]
    gx = east_west[0:h] + _SQ2 * east_west[1 : h + 1] + east_west[2 : h + 2]
    south_north = p[2 : h + 2, :] - p[0:h, :]
    gy = south_north[:, 0:w] + _SQ2 * south_north[:, 1 : w + 1] + south_north[:, 2 : w + 2]
    return HighFreqMap(np.sqrt(gx * gx + gy * gy))


def gradient_magnitude(arr: np.ndarray) -> np.ndarray:
    """Forward-difference gradient magnitude, zero on the far borders."""
    dx = np.zeros_like(arr)
    dy = np.zeros_like(arr)
    dx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    dy[:-1, :] = arr[1:, :] - arr[:-1, :]
    return np.sqrt(dx * dx + dy * dy)


def edge_set(img, threshold: float | None = None) -> np.ndarray:
    """Boolean mask of pixels whose gradient magnitude exceeds the cutoff."""
    arr = _as_plane(img)
    mag = gradient_magnitude(arr)
    if threshold is None:
        threshold = float(mag.mean() + 2.0 * mag.std())
    return mag > threshold


def _pair_masks(edges: np.ndarray):
    # A smoothness pair is active only when neither endpoint is an edge pixel.
    keep = ~edges
    active_h = keep[:, :-1] & keep[:, 1:]
    active_v = keep[:-1, :] & keep[1:, :]
    return active_h, active_v


def pws_energy(i_arr, l_arr, edges: np.ndarray, cfg: PwsConfig) -> float:
    """Discrete objective value for a candidate smooth field."""
    i_arr = _as_plane(i_arr)
    l_arr = _as_plane(l_arr)
    if i_arr.shape != l_arr.shape or i_arr.shape != edges.shape:
        raise ValueError("image, field, and edge mask must share one shape")
    active_h, active_v = _pair_masks(edges)
    data = 0.5 * float(((i_arr - l_arr) ** 2).sum())
    dh = l_arr[:, 1:] - l_arr[:, :-1]
    dv = l_arr[1:, :] - l_arr[:-1, :]
    smooth = float((dh * dh)[active_h].sum() + (dv * dv)[active_v].sum())
    return data + cfg.reg_alpha * smooth + cfg.reg_beta * float(edges.sum())


def pws_lfm(img, cfg: PwsConfig = PwsConfig()) -> LowFreqMap:
    """Low-frequency map: solve the frozen-edge quadratic for the input."""
    arr = _as_plane(img)
    if not np.isfinite(arr).all():
        raise ValueError("input contains non-finite samples")
    edges = edge_set(arr, cfg.edge_threshold)
    active_h, active_v = _pair_masks(edges)
    h, w = arr.shape

    wl = np.zeros((h, w))
    wr = np.zeros((h, w))
    wu = np.zeros((h, w))
    wd = np.zeros((h, w))
    wl[:, 1:] = active_h
    wr[:, :-1] = active_h
    wu[1:, :] = active_v
    wd[:-1, :] = active_v
    deg = wl + wr + wu + wd

    a2 = 2.0 * cfg.reg_alpha
    diag = 1.0 + a2 * deg
    yy, xx = np.indices((h, w))
    red = (yy + xx) % 2 == 0
    black = ~red

    l_cur = arr.copy()
    trace = [pws_energy(arr, l_cur, edges, cfg)]
    for _ in range(cfg.max_iters):
        for mask in (red, black):
            ns = _neighbor_sum(l_cur, wl, wr, wu, wd)
            l_cur[mask] = (arr[mask] + a2 * ns[mask]) / diag[mask]
        trace.append(pws_energy(arr, l_cur, edges, cfg))
        prev, cur = trace[-2], trace[-1]
        if abs(prev - cur) <= cfg.tol * max(abs(prev), 1e-30):
            break
    return LowFreqMap(np.clip(l_cur, arr.min(), arr.max()), tuple(trace))


def _neighbor_sum(l_cur, wl, wr, wu, wd):
    ns = np.zeros_like(l_cur)
    ns[:, 1:] += wl[:, 1:] * l_cur[:, :-1]
    ns[:, :-1] += wr[:, :-1] * l_cur[:, 1:]
    ns[1:, :] += wu[1:, :] * l_cur[:-1, :]
    ns[:-1, :] += wd[:-1, :] * l_cur[1:, :]
    return ns
