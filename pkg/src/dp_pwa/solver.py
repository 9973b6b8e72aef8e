"""Non-private baselines: projected subgradient method and a grid-search oracle."""
from __future__ import annotations

import dataclasses
import itertools
import math

import logging

import numpy as np

from .core import Instance, InputError, SizeError, box_diameter

BRUTE_FORCE_MAX_DIM = 4

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha_i`` for ``i = 1..k``.

    ``constant``: ``alpha_i = alpha0``; ``scaled_inverse_sqrt``: ``alpha0 / sqrt(i)``;
    ``geometric``: ``alpha0 * ratio**(i-1)``.
    """

    kind: str = "constant"
    alpha0: float = 1.0
    ratio: float = 0.99

    def __post_init__(self):
        if self.kind not in ("constant", "scaled_inverse_sqrt", "geometric"):
            raise InputError(f"unknown step schedule kind {self.kind!r}")
        if not self.alpha0 > 0:
            raise InputError("alpha0 must be positive")
        if not 0 < self.ratio <= 1:
            raise InputError("ratio must lie in (0, 1]")

    def steps(self, k: int) -> np.ndarray:
        i = np.arange(1, k + 1, dtype=float)
        if self.kind == "constant":
            return np.full(k, self.alpha0)
        if self.kind == "scaled_inverse_sqrt":
            return self.alpha0 / np.sqrt(i)
        return self.alpha0 * self.ratio ** (i - 1)


def default_schedule(instance: Instance, k: int) -> StepSchedule:
    """Constant step ``R / (G sqrt(k))``, which minimizes the classical bound."""
    R = box_diameter(instance.box)
    G = instance.objective.lipschitz
    if R == 0 or G == 0:
        return StepSchedule("constant", 1.0)
    return StepSchedule("constant", R / (G * math.sqrt(k)))


def accurate_schedule(instance: Instance, k: int) -> StepSchedule:
    """Geometrically decaying steps from ``R / G`` down to ``~1e-9 R / G``.

    Converges linearly on sharp minima, which every piecewise-affine
    problem over a box has, so it is used wherever a near-exact
    non-private solution is needed.
    """
    R = box_diameter(instance.box)
    G = instance.objective.lipschitz
    alpha0 = 1.0 if R == 0 or G == 0 else R / G
    return StepSchedule("geometric", alpha0, ratio=1e-9 ** (1.0 / max(k - 1, 1)))


@dataclasses.dataclass
class SolveReport:
    best_point: np.ndarray
    best_value: float
    iterate_values: np.ndarray


def projected_subgradient_batch(
    instance: Instance,
    k: int,
    sched: StepSchedule | None = None,
    offsets: np.ndarray | None = None,
    trace: bool = False,
):
    """Projected subgradient on a batch of databases sharing ``A`` and the box.

    ``offsets`` has shape ``(n, m)`` (default: the instance's own ``b``).
    Iterates ``x^(1) .. x^(k)`` start at the box center; ``x^(i+1)`` is the
    clamp of ``x^(i) - alpha_i a_{k_i}`` with ``k_i`` the active piece.

    Returns ``(best_points, best_values)`` and, with ``trace``, also the
    ``(n, k)`` array of iterate values.
    """
    if k < 1:
        raise InputError("k must be at least 1")
    obj, box = instance.objective, instance.box
    B = obj.b[None, :] if offsets is None else np.asarray(offsets, dtype=float)
    n = B.shape[0]
    alphas = (sched or default_schedule(instance, k)).steps(k)
    rows = np.arange(n)

    x = np.broadcast_to(box.center, (n, obj.d)).copy()
    best_x = x.copy()
    best_v = np.full(n, np.inf)
    values = np.empty((n, k)) if trace else None
    for i in range(k):
        scores = obj.scores(x, B)
        active = scores.argmax(axis=1)
        v = scores[rows, active]
        if trace:
            values[:, i] = v
        better = v < best_v
        best_v = np.where(better, v, best_v)
        best_x[better] = x[better]
        if i + 1 < k:
            x = box.clamp(x - alphas[i] * obj.A[active])
    if trace:
        return best_x, best_v, values
    return best_x, best_v


def projected_subgradient(
    instance: Instance, k: int, sched: StepSchedule | None = None
) -> SolveReport:
    """Best of ``k`` projected subgradient iterates (default: constant ``R/(G sqrt k)`` steps)."""
    best_x, best_v, values = projected_subgradient_batch(instance, k, sched, trace=True)
    return SolveReport(best_x[0], float(best_v[0]), values[0])


def _cell_centers(lo: np.ndarray, hi: np.ndarray, resolution: int) -> np.ndarray:
    """Centers of the ``resolution**d`` equal cells tiling ``[lo, hi]``, lexicographic order."""
    frac = (2.0 * np.arange(resolution) + 1.0) / (2.0 * resolution)
    axes = [l + (h - l) * frac for l, h in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


DEFAULT_RESOLUTION = {1: 1001, 2: 101, 3: 41, 4: 17}
MAX_CELLS = 400_000


def brute_force_optimum(
    instance: Instance,
    resolution: int | None = None,
    levels: int = 60,
    tol: float = 1e-9,
) -> tuple[float, np.ndarray]:
    """Grid search over box cells, refined by branch and bound.

    Level 1 evaluates ``f`` at the centers of ``resolution**d`` cells (the
    default resolution depends on ``d``).  On a cell with center ``c`` and
    half-widths ``h`` each piece is at least ``a.c + b - |a|.h``, so the max
    of these bounds ``f`` from below.  Cells whose bound cannot beat the best
    value by more than ``tol`` are dropped, the rest are halved along every
    axis, for at most ``levels`` levels.  When the search runs out of cells
    the returned value is within ``tol`` of the true minimum.
    """
    d = instance.d
    if d > BRUTE_FORCE_MAX_DIM:
        raise SizeError(f"brute force supports d <= {BRUTE_FORCE_MAX_DIM}, got {d}")
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[d]
    if resolution < 2:
        raise InputError("resolution must be at least 2")
    obj, box = instance.objective, instance.box
    absA = np.abs(obj.A)
    centers = _cell_centers(box.lower, box.upper, resolution)
    half = (box.upper - box.lower) / (2.0 * resolution)
    children = np.array(list(itertools.product((-0.5, 0.5), repeat=d)))
    best_v, best_x = np.inf, box.center
    for _ in range(levels):
        vals = obj.values(centers)
        j = int(np.argmin(vals))
        if vals[j] < best_v:
            best_v, best_x = float(vals[j]), centers[j]
        lower_bound = (obj.scores(centers) - absA @ half).max(axis=1)
        live = centers[lower_bound < best_v - tol]
        if live.shape[0] == 0 or not np.any(half > 0):
            break
        if live.shape[0] * children.shape[0] > MAX_CELLS:
            log.warning("brute force stopped at %d live cells; result not certified", live.shape[0])
            break
        centers = (live[:, None, :] + children[None, :, :] * half).reshape(-1, d)
        half = half / 2.0
    return best_v, best_x.copy()
