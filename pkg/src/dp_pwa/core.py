"""Problem representation: piecewise-affine objectives, boxes, adjacency, generators.

An objective is ``f(x) = max_i (a_i . x + b_i)``.  The offsets ``b`` are the
private database; ``A`` and the box are public.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
from pathlib import Path

import numpy as np

L1_PIECE_CAP = 2**16


class InputError(ValueError):
    """Malformed input to a core operation (shape mismatch, bad domain)."""


class SizeError(InputError):
    """Requested problem is larger than a configured cap."""


def _frozen_array(x, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class PwaObjective:
    """Max of ``m`` affine pieces in ``d`` dimensions.

    ``A`` has shape ``(m, d)`` and ``b`` shape ``(m,)``.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _frozen_array(self.A, 2, "A")
        b = _frozen_array(self.b, 1, "b")
        if A.shape[0] < 1:
            raise InputError("need at least one affine piece")
        if A.shape[0] != b.shape[0]:
            raise InputError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def rows(self) -> list[tuple[np.ndarray, float]]:
        return [(self.A[i], float(self.b[i])) for i in range(self.m)]

    @property
    def lipschitz(self) -> float:
        """``G = max_i ||a_i||_2``."""
        return float(np.max(np.linalg.norm(self.A, axis=1)))

    def with_offsets(self, b) -> PwaObjective:
        return PwaObjective(self.A, b)

    def prefix(self, m: int) -> PwaObjective:
        """First ``m`` pieces (used for nested piece-count sweeps)."""
        if not 1 <= m <= self.m:
            raise InputError(f"prefix length {m} outside [1, {self.m}]")
        return PwaObjective(self.A[:m], self.b[:m])

    def scores(self, X: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        """Piece values ``a_i . x + b_i`` for each row of ``X``, shape ``(n, m)``.

        ``b`` may be given per row with shape ``(n, m)`` to evaluate a batch of
        databases sharing ``A``.  The sum runs over coordinates elementwise
        rather than through BLAS, so a row's result does not depend on how
        many rows are evaluated together.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.multiply.outer(X[:, 0], self.A[:, 0])
        for j in range(1, self.d):
            out += np.multiply.outer(X[:, j], self.A[:, j])
        out += self.b if b is None else b
        return out

    def values(self, X: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        """Vectorized ``f`` over the rows of ``X`` (shape ``(n, d)``)."""
        return self.scores(X, b).max(axis=-1)

    def __eq__(self, other):
        if not isinstance(other, PwaObjective):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)


@dataclasses.dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen_array(self.lower, 1, "lower")
        hi = _frozen_array(self.upper, 1, "upper")
        if lo.shape != hi.shape:
            raise InputError("lower and upper must have the same length")
        if np.any(lo > hi):
            raise InputError("lower must not exceed upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, d: int, half_width: float) -> Box:
        """The hypercube ``[-half_width, half_width]^d``."""
        if half_width < 0:
            raise InputError("half_width must be nonnegative")
        return cls(np.full(d, -half_width), np.full(d, half_width))

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> float:
        """Largest per-coordinate half-width (``c`` for a symmetric cube)."""
        return float(np.max(0.5 * (self.upper - self.lower)))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def clamp(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def contains(self, X: np.ndarray, tol: float = 0.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=-1)

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)


@dataclasses.dataclass(frozen=True)
class AdjacencySpec:
    """Databases ``b, b'`` are adjacent iff ``max_i |b_i - b'_i| <= b_max``."""

    b_max: float

    def __post_init__(self):
        if not (self.b_max > 0 and math.isfinite(self.b_max)):
            raise InputError("b_max must be positive and finite")

    def adjacent(self, b, b_other, tol: float = 1e-12) -> bool:
        b, b_other = np.asarray(b, float), np.asarray(b_other, float)
        if b.shape != b_other.shape:
            return False
        return bool(np.max(np.abs(b - b_other), initial=0.0) <= self.b_max + tol)


@dataclasses.dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise InputError("epsilon must be positive")

    def split(self, k: int) -> PrivacyBudget:
        """Per-step budget for ``k`` sequential uses."""
        return PrivacyBudget(self.epsilon / k)


def as_budget(eps) -> PrivacyBudget:
    return eps if isinstance(eps, PrivacyBudget) else PrivacyBudget(float(eps))


@dataclasses.dataclass(frozen=True, eq=False)
class Instance:
    """An objective, its feasible box and the adjacency relation on ``b``."""

    objective: PwaObjective
    box: Box
    adjacency: AdjacencySpec

    def __post_init__(self):
        if self.objective.d != self.box.d:
            raise InputError(
                f"objective dimension {self.objective.d} != box dimension {self.box.d}"
            )

    @property
    def d(self) -> int:
        return self.objective.d

    @property
    def m(self) -> int:
        return self.objective.m

    @property
    def b_max(self) -> float:
        return self.adjacency.b_max

    def with_offsets(self, b) -> Instance:
        return Instance(self.objective.with_offsets(b), self.box, self.adjacency)

    def with_box(self, box: Box) -> Instance:
        return Instance(self.objective, box, self.adjacency)

    def is_adjacent(self, other: Instance) -> bool:
        """Same public data (``A``, box, ``b_max``) and adjacent offsets."""
        return (
            np.array_equal(self.objective.A, other.objective.A)
            and self.box == other.box
            and self.b_max == other.b_max
            and self.adjacency.adjacent(self.objective.b, other.objective.b)
        )

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.objective == other.objective
            and self.box == other.box
            and self.adjacency == other.adjacency
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "A": self.objective.A.tolist(),
            "b": self.objective.b.tolist(),
            "box": {"lower": self.box.lower.tolist(), "upper": self.box.upper.tolist()},
            "b_max": self.b_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Instance:
        try:
            obj = PwaObjective(data["A"], data["b"])
            box = Box(data["box"]["lower"], data["box"]["upper"])
            inst = cls(obj, box, AdjacencySpec(float(data["b_max"])))
        except KeyError as exc:
            raise InputError(f"instance is missing field {exc}") from None
        if inst.d != data.get("d", inst.d) or inst.m != data.get("m", inst.m):
            raise InputError("declared d/m do not match A")
        return inst

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> Instance:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_point(obj: PwaObjective, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (obj.d,):
        raise InputError(f"point has shape {x.shape}, expected ({obj.d},)")
    return x


def evaluate(obj: PwaObjective, x) -> tuple[float, int]:
    """Value of ``f`` at ``x`` and the smallest index of a maximizing piece."""
    x = _check_point(obj, x)
    scores = obj.scores(x[None, :])[0]
    k = int(np.argmax(scores))  # argmax returns the first maximizer
    return float(scores[k]), k


def true_subgradient(obj: PwaObjective, x0) -> np.ndarray:
    """Coefficient vector of the active piece at ``x0``."""
    _, k = evaluate(obj, x0)
    return obj.A[k].copy()


def data_sensitivity(m: int, adj: AdjacencySpec) -> float:
    """L2 sensitivity ``sqrt(m) * b_max`` of releasing the whole offset vector."""
    if m < 1:
        raise InputError("m must be at least 1")
    return math.sqrt(m) * adj.b_max


def box_diameter(box: Box) -> float:
    return float(np.linalg.norm(box.upper - box.lower))


def gen_linf(d: int) -> PwaObjective:
    """``||x||_inf`` as the ``2d`` pieces ``x_1, -x_1, ..., x_d, -x_d``."""
    if d < 1:
        raise InputError("d must be at least 1")
    eye = np.eye(d)
    A = np.empty((2 * d, d))
    A[0::2] = eye
    A[1::2] = -eye
    return PwaObjective(A, np.zeros(2 * d))


def gen_l1(d: int, cap: int = L1_PIECE_CAP) -> PwaObjective:
    """``||x||_1`` as the ``2^d`` sign patterns, ``+`` before ``-`` per coordinate."""
    if d < 1:
        raise InputError("d must be at least 1")
    if 2**d > cap:
        raise SizeError(f"gen_l1 needs 2**{d} pieces, above the cap of {cap}")
    A = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
    return PwaObjective(A, np.zeros(A.shape[0]))


def gen_gaussian(d: int, m: int, seed: int) -> PwaObjective:
    """I.i.d. standard normal ``(a_i, b_i)``.

    Rows are drawn in order from one stream, so the instance for ``m1 < m2``
    is a prefix of the instance for ``m2`` under the same seed.
    """
    if d < 1 or m < 1:
        raise InputError("d and m must be at least 1")
    rows = np.random.default_rng(seed).standard_normal((m, d + 1))
    return PwaObjective(rows[:, :d], rows[:, d])


@dataclasses.dataclass(frozen=True, eq=False)
class ResourceAllocationInstance:
    """Agents with utility gains ``gains`` up to caps ``caps``; resource price ``price``."""

    gains: np.ndarray
    caps: np.ndarray
    price: float = 0.0

    def __post_init__(self):
        gains = _frozen_array(self.gains, 1, "gains")
        caps = _frozen_array(self.caps, 1, "caps")
        if gains.shape != caps.shape or gains.size == 0:
            raise InputError("gains and caps must be nonempty and of equal length")
        if np.any(gains <= 0) or np.any(caps <= 0):
            raise InputError("gains and caps must be positive")
        if self.price < 0:
            raise InputError("price must be nonnegative")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "caps", caps)

    @property
    def n(self) -> int:
        return self.gains.shape[0]

    @property
    def total_cap(self) -> float:
        return float(self.caps.sum())


def utility_segments(inst: ResourceAllocationInstance) -> tuple[np.ndarray, np.ndarray]:
    """Slopes and intercepts of the concave utility ``U(x) = min_j (s_j x + t_j)``.

    Agents are filled in order of decreasing gain.  Segment ``j`` has slope equal
    to the ``j``-th largest distinct gain; a final zero-slope segment caps ``U``
    at the total attainable utility.  Agents with equal gain share a segment.
    """
    order = np.argsort(-inst.gains, kind="stable")
    gains, caps = inst.gains[order], inst.caps[order]
    slopes, intercepts = [], []
    filled_value = 0.0  # utility of the agents strictly above the current gain level
    filled_amount = 0.0
    j = 0
    while j < len(gains):
        g = gains[j]
        slopes.append(float(g))
        intercepts.append(filled_value - g * filled_amount)
        while j < len(gains) and gains[j] == g:
            filled_value += g * caps[j]
            filled_amount += caps[j]
            j += 1
    slopes.append(0.0)
    intercepts.append(filled_value)
    return np.array(slopes), np.array(intercepts)


def gen_resource_allocation(inst: ResourceAllocationInstance) -> PwaObjective:
    """Convex pieces of ``price * x - U(x)`` over ``x >= 0`` (one variable)."""
    slopes, intercepts = utility_segments(inst)
    A = (inst.price - slopes)[:, None]
    return PwaObjective(A, -intercepts)


def resource_box(inst: ResourceAllocationInstance) -> Box:
    """``[0, sum(caps)]``: buying beyond the total cap never adds utility."""
    return Box([0.0], [inst.total_cap])
