"""The four epsilon-DP mechanisms for piecewise-affine minimization.

* ``M_P``: vector Laplace noise on the offsets ``b``, then solve.
* ``M_S``: solve, then vector Laplace noise on the solution.
* ``M_E``: exponential mechanism over the box with score ``-f``.
* ``DP_SUBGRAD``: subgradient method whose subgradients are picked by the
  discrete exponential mechanism, budget ``eps / k`` per step.

Every mechanism has a batch form taking one :class:`RandomSource` per run.
Run ``j`` only consumes ``rngs[j]``, so a batch of ``n`` runs equals ``n``
single runs with the same sources.
"""
from __future__ import annotations

import dataclasses
from collections.abc import Sequence

import numpy as np

from .core import (
    AdjacencySpec,
    Instance,
    InputError,
    PwaObjective,
    as_budget,
    box_diameter,
    data_sensitivity,
)
from .samplers import (
    McmcConfig,
    RandomSource,
    exponential_mechanism_indices,
    metropolis_sample_batch,
    sample_discrete_exponential,
    sample_vector_laplace,
)
from .solver import (
    StepSchedule,
    accurate_schedule,
    default_schedule,
    projected_subgradient_batch,
)

M_P, M_S, M_E, DP_SUBGRAD = "M_P", "M_S", "M_E", "DP_SUBGRAD"
PRIVATE_MECHANISMS = (M_P, M_S, M_E, DP_SUBGRAD)

# inner non-private solves (M_P on noisy data, x_opt for M_S)
SOLVER_ITERATIONS = 2000


@dataclasses.dataclass
class MechanismOutput:
    """One private solution; ``value`` is ``f`` at ``point`` on the true data."""

    point: np.ndarray
    value: float
    epsilon_spent: float
    mechanism_id: str
    aux: dict = dataclasses.field(default_factory=dict)

    def to_dict(self) -> dict:
        def plain(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "mechanism": self.mechanism_id,
            "point": self.point.tolist(),
            "value": self.value,
            "epsilon": self.epsilon_spent,
            "aux": {k: plain(v) for k, v in self.aux.items()},
        }


@dataclasses.dataclass
class MechanismBatch:
    """``n`` runs of one mechanism; ``aux`` arrays are indexed by run first."""

    mechanism_id: str
    points: np.ndarray
    values: np.ndarray
    epsilon: float
    aux: dict = dataclasses.field(default_factory=dict)

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, j: int) -> MechanismOutput:
        aux = {}
        for key, v in self.aux.items():
            item = v[j]
            aux[key] = float(item) if np.ndim(item) == 0 else np.asarray(item)
        return MechanismOutput(
            self.points[j].copy(), float(self.values[j]), self.epsilon, self.mechanism_id, aux
        )


@dataclasses.dataclass(frozen=True)
class DpSubgradConfig:
    k: int = 100
    sched: StepSchedule | None = None  # None: constant R / (G sqrt(k))

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be at least 1")

    def schedule(self, instance: Instance) -> StepSchedule:
        return self.sched or default_schedule(instance, self.k)


def mech_data_laplace_batch(
    instance: Instance, eps, rngs: Sequence[RandomSource], solver_k: int = SOLVER_ITERATIONS
) -> MechanismBatch:
    eps = as_budget(eps)
    m = instance.m
    delta2 = data_sensitivity(m, instance.adjacency)
    noise = np.array([sample_vector_laplace(m, delta2, eps, r) for r in rngs]).reshape(-1, m)
    noisy_b = instance.objective.b + noise
    # solving the privatized problem is post-processing of noisy_b
    points, _ = projected_subgradient_batch(
        instance, solver_k, accurate_schedule(instance, solver_k), offsets=noisy_b
    )
    values = instance.objective.values(points)
    return MechanismBatch(M_P, points, values, eps.epsilon, {"noise_norm": np.linalg.norm(noise, axis=1)})


def mech_data_laplace(instance: Instance, eps, rng: RandomSource, solver_k: int = SOLVER_ITERATIONS):
    return mech_data_laplace_batch(instance, eps, [rng], solver_k)[0]


def solve_nonprivate(instance: Instance, k: int = SOLVER_ITERATIONS) -> np.ndarray:
    points, _ = projected_subgradient_batch(instance, k, accurate_schedule(instance, k))
    return points[0]


def mech_solution_laplace_batch(
    instance: Instance,
    eps,
    rngs: Sequence[RandomSource],
    sensitivity_bound: float | None = None,
    solver_k: int = SOLVER_ITERATIONS,
    x_opt: np.ndarray | None = None,
) -> MechanismBatch:
    """``x_opt + w`` with ``w`` calibrated to an L2 bound on the solution's sensitivity.

    ``sensitivity_bound`` defaults to the box diameter.  The released point is
    the raw point clamped into the box; the raw point is kept in ``aux``.
    """
    eps = as_budget(eps)
    if sensitivity_bound is None:
        sensitivity_bound = box_diameter(instance.box)
    if not sensitivity_bound > 0:
        raise InputError("sensitivity_bound must be positive")
    if x_opt is None:
        x_opt = solve_nonprivate(instance, solver_k)
    d = instance.d
    noise = np.array([sample_vector_laplace(d, sensitivity_bound, eps, r) for r in rngs]).reshape(-1, d)
    raw = x_opt + noise
    points = instance.box.clamp(raw)
    obj = instance.objective
    aux = {
        "raw_point": raw,
        "raw_value": obj.values(raw),
        "noise_norm": np.linalg.norm(noise, axis=1),
    }
    return MechanismBatch(M_S, points, obj.values(points), eps.epsilon, aux)


def mech_solution_laplace(
    instance: Instance, eps, rng: RandomSource, sensitivity_bound: float | None = None, **kw
) -> MechanismOutput:
    return mech_solution_laplace_batch(instance, eps, [rng], sensitivity_bound, **kw)[0]


def exponential_log_density(instance: Instance, eps):
    """``x -> -eps f(x) / (2 b_max)`` over rows of a point array."""
    scale = as_budget(eps).epsilon / (2.0 * instance.b_max)
    obj = instance.objective

    def log_density(X):
        return -scale * obj.values(X)

    return log_density


def mech_exponential_batch(
    instance: Instance, eps, rngs: Sequence[RandomSource], mcmc: McmcConfig | None = None
) -> MechanismBatch:
    eps = as_budget(eps)
    mcmc = mcmc or McmcConfig.for_box(instance.box)
    log_density = exponential_log_density(instance, eps)
    points = metropolis_sample_batch(log_density, instance.box, mcmc, rngs)
    return MechanismBatch(M_E, points, instance.objective.values(points), eps.epsilon)


def mech_exponential(instance: Instance, eps, mcmc: McmcConfig | None, rng: RandomSource):
    return mech_exponential_batch(instance, eps, [rng], mcmc)[0]


def private_subgradient(
    obj: PwaObjective, adj: AdjacencySpec, x0, eps_iter, rng: RandomSource, return_index: bool = False
):
    """Coefficient vector of a piece chosen by the exponential mechanism.

    Pieces are scored by their value ``a_i . x0 + b_i`` at ``x0`` (the active
    piece scores highest); the score sensitivity is ``b_max``.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise InputError("x0 must be finite")
    scores = obj.scores(x0[None, :])[0]
    i = sample_discrete_exponential(scores, adj.b_max, eps_iter, rng)
    g = obj.A[i].copy()
    return (g, i) if return_index else g


def dp_subgradient_batch(
    instance: Instance,
    eps,
    rngs: Sequence[RandomSource],
    cfg: DpSubgradConfig | None = None,
    trace: bool = False,
) -> MechanismBatch:
    """Projected DP subgradient method; releases the last iterate ``x^(k+1)``.

    ``aux`` carries diagnostics computed on the true data, which are not
    private: ``best_value`` (min of ``f`` over ``x^(1)..x^(k)``), ``gamma_mean``
    (mean score gap of the chosen pieces) and, with ``trace``, the iterates.
    """
    eps = as_budget(eps)
    cfg = cfg or DpSubgradConfig()
    k = cfg.k
    step_eps = eps.split(k)
    alphas = cfg.schedule(instance).steps(k)
    obj, box = instance.objective, instance.box
    n = len(rngs)
    u = np.array([r.gen.random(k) for r in rngs]).reshape(n, k)
    rows = np.arange(n)

    x = np.broadcast_to(box.center, (n, obj.d)).copy()
    iter_values = np.empty((n, k))
    gaps = np.empty((n, k))
    iterates = np.empty((n, k + 1, obj.d)) if trace else None
    for i in range(k):
        if trace:
            iterates[:, i] = x
        scores = obj.scores(x)
        top = scores.max(axis=1)
        chosen = exponential_mechanism_indices(scores, instance.b_max, step_eps, u[:, i])
        iter_values[:, i] = top
        gaps[:, i] = top - scores[rows, chosen]
        x = box.clamp(x - alphas[i] * obj.A[chosen])
    if trace:
        iterates[:, k] = x
    aux = {
        "best_value": iter_values.min(axis=1),
        "gamma_mean": gaps.mean(axis=1),
        "epsilon_per_step": np.full(n, step_eps.epsilon),
    }
    if trace:
        aux["iterates"] = iterates
        aux["iterate_values"] = iter_values
        aux["gamma"] = gaps
    return MechanismBatch(DP_SUBGRAD, x, obj.values(x), eps.epsilon, aux)


def dp_subgradient_method(
    instance: Instance, eps, cfg: DpSubgradConfig | None, rng: RandomSource, trace: bool = False
) -> MechanismOutput:
    return dp_subgradient_batch(instance, eps, [rng], cfg, trace)[0]


def run_mechanism_batch(
    name: str,
    instance: Instance,
    eps,
    rngs: Sequence[RandomSource],
    *,
    k: int = 100,
    mcmc: McmcConfig | None = None,
    x_opt: np.ndarray | None = None,
) -> MechanismBatch:
    """Dispatch by mechanism name with experiment-level options."""
    if name == M_P:
        return mech_data_laplace_batch(instance, eps, rngs)
    if name == M_S:
        return mech_solution_laplace_batch(instance, eps, rngs, x_opt=x_opt)
    if name == M_E:
        return mech_exponential_batch(instance, eps, rngs, mcmc)
    if name == DP_SUBGRAD:
        return dp_subgradient_batch(instance, eps, rngs, DpSubgradConfig(k=k))
    raise InputError(f"unknown mechanism {name!r}")

