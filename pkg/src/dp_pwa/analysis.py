"""Suboptimality bounds and empirical privacy audits."""
from __future__ import annotations

import dataclasses
import math
from collections.abc import Callable, Sequence

import numpy as np

from .core import Instance, InputError, PwaObjective, as_budget
from .samplers import RandomSource
from .solver import brute_force_optimum


@dataclasses.dataclass(frozen=True)
class BoundReport:
    bound_name: str
    value: float
    inputs: dict

    def __post_init__(self):
        if not self.value >= 0:
            raise InputError(f"{self.bound_name}: bound must be nonnegative, got {self.value}")

    def to_dict(self) -> dict:
        return {"bound": self.bound_name, "value": self.value, **self.inputs}


def _require_positive(**named):
    for name, v in named.items():
        if not (v > 0 and math.isfinite(v)):
            raise InputError(f"{name} must be positive and finite, got {v}")


def bound_solution_perturbation(G: float, d: int, delta: float, eps) -> BoundReport:
    """``G d^{3/2} delta / eps`` for the solution-perturbation mechanism.

    ``delta`` is the per-coordinate sensitivity, i.e. the L2 bound divided by ``sqrt(d)``.
    """
    eps = as_budget(eps).epsilon
    _require_positive(G=G, d=d, delta=delta, eps=eps)
    value = G * d**1.5 * delta / eps
    return BoundReport("solution_perturbation", value, {"G": G, "d": d, "delta": delta, "eps": eps})


def bound_exponential_mean(b_max: float, eps, C0: float) -> BoundReport:
    """``C(0, eps) * 2 b_max / eps`` for the continuous exponential mechanism."""
    eps = as_budget(eps).epsilon
    _require_positive(b_max=b_max, eps=eps, C0=C0)
    return BoundReport(
        "exponential_mean", C0 * 2.0 * b_max / eps, {"b_max": b_max, "eps": eps, "C0": C0}
    )


def exponential_tail_bound(C: float, gamma: float, eps, b_max: float) -> float:
    """``P[f(M_E) - f_opt >= gamma] <= C(gamma, eps) exp(-eps gamma / (2 b_max))``."""
    return C * math.exp(-as_budget(eps).epsilon * gamma / (2.0 * b_max))


@dataclasses.dataclass(frozen=True)
class CEstimate:
    value: float
    stderr: float
    n_samples: int

    def __float__(self):
        return self.value


def estimate_C(
    instance: Instance,
    gamma: float,
    eps,
    n_samples: int,
    rng: RandomSource,
    f_opt: float | None = None,
) -> CEstimate:
    """Monte Carlo estimate of the exponential-mechanism constant ``C(gamma, eps)``.

    Uniform points on the box; the box volume cancels in the ratio, leaving
    ``P_u[f >= f_opt + gamma] / E_u[exp(-eps (f - f_opt) / (2 b_max))]``.
    The standard error comes from the delta method for a ratio of means.
    """
    box = instance.box
    if box.volume == 0:
        raise InputError("box has zero volume")
    if gamma < 0:
        raise InputError("gamma must be nonnegative")
    eps = as_budget(eps).epsilon
    if f_opt is None:
        f_opt, _ = brute_force_optimum(instance)
    X = box.lower + (box.upper - box.lower) * rng.gen.random((n_samples, box.d))
    gap = instance.objective.values(X) - f_opt
    den = np.exp(-eps * gap / (2.0 * instance.b_max))
    # f >= f_opt holds everywhere on the box; skip the comparison so an
    # approximate f_opt cannot drop points
    num = np.ones(n_samples) if gamma == 0 else (gap >= gamma).astype(float)
    ratio = num.mean() / den.mean()
    resid = num - ratio * den
    stderr = float(np.sqrt(resid.var(ddof=1) / n_samples) / den.mean()) if n_samples > 1 else math.inf
    return CEstimate(float(ratio), stderr, n_samples)


@dataclasses.dataclass(frozen=True)
class DiscreteExpBounds:
    threshold: float  # score gap exceeded with probability at most ``tail``
    tail: float
    mean: float


def exp_mech_discrete_bounds(sensitivity: float, eps, q_size: int, t: float) -> DiscreteExpBounds:
    """Tail and mean suboptimality of the exponential mechanism over ``q_size`` outcomes.

    ``P[u_opt - u >= 2 sensitivity (log q_size + t) / eps] <= exp(-t)``, and
    ``E[u_opt - u] <= 2 sensitivity (1 + log q_size) / eps``.
    """
    eps = as_budget(eps).epsilon
    if q_size < 1:
        raise InputError("q_size must be at least 1")
    if t < 0:
        raise InputError("t must be nonnegative")
    scale = 2.0 * sensitivity / eps
    return DiscreteExpBounds(
        threshold=scale * (math.log(q_size) + t),
        tail=math.exp(-t),
        mean=scale * (1.0 + math.log(q_size)),
    )


def gamma_bar(z: float, b_max: float, m: int) -> float:
    """Expected score gap ``2 b_max (1 + log m) / z`` of a private subgradient with budget ``z``."""
    if not z > 0:
        raise InputError("z must be positive")
    if m < 1:
        raise InputError("m must be at least 1")
    return 2.0 * b_max * (1.0 + math.log(m)) / z


def bound_dp_subgradient(
    R: float, G: float, alphas, eps, k: int, b_max: float, m: int
) -> BoundReport:
    """Expected best-iterate suboptimality after ``k`` DP subgradient steps.

    ``(R^2 + G^2 sum alpha^2) / (2 sum alpha) + gamma_bar(eps / k)``.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (k,):
        raise InputError(f"need {k} step sizes, got shape {alphas.shape}")
    eps = as_budget(eps).epsilon
    s1, s2 = float(alphas.sum()), float(np.square(alphas).sum())
    classical = (R**2 + G**2 * s2) / (2.0 * s1)
    privacy = gamma_bar(eps / k, b_max, m) if b_max > 0 else 0.0
    inputs = {
        "R": R, "G": G, "k": k, "eps": eps, "b_max": b_max, "m": m,
        "sum_alpha": s1, "sum_alpha_sq": s2, "classical_term": classical, "privacy_term": privacy,
    }
    return BoundReport("dp_subgradient", classical + privacy, inputs)


def dp_subgradient_bound_curve(R, G, eps, b_max, m, ks: Sequence[int]) -> np.ndarray:
    """Bound as a function of ``k`` with the constant step ``R / (G sqrt k)``."""
    out = []
    for k in ks:
        alphas = np.full(k, R / (G * math.sqrt(k)))
        out.append(bound_dp_subgradient(R, G, alphas, eps, k, b_max, m).value)
    return np.array(out)


def detection_lower_bound(eps, p_fn: float) -> float:
    """Smallest false-positive rate compatible with ``eps``-DP at false-negative rate ``p_fn``."""
    eps = as_budget(eps).epsilon
    if not 0.0 <= p_fn <= 1.0:
        raise InputError("p_fn must lie in [0, 1]")
    return max(1.0 - math.exp(eps) * p_fn, math.exp(-eps) * (1.0 - p_fn), 0.0)


@dataclasses.dataclass(frozen=True)
class DetectionPoint:
    threshold_rule: str
    p_fp: float
    p_fn: float
    n_samples: int = 0
    satisfied: bool = True

    def __post_init__(self):
        if not (0.0 <= self.p_fp <= 1.0 and 0.0 <= self.p_fn <= 1.0):
            raise InputError("detection probabilities must lie in [0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def detection_inequalities_hold(
    p_fp: float, p_fn: float, eps: float, n: int, n_sigma: float = 3.0
) -> bool:
    """Both ``p_fn + e^eps p_fp >= 1`` and ``e^eps p_fn + p_fp >= 1`` up to ``n_sigma`` SE.

    Binomial variances use rates clipped to ``[1/n, 1 - 1/n]`` so that an
    empty bin does not claim zero uncertainty.
    """
    e = math.exp(eps)

    def var(p):
        p = min(max(p, 1.0 / n), 1.0 - 1.0 / n)
        return p * (1.0 - p) / n

    se1 = math.sqrt(var(p_fn) + e * e * var(p_fp))
    se2 = math.sqrt(e * e * var(p_fn) + var(p_fp))
    return (p_fn + e * p_fp >= 1.0 - n_sigma * se1) and (e * p_fn + p_fp >= 1.0 - n_sigma * se2)


# Output samplers for auditing: (instance, eps, rngs) -> points of shape (n, d)
PointSampler = Callable[[Instance, float, Sequence[RandomSource]], np.ndarray]


def audit_detection(
    mechanism: PointSampler,
    instance_D: Instance,
    instance_Dadj: Instance,
    eps,
    n_samples: int,
    rule_grid: Sequence[float] | None,
    rng: RandomSource,
) -> list[DetectionPoint]:
    """Empirical false-positive / false-negative rates of threshold detectors.

    The detector reports "user present" when the first output coordinate is
    above (or, for the mirrored rule, at most) a threshold.  ``D`` is the
    database with the user, ``D'`` the one without.  With ``rule_grid=None``
    the thresholds are the 5%..95% quantiles of the pooled outputs.
    """
    if not instance_D.is_adjacent(instance_Dadj):
        raise InputError("audit requires adjacent instances")
    eps = as_budget(eps).epsilon
    out_D = np.asarray(mechanism(instance_D, eps, rng.derive_child(0).spawn(n_samples)))[:, 0]
    out_Dp = np.asarray(mechanism(instance_Dadj, eps, rng.derive_child(1).spawn(n_samples)))[:, 0]
    if rule_grid is None:
        rule_grid = np.quantile(np.concatenate([out_D, out_Dp]), np.linspace(0.05, 0.95, 19))
    points = []
    for t in rule_grid:
        above_D, above_Dp = float(np.mean(out_D > t)), float(np.mean(out_Dp > t))
        for rule, p_fp, p_fn in (
            (f"x0 > {t:.6g}", above_Dp, 1.0 - above_D),
            (f"x0 <= {t:.6g}", 1.0 - above_Dp, above_D),
        ):
            ok = detection_inequalities_hold(p_fp, p_fn, eps, n_samples)
            points.append(DetectionPoint(rule, p_fp, p_fn, n_samples, ok))
    return points


def audit_sensitivity_bruteforce(
    d: int,
    m: int,
    n_pairs: int,
    n_points: int,
    rng: RandomSource,
    b_max: float = 0.5,
    include_extreme: bool = True,
) -> float:
    """Largest observed ``|f(x, D) - f(x, D')|`` over random adjacent pairs.

    Each pair draws Gaussian ``A, b`` and ``b' = b + b_max * u`` with ``u``
    uniform on ``[-1, 1]^m``; points are uniform on ``[-1, 1]^d``.  With
    ``include_extreme`` the uniform shift ``b' = b + b_max`` is also tried,
    which attains ``b_max`` exactly.
    """
    g = rng.gen
    worst = 0.0
    for p in range(n_pairs):
        A = g.standard_normal((m, d))
        b = g.standard_normal(m)
        X = g.uniform(-1.0, 1.0, (n_points, d))
        obj = PwaObjective(A, b)
        base = obj.values(X)
        shifts = [b_max * g.uniform(-1.0, 1.0, m)]
        if include_extreme and p == 0:
            shifts.append(np.full(m, b_max))
        for s in shifts:
            worst = max(worst, float(np.max(np.abs(obj.values(X, b + s) - base))))
    return worst
