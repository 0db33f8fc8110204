"""Per-step combination weights for each training strategy.

Strategies map the current per-group losses and gradients to simplex
weights w, and the update direction is d = sum_k w_k g_k (after the
controlling vector has rescaled losses and gradients):

* erm       -- weights proportional to group sample counts, i.e. the
               pooled-data gradient.
* average   -- uniform 1/K weights.
* groupdro  -- one-hot on the highest-loss group (lowest index on ties).
* mgda      -- minimum-norm point in the gradient hull.
* cpt       -- the constrained balancer: maximize alignment with the
               entropy-ascent direction d_ent subject to not increasing
               any worst-set group loss ((Mw)_k >= 0) and doing at least
               as well as d_ent on every other group ((Mw)_k >= (Mw')_k),
               solved as an LP over the simplex via the Gram matrix M.
               Once ||d_ent|| <= eps the losses count as balanced and the
               step falls back to the uniform average.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import lp
from .entropy import alt_coefficients, entropy_coefficients, softmax_losses
from .group_state import (
    apply_control,
    combine,
    controlling_vector,
    gradient_set,
    gram,
    loss_vector,
    simplex_weights,
)
from .minnorm import frank_wolfe_minnorm

__all__ = ["Strategy", "BalancerConfig", "StepDiagnostics", "StepDecision", "step"]

BRANCH_LP_OPTIMAL = "lp_optimal"
BRANCH_LP_FALLBACK = "lp_fallback"
BRANCH_EPS_BALANCED = "eps_balanced"
BRANCH_STRATEGY_FIXED = "strategy_fixed"


class Strategy(enum.Enum):
    ERM_POOLED = "erm"
    AVERAGE_GRADIENT = "average"
    GROUP_DRO = "groupdro"
    MGDA = "mgda"
    CPT = "cpt"

    @classmethod
    def parse(cls, name) -> "Strategy":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name))
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown strategy {name!r}; valid: {valid}") from None


_COEFFICIENT_VARIANTS = ("softmax", "alt")
_FALLBACKS = ("worst_only", "min_norm")


@dataclass(frozen=True)
class BalancerConfig:
    """Knobs for the cpt branch.

    eps_balance is compared against ||d_ent|| computed from the
    control-scaled losses and gradients; tie_tol decides which groups
    count as worst (everything within tie_tol of the max loss).
    """

    eps_balance: float = 1e-4
    tie_tol: float = 1e-9
    coefficient_variant: str = "softmax"
    fallback: str = "worst_only"

    def __post_init__(self):
        if not (np.isfinite(self.eps_balance) and self.eps_balance > 0.0):
            raise ValueError("eps_balance must be > 0")
        if not (np.isfinite(self.tie_tol) and self.tie_tol >= 0.0):
            raise ValueError("tie_tol must be >= 0")
        if self.coefficient_variant not in _COEFFICIENT_VARIANTS:
            raise ValueError(f"coefficient_variant must be one of {_COEFFICIENT_VARIANTS}")
        if self.fallback not in _FALLBACKS:
            raise ValueError(f"fallback must be one of {_FALLBACKS}")


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step audit data.

    For cpt decisions d_ent is the direction the balancer actually used
    (softmax or alt variant per config); for the fixed strategies it is
    the softmax-variant direction, recorded purely as a diagnostic.
    """

    dent_norm: float
    worst_set: tuple
    dir_dot_g: np.ndarray  # <direction, g_k> per group, control-scaled g
    dent_dot_g: np.ndarray  # <d_ent, g_k> per group

    def constraint_slacks(self) -> np.ndarray:
        """Slack of the balancer constraint each group ends up with."""
        slacks = self.dir_dot_g - self.dent_dot_g
        slacks = np.array(slacks, dtype=np.float64)
        for k in self.worst_set:
            slacks[k] = self.dir_dot_g[k]
        return slacks


@dataclass(frozen=True)
class StepDecision:
    weights: np.ndarray
    direction: np.ndarray
    branch: str
    diagnostics: StepDiagnostics


def _worst_set(losses: np.ndarray, tie_tol: float) -> tuple:
    cutoff = losses.max() - tie_tol
    return tuple(int(k) for k in np.nonzero(losses >= cutoff)[0])


def step(
    losses,
    g,
    c=None,
    strategy=Strategy.CPT,
    cfg: BalancerConfig | None = None,
    group_sizes=None,
) -> StepDecision:
    """Decide the combination weights and update direction for one step.

    `c` defaults to all ones (no control).  `group_sizes` carries the
    per-group sample counts and is required by the erm strategy.  The
    returned direction is combine() of the control-scaled gradients, so
    the caller's update is exactly theta <- theta - eta * direction.
    """
    losses = loss_vector(losses)
    g = gradient_set(g)
    k = losses.shape[0]
    if g.shape[0] != k:
        raise ValueError(f"losses have {k} groups but gradients have {g.shape[0]}")
    c = np.ones(k) if c is None else controlling_vector(c)
    strategy = Strategy.parse(strategy)
    cfg = BalancerConfig() if cfg is None else cfg

    losses, g = apply_control(losses, g, c)

    if strategy is Strategy.ERM_POOLED:
        if group_sizes is None:
            raise ValueError("erm strategy requires group_sizes")
        sizes = np.asarray(group_sizes, dtype=np.float64)
        if sizes.shape != (k,) or np.min(sizes) <= 0:
            raise ValueError("group_sizes must be K positive counts")
        weights = simplex_weights(sizes / sizes.sum())
        return _fixed(losses, g, weights, cfg)

    if strategy is Strategy.AVERAGE_GRADIENT:
        return _fixed(losses, g, simplex_weights(np.full(k, 1.0 / k)), cfg)

    if strategy is Strategy.GROUP_DRO:
        worst = int(np.argmax(losses))  # first max wins ties
        weights = np.zeros(k)
        weights[worst] = 1.0
        direction = g[worst].copy()
        return _decision(losses, g, weights, direction, BRANCH_STRATEGY_FIXED, cfg)

    if strategy is Strategy.MGDA:
        weights = frank_wolfe_minnorm(gram(g)).weights
        return _fixed(losses, g, weights, cfg)

    return _cpt_step(losses, g, cfg)


def _fixed(losses, g, weights, cfg) -> StepDecision:
    return _decision(losses, g, weights, combine(g, weights), BRANCH_STRATEGY_FIXED, cfg)


def _decision(losses, g, weights, direction, branch, cfg, dent=None) -> StepDecision:
    if dent is None:
        dent = entropy_coefficients(softmax_losses(losses)) @ g
    diag = StepDiagnostics(
        dent_norm=float(np.linalg.norm(dent)),
        worst_set=_worst_set(losses, cfg.tie_tol),
        dir_dot_g=g @ direction,
        dent_dot_g=g @ dent,
    )
    return StepDecision(weights=weights, direction=direction, branch=branch, diagnostics=diag)


def _cpt_step(losses, g, cfg) -> StepDecision:
    k = losses.shape[0]
    uniform = simplex_weights(np.full(k, 1.0 / k))

    if not np.any(g):
        zero = np.zeros(g.shape[1])
        return _decision(losses, g, uniform, zero, BRANCH_EPS_BALANCED, cfg, dent=zero)

    wprime = _coefficients(losses, cfg)
    dent = wprime @ g
    if float(np.linalg.norm(dent)) <= cfg.eps_balance:
        return _decision(
            losses, g, uniform, combine(g, uniform), BRANCH_EPS_BALANCED, cfg, dent=dent
        )

    m = gram(g)
    v = m @ wprime  # v_k = <d_ent, g_k>; also the LP objective vector
    worst = _worst_set(losses, cfg.tie_tol)
    worst_mask = np.zeros(k, dtype=bool)
    worst_mask[list(worst)] = True
    bounds = np.where(worst_mask, 0.0, v)

    full = lp.solve(lp.LpProblem(objective=v, constraints=tuple(zip(m, bounds))))
    if full.status == "optimal":
        weights = full.w
        branch = BRANCH_LP_OPTIMAL
    elif cfg.fallback == "min_norm":
        weights = frank_wolfe_minnorm(m).weights
        branch = BRANCH_LP_FALLBACK
    else:
        # keep only the worst-set constraints; the min-norm point of the
        # worst gradients is always feasible for them, so this must solve
        relaxed = lp.solve(
            lp.LpProblem(objective=v, constraints=tuple((m[j], 0.0) for j in worst))
        )
        if relaxed.status != "optimal":
            raise RuntimeError("worst-only fallback LP unexpectedly infeasible")
        weights = relaxed.w
        branch = BRANCH_LP_FALLBACK
    return _decision(losses, g, weights, combine(g, weights), branch, cfg, dent=dent)


def _coefficients(losses, cfg) -> np.ndarray:
    if cfg.coefficient_variant == "alt":
        return alt_coefficients(losses)
    return entropy_coefficients(softmax_losses(losses))
