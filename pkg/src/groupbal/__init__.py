"""Group-balanced gradient combination for worst-group robustness.

Per-step strategies (pooled ERM, uniform averaging, worst-group descent,
min-norm combination, and an entropy-guided constrained balancer with a
controlling vector), small models with exact manual gradients, a
synthetic spurious-correlation benchmark generator, a training harness
with worst-group early stopping, and group-robustness metrics.
"""

from . import balancer, cli, data_synth, entropy, group_state, lp, metrics, minnorm, models, train
from .balancer import BalancerConfig, StepDecision, Strategy
from .data_synth import Dataset, SyntheticSpec, bayes_reference, generate
from .lp import LpProblem, LpSolution
from .metrics import GroupMetrics, auroc, group_accuracy, loss_gap
from .minnorm import MinNormResult, frank_wolfe_minnorm
from .models import Batch, ModelSpec
from .train import DivergenceError, TrainConfig, TrainReport, fit, sweep_control

__version__ = "0.1.0"

__all__ = [
    "balancer",
    "cli",
    "data_synth",
    "entropy",
    "group_state",
    "lp",
    "metrics",
    "minnorm",
    "models",
    "train",
    "BalancerConfig",
    "StepDecision",
    "Strategy",
    "Dataset",
    "SyntheticSpec",
    "bayes_reference",
    "generate",
    "LpProblem",
    "LpSolution",
    "GroupMetrics",
    "auroc",
    "group_accuracy",
    "loss_gap",
    "MinNormResult",
    "frank_wolfe_minnorm",
    "Batch",
    "ModelSpec",
    "DivergenceError",
    "TrainConfig",
    "TrainReport",
    "fit",
    "sweep_control",
    "__version__",
]
