"""Accordion ReLU networks with width-independent complexity accounting.

The package splits into a numeric substrate (:mod:`accnet.numerics`,
:mod:`accnet.kernels`), the network representations (:mod:`accnet.model`),
training (:mod:`accnet.train`), complexity measures and generalization
bounds (:mod:`accnet.complexity`), covering-number formulas
(:mod:`accnet.entropy`), compositional GP task generation
(:mod:`accnet.taskgen`) and scaling-law experiments (:mod:`accnet.scaling`).
"""

from .complexity import (
    BoundConfig,
    ComplexityReport,
    accordion_complexity,
    complexity_report,
    f1_upper_bound,
    generalization_bound,
    lip_empirical,
    lip_upper_bound,
    opnorm_complexity,
    rank_estimate,
)
from .model import (
    AccNet,
    Fcnn,
    ShallowBlock,
    accnet_to_fcnn,
    fcnn_to_accnet,
    forward,
    forward_batch,
    identity_block,
    load_model,
    random_accnet,
    save_model,
)
from .numerics import NumericsError, RngStream, cholesky_jitter, fit_line, op_norm, svd
from .scaling import (
    RatePrediction,
    ScalingReport,
    SweepConfig,
    error_decay,
    kernel_baseline,
    predicted_rate,
    regularizer_rates,
    run_sweep,
)
from .taskgen import DataSet, TaskSpec, generate, gp_sample, gram, matern
from .train import TrainConfig, TrainingDiverged, adam_step, backward, loss_hinge, loss_l1, loss_mse, train

__version__ = "0.1.0"
