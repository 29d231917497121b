"""Feed-forward regression networks under analog activation perturbations.

Quantifies how dense regression networks degrade when their neuron
activation functions pick up circuit noise or smooth device-to-device shape
dispersion, and implements the mitigation: retraining the weights against
the realized activation shapes.
"""

from .activation import (
    NafInstance,
    NafKind,
    PerturbMode,
    PerturbationConfig,
    SmoothPerturbationTable,
    apply_recall_noise,
    eval_clean,
    eval_clean_derivative,
    load_table_csv,
    make_smooth_table,
    save_table_csv,
)
from .data import Dataset, Split, make_split
from .experiments import (
    ExperimentPlan,
    SweepResult,
    emit_report,
    grid_search,
    load_plan,
    run_sweep,
    tolerance_thresholds,
)
from .features import Molecule, ScalingParams, coulomb_matrix, ecm, fit_scaling
from .network import (
    Architecture,
    Network,
    forward,
    init_network,
    jacobian,
    load_network,
    save_network,
    smooth_nafs_for,
)
from .synthetic import make_quadratic_dataset, make_sine_dataset, resolve_dataset
from .trainer import (
    StopReason,
    TrainConfig,
    TrainReport,
    evaluate,
    retrain_with_realized_nafs,
    train_lm,
)

__version__ = "0.1.0"
