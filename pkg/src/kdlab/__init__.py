"""kdlab: a desk-scale knowledge-distillation laboratory.

Trains small ReLU networks on synthetic Gaussian classification data whose
exact class posterior is known in closed form, distills students from
teachers or perturbed posteriors, and measures how the supervision's
distance to the exact posterior (squared error vs cross-entropy) relates
to student accuracy.
"""

from .data import (
    GaussianSpec,
    LabeledDataset,
    analytic_bcpd,
    bayes_accuracy,
    load_dataset,
    make_spec,
    perturb_bcpd,
    sample_dataset,
    save_dataset,
    split_dataset,
)
from .experiments import (
    ExperimentRecord,
    TrainConfig,
    TrainHistory,
    correlation,
    evaluate_accuracy,
    evaluate_distance_to_bcpd,
    read_records,
    run_binary,
    run_semi_supervised,
    run_set1,
    run_set2,
    train_model,
    write_records,
)
from .losses import (
    LossKind,
    TargetDistribution,
    ce_distance,
    ce_loss_and_grad,
    expected_loss_over_labels,
    mse_distance,
    mse_loss_and_grad,
    one_hot,
)
from .mlp import MlpModel, grad_check, init_params, load_model, predict_label, predict_proba, save_model
from .tensor import gaussian_matrix, log_sum_exp, make_rng, matmul, softmax

__version__ = "0.1.0"
