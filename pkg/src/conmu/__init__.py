"""conmu: controllable machine unlearning for small classifiers.

Given a trained classifier and a forget request, the pipeline removes the
influence of the forgotten samples by fine-tuning on a curated, obfuscated
data mixture while distilling from a partially-trained proxy, trading off
privacy, accuracy and runtime through explicit knobs. Retrain/fine-tune/
gradient-ascent baselines and a full evaluation suite (accuracies,
membership-inference efficacy, composite score) are included, plus a
config-driven benchmark CLI.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .data import (ForgetSplit, LabeledDataset, concat, exclude_class, gen_synthetic,
                   load_csv, save_csv, split_classwise_forget, split_random_forget,
                   standardize_features)
from .engine import (ControlKnobs, UnlearnRun, conmu_unlearn, finetune_baseline,
                     gradient_ascent_baseline, retrain_baseline)
from .metrics import (MetricsReport, MiaPredictor, evaluate, frm_score,
                      mia_efficacy, train_mia)
from .model import (ArchitectureSpec, ClassifierState, TrainConfig, accuracy,
                    forward_probs, init_model, load_model, mean_cross_entropy, mlp,
                    omp_prune, save_model, train)
from .noise import NoiseConfig, apply_noise
from .proxy import ProxyConfig, kl_loss, train_proxy
from .selection import (SelectionBound, SelectionResult, band_for_kept_fraction,
                        el2n_scores, select_bounded)

__all__ = [
    "BACKEND", "__version__",
    "LabeledDataset", "ForgetSplit", "load_csv", "save_csv", "gen_synthetic",
    "split_random_forget", "split_classwise_forget", "standardize_features",
    "concat", "exclude_class",
    "ArchitectureSpec", "ClassifierState", "TrainConfig", "mlp", "init_model",
    "forward_probs", "train", "omp_prune", "accuracy", "mean_cross_entropy",
    "save_model", "load_model",
    "SelectionBound", "SelectionResult", "el2n_scores", "select_bounded",
    "band_for_kept_fraction",
    "NoiseConfig", "apply_noise",
    "ProxyConfig", "train_proxy", "kl_loss",
    "ControlKnobs", "UnlearnRun", "conmu_unlearn", "retrain_baseline",
    "finetune_baseline", "gradient_ascent_baseline",
    "MetricsReport", "MiaPredictor", "train_mia", "mia_efficacy", "frm_score",
    "evaluate",
]
