"""Deep ensemble learning: SAE feature spaces, a classifier zoo, RBM stacking and cost-sensitive fusion."""

from .baselines import run_baselines
from .config import RunConfig, load_config, synth_default
from .costopt import CostMatrix, CostSensitiveOptimizer
from .data import Dataset, MinMaxNormalizer, Outcome, load_csv, synth_generate
from .metrics import ConfusionMatrix, PairCounts, difficulty, metrics, q_statistic
from .pipeline import STAGES, DELearningClassifier
from .sae import SparseAutoencoder
from .stacking import RBM, DBNStackingClassifier
from .zoo import PredictionMatrix, ZooConfig, train_zoo

__version__ = "0.1.0"

__all__ = [
    "CostMatrix", "CostSensitiveOptimizer", "ConfusionMatrix", "DBNStackingClassifier", "DELearningClassifier",
    "Dataset", "MinMaxNormalizer", "Outcome", "PairCounts", "PredictionMatrix", "RBM", "RunConfig", "STAGES",
    "SparseAutoencoder", "ZooConfig", "difficulty", "load_config", "load_csv", "metrics", "synth_default",
    "q_statistic", "run_baselines", "synth_generate", "train_zoo",
]
