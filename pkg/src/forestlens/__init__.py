"""Random-forest classification with OOB importance and surrogate-split association."""

from forestlens.dataset import LabeledDataset, LabelRule, RawTable, load_csv
from forestlens.forest import RandomForest, oob_error, oob_predict, predict_forest, train_forest

__version__ = "0.1.0"

__all__ = [
    "LabeledDataset",
    "LabelRule",
    "RawTable",
    "RandomForest",
    "load_csv",
    "oob_error",
    "oob_predict",
    "predict_forest",
    "train_forest",
]
