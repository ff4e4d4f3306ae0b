"""Open-book k-NN inference: an embedding/label datastore queried at prediction time.

Retrieved neighbors give a label distribution (softmax over negative
distances, summed per label) that is linearly mixed with a base model's
distribution.
"""

from .core import InferenceConfig, LabelTable, Metric, argmax_label, distance, softmax
from .datastore import Datastore, NeighborSet
from .inference import Prediction, Query, interpolate, knn_distribution, predict, predict_batch

__version__ = "0.1.0"

__all__ = [
    "Datastore", "InferenceConfig", "LabelTable", "Metric", "NeighborSet", "Prediction", "Query",
    "argmax_label", "distance", "interpolate", "knn_distribution", "predict", "predict_batch", "softmax",
]
