"""Width-parameterized sonar CNN zoo.

Build the six model families as computation graphs, count parameters and
FLOPs, train from scratch, extract named-layer features, and evaluate
low-shot transfer with a linear SVM. All heavy lifting happens in the C++
extension; this package is a thin veneer.
"""

from ._sonarzoo import (
    ConfigError,
    GraphError,
    IoError,
    Model,
    ShapeError,
    Svm,
    TrainAbort,
    __version__,
    compute_auscc,
    default_width,
    families,
    fit_svm,
    load_dataset,
    load_features,
    lowshot,
    pixel_mean,
    save_features,
    synth,
)

__all__ = [
    "ConfigError",
    "GraphError",
    "IoError",
    "Model",
    "ShapeError",
    "Svm",
    "TrainAbort",
    "__version__",
    "compute_auscc",
    "default_width",
    "families",
    "fit_svm",
    "load_dataset",
    "load_features",
    "lowshot",
    "pixel_mean",
    "save_features",
    "synth",
]
