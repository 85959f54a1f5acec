"""eegharness: training pipelines that feed the crossbar simulator.

Dataset ingestion (Bonn text, EDF, SWEC archives), feature extraction
with SVD reduction, SOP/SPH labeling with overlapped sampling,
cross-validated (optionally quantization-aware) training, and export of
MXW1 weight files plus MXI1 evaluation sets.
"""

from . import datasets, features, formats, labeling, model, training

__all__ = ["datasets", "features", "formats", "labeling", "model", "training"]

__version__ = "0.1.0"
