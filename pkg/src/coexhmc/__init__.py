"""Gene function prediction from a weighted co-expression network.

Stages: spectral clustering sweeps over the network and an annotation-aware
affinity graph, enrichment p-values as features, TreeSHAP feature selection,
and hierarchy-consistent multi-label random forests scored with PR curves.
"""

from .errors import CoexError, ComputeError, InputError
from .ingest import RunConfig

__version__ = "0.1.0"

__all__ = ["CoexError", "ComputeError", "InputError", "RunConfig", "__version__"]
