"""Masked subspace clustering: BMSC, GMSC (plus a robust variant) and recursive RMSC."""

from .admm import AdmmResult, GramCache, MaskedADMM, SolverState, precompute_gram, solve
from .core import ExperimentConfig, Model, to_assignment, to_labels
from .data_io import Dataset, generate_synthetic_subspaces, load_affinity, load_csv, load_idx, save_affinity
from .errors import ConfigError, DivergenceError, FormatError, InvalidInputError, NumericError
from .metrics import bca, clustering_accuracy, nmi
from .rmsc import mask_delta, mask_from_labels, run_rmsc
from .spectral import kmeans, spectral_clustering, spectral_embedding, symmetrize_affinity

__version__ = "0.1.0"
