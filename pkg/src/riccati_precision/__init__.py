"""Riccati-regularized precision matrices for large signal networks."""

from .analysis import NetworkSelection, mahalanobis, partial_correlations, tsee, tsee_direct, tsee_fast
from .errors import InvalidInput, NumericalError, RiccatiError, StorageError
from .ingest import DataMatrix, load_matrix, normalize
from .randproj import ProjectionConfig, random_project, retained_energy
from .riccati import (
    FactoredPrecision,
    PenaltyShape,
    densify,
    estimate,
    estimate_tikhonov,
    logdet,
    riccati_eigenvalue_map,
)
from .shared import SharedBasisModel, fit_shared, subject_precision
from .validation import SplitPlan, SweepGrid, edge_icc, icc_c1, nll, reliability_sweep, split_sample_sweep

__version__ = "0.1.0"
