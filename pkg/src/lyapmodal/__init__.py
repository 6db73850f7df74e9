"""Lyapunov-energy modal analysis of linear time-invariant systems."""

from .errors import (
    AmbiguousMatch,
    AssumptionViolated,
    DimensionMismatch,
    DivergentPair,
    GenerationFailed,
    HorizonTooShort,
    LyapModalError,
    NonSimpleSpectrum,
    ParseError,
    SingularEigenbasis,
    UnstableSystem,
    ZeroEnergy,
)
from .spectral import (
    EigenStructure,
    Kind,
    PFMatrix,
    StateMatrix,
    conventional_pf,
    eigendecompose,
    generalized_pf,
    residues,
    simpf,
)

from .energy import EnergyEngine, InitialCondition, energy_report, lmif_matrix
from .gramian import build_bundle, solve_lyapunov, spectral_gramian, sub_gramian_local
from .sweep import SweepConfig, run_sweep, track_modes
from .table import IndicatorTable, compute_indicators

__version__ = "0.1.0"
