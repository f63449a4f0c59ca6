"""spincool: exact simulation of collision-model cooling for SK spin glasses.

The package covers the full protocol family: quench-walk and annealing
baselines, repeated-collision cooling against transverse-field Ising baths,
bath-energy measurement post-processing, and the supporting diagnostics.
"""

from .hamiltonians import BathParameters, WalkParameters
from .instances import SKInstance, brute_force_ground, load_instance, sample_sk, save_instance
from .spinops import DensityMatrix, SparseOperator, StateVector

__all__ = [
    "BathParameters",
    "WalkParameters",
    "SKInstance",
    "brute_force_ground",
    "load_instance",
    "sample_sk",
    "save_instance",
    "DensityMatrix",
    "SparseOperator",
    "StateVector",
]

__version__ = "0.1.0"
