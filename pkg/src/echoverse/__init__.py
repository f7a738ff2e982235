"""Echo reservoir computers: ESN, LSM and qubit-register reservoirs with polynomial readouts."""

from . import esn, lab, lsm, polynomial, qrc, signals
from .errors import BoundError, DimensionError, DivergenceError, RefractoryError, StateError
from .esn import EsnSystem, esn_product, esn_sum, random_esn, run_esn
from .lab import DataSpec, TargetFilter, approximation_experiment, nrmse, polynomial_features, ridge_train
from .lsm import DecayFilter, LsmSystem, SpikeTrain, run_lsm, spike_distance
from .polynomial import Polynomial
from .qrc import QrcSystem, multiplex, multiplex_product, multiplex_sum, run_qrc
from .signals import FadingFunction, Filter, Functional, Orbit, fading_distance

__version__ = "0.1.0"

__all__ = [
    "esn", "lab", "lsm", "polynomial", "qrc", "signals",
    "BoundError", "DimensionError", "DivergenceError", "RefractoryError", "StateError",
    "EsnSystem", "esn_product", "esn_sum", "random_esn", "run_esn",
    "DataSpec", "TargetFilter", "approximation_experiment", "nrmse", "polynomial_features", "ridge_train",
    "DecayFilter", "LsmSystem", "SpikeTrain", "run_lsm", "spike_distance",
    "Polynomial",
    "QrcSystem", "multiplex", "multiplex_product", "multiplex_sum", "run_qrc",
    "FadingFunction", "Filter", "Functional", "Orbit", "fading_distance",
]
