"""Reliability quantification of Boolean logic Driven Markov Processes."""
from .bdd import leaf_probabilities, mcs_bdd, mcs_bdd_probability, mcs_bounds
from .ctmc import CtmcSparse, Transition, TransitionLabel, export_ctmc, import_ctmc
from .cutsets import mocus_mcs, structure_function
from .iab import CutSet, InFunctionBarrier, Initiator, OnDemandBarrier, iab_cutset_rate, iab_system
from .model import Bdmp, Gate, Leaf, ModelError, Trigger, dump_model, load_model, parse_model, validate
from .montecarlo import SimConfig, SimReport, ci_halfwidth, simulate
from .report import AnalysisReport
from .sequences import CutoffCriteria, explore_nri, explore_ns, sequence_time_prob
from .solve import absorption_probabilities, transient, uniformize, unreliability
from .statespace import build_ctmc, enumerate_transitions, initial_state

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport", "Bdmp", "CtmcSparse", "CutSet", "CutoffCriteria", "Gate", "InFunctionBarrier",
    "Initiator", "Leaf", "ModelError", "OnDemandBarrier", "SimConfig", "SimReport", "Transition",
    "TransitionLabel", "Trigger", "absorption_probabilities", "build_ctmc", "ci_halfwidth", "dump_model",
    "enumerate_transitions", "explore_nri", "explore_ns", "export_ctmc", "iab_cutset_rate", "iab_system",
    "import_ctmc", "initial_state", "leaf_probabilities", "load_model", "mcs_bdd", "mcs_bdd_probability",
    "mcs_bounds", "mocus_mcs", "parse_model", "sequence_time_prob", "simulate", "structure_function",
    "transient", "uniformize", "unreliability", "validate",
]
