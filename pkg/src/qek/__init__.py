"""Graph classification with quantum evolution kernels on emulated neutral-atom registers."""
__version__ = "0.1.0"

from .graph_io import Graph, GraphSet, parse_tu_dataset, filter_by_node_count, corpus_stats
from .embedder import RegisterConstraints, Register, UnitDiskEmbedder, embed, embed_dataset, verify_ud
from .pulses import WaveformParams, PulseSchedule, build_schedule, validate_task, emit_task_document
from .emulator import PhysicsConfig, NoiseModel, evolve, sample, blockade_radius
from .features import (EnergyHistogram, QuantumEvolutionKernel, ShortestPathKernel, js_divergence,
                       qek_matrix, spk_matrix)
from .learn import PrecomputedSVC, train_svm, predict, kfold_grid_search, default_grid
from .bayesopt import MaternGP, BoConfig, optimize

__all__ = [
    "Graph", "GraphSet", "parse_tu_dataset", "filter_by_node_count", "corpus_stats",
    "RegisterConstraints", "Register", "UnitDiskEmbedder", "embed", "embed_dataset", "verify_ud",
    "WaveformParams", "PulseSchedule", "build_schedule", "validate_task", "emit_task_document",
    "PhysicsConfig", "NoiseModel", "evolve", "sample", "blockade_radius",
    "EnergyHistogram", "QuantumEvolutionKernel", "ShortestPathKernel", "js_divergence",
    "qek_matrix", "spk_matrix",
    "PrecomputedSVC", "train_svm", "predict", "kfold_grid_search", "default_grid",
    "MaternGP", "BoConfig", "optimize",
]
