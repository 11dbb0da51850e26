"""cimtrain: BP vs. DFA training on a modeled compute-in-memory crossbar,
with area/energy/latency cost reporting for the resulting chip floorplan."""

__version__ = "0.1.0"

from .analog import (AnalogBackend, CrossbarArray, CrossbarConfig, DigitalBackend,
                     Event, adc_read, analog_matvec, analog_matvec_transposed,
                     ir_drop_attenuation, program_weights)
from .dataio import Dataset, SyntheticSpec, batches, load_idx, synthetic, write_idx
from .estimator import CimMlpClassifier
from .hwcost import (CostReport, Floorplan, UnitCosts, build_cost_report,
                     build_floorplan, count_training_events, estimate_area,
                     estimate_energy, estimate_latency)
from .network import (ForwardTrace, Mlp, Topology, forward, load_checkpoint,
                      predict, save_checkpoint, xavier_init)
from .numerics import (Quantizer, derive_rng, hadamard, make_rng, matmul, outer,
                       quantize)
from .training import (FeedbackBank, HyperParams, TrainerKind, TrainingHistory,
                       apply_updates, bp_backward, cross_entropy, dfa_backward,
                       output_error, train, write_history_csv)

__all__ = [
    "AnalogBackend", "CimMlpClassifier", "CostReport", "CrossbarArray",
    "CrossbarConfig", "Dataset", "DigitalBackend", "Event", "FeedbackBank",
    "Floorplan", "ForwardTrace", "HyperParams", "Mlp", "Quantizer",
    "SyntheticSpec", "Topology", "TrainerKind", "TrainingHistory", "UnitCosts",
    "adc_read", "analog_matvec", "analog_matvec_transposed", "apply_updates",
    "batches", "bp_backward", "build_cost_report", "build_floorplan",
    "count_training_events", "cross_entropy", "derive_rng", "dfa_backward",
    "estimate_area", "estimate_energy", "estimate_latency", "forward",
    "hadamard", "ir_drop_attenuation", "load_checkpoint", "load_idx",
    "make_rng", "matmul", "outer", "output_error", "predict",
    "program_weights", "quantize", "save_checkpoint", "synthetic", "train",
    "write_history_csv", "write_idx", "xavier_init",
]
