"""Memristor crossbar neural core simulator."""

__version__ = "0.1.0"

from .device import DeviceParams, MemristorState, apply_pulse, device_current  # noqa: E402,F401
from .xbar import (Crossbar, CrossbarGeometry, NodeSolution, SolverConfig,  # noqa: E402,F401
                   ideal_forward, solve_dense, solve_jacobi)
from .layer import LayerCircuit, LayerOutput, QuantizerSpec, activation_h, evaluate_layer, quantize  # noqa: E402,F401
from .train import (NetworkCircuit, TrainConfig, init_network, pretrain_stack,  # noqa: E402,F401
                    train_autoencoder, train_step)
from .mapping import CoreLimits, CorePlan, SplitPlan, pack_cores, split_network  # noqa: E402,F401
from .cost import CostReport, CostTables, report  # noqa: E402,F401
from .experiment import ExperimentConfig, run_experiment  # noqa: E402,F401
