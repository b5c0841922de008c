"""Sum-throughput optimization for IRS-aided wireless-powered interference channels."""

from .ao_optimizer import OptimizationResult, OptimizerConfig, initialize, mmse_receiver, optimize, optimize_all_schemes
from .channel_model import ChannelSet, ScenarioConfig, generate
from .system_model import Allocation, Scheme, SchemeSpec, check_feasibility, scheme_spec, sum_throughput, total_energy

__all__ = [
    "Allocation",
    "ChannelSet",
    "OptimizationResult",
    "OptimizerConfig",
    "Scheme",
    "SchemeSpec",
    "ScenarioConfig",
    "check_feasibility",
    "generate",
    "initialize",
    "mmse_receiver",
    "optimize",
    "optimize_all_schemes",
    "scheme_spec",
    "sum_throughput",
    "total_energy",
]
