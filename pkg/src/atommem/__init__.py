"""Single-atom quantum memory simulator and characterization toolkit."""

from .channel import MemoryConfig, channel_density, run_trials
from .polarization import JonesVector, average_fidelity, canonical_states, fidelity

__all__ = ["JonesVector", "MemoryConfig", "average_fidelity", "canonical_states",
           "channel_density", "fidelity", "run_trials"]
__version__ = "0.1.0"
