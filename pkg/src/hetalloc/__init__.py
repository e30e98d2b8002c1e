"""Equilibrium time allocation for heterogeneous IoT uplinks (GNE and cognitive hierarchy)."""

from hetalloc.model import (ContractViolation, DegenerateInputWarning, DeviceType, DomainError,
                            InfeasibleScenario, Kind, RadioConstants)
from hetalloc.network import Network

__all__ = ["ContractViolation", "DegenerateInputWarning", "DeviceType", "DomainError",
           "InfeasibleScenario", "Kind", "RadioConstants", "Network"]
__version__ = "0.1.0"
