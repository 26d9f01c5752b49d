"""Checkpoint-coordination protocols pluggable into the simulator."""

from .base import NoProtocol, ProtocolAdapter, get_protocol
from .cc import CcProtocol, CcState, Phase
from .twopc import TwoPcProtocol, TwoPcState

__all__ = [
    "CcProtocol",
    "CcState",
    "NoProtocol",
    "Phase",
    "ProtocolAdapter",
    "TwoPcProtocol",
    "TwoPcState",
    "get_protocol",
]
