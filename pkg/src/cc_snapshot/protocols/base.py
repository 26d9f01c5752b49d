"""Adapter interface between the runtime and a coordination protocol."""

from __future__ import annotations

from typing import Any, Dict, List, Union

from ..core import Ggid


class ProtocolAdapter:
    """Hooks the runtime calls.  The default is the native (no protocol) run.

    A protocol may *own* a rank for a scheduler turn (``owns``), in which
    case ``choices``/``step`` replace the runtime's own step for that rank.
    """

    name = "base"

    def check_workload(self, workload) -> None:
        pass

    def init_rank(self, world, ps) -> Any:
        return None

    def owns(self, world, ps) -> bool:
        return False

    def choices(self, world, ps) -> List[Any]:
        return []

    def step(self, world, ps, choice) -> None:
        raise NotImplementedError

    def extra_choices(self, world, ps) -> List[Any]:
        """Protocol-only actions offered to a rank the runtime cannot step."""
        return []

    def enter_wrapper(self, world, ps, op) -> bool:
        """Called before a collective is entered/initiated; False defers it."""
        return True

    def leave_wrapper(self, world, ps, op, req) -> None:
        pass

    def on_comm_created(self, world, ps, g: Ggid) -> None:
        pass

    def on_request_completion(self, world, ps, req_id: str) -> None:
        pass

    def on_checkpoint_request(self, world) -> None:
        pass

    def after_step(self, world) -> None:
        pass

    def dump(self, world, ps) -> Dict[str, Any]:
        return {}

    def describe_block(self, world, ps) -> str:
        return f"nothing (mode {ps.mode})"


class NoProtocol(ProtocolAdapter):
    """Native execution.  A checkpoint request snapshots immediately (unsafe)."""

    name = "none"

    def on_checkpoint_request(self, world) -> None:
        world.take_snapshot()


def get_protocol(protocol: Union[str, ProtocolAdapter]) -> ProtocolAdapter:
    if isinstance(protocol, ProtocolAdapter):
        return protocol
    from .cc import CcProtocol
    from .twopc import TwoPcProtocol

    table = {"none": NoProtocol, "native": NoProtocol, "cc": CcProtocol, "2pc": TwoPcProtocol, "twopc": TwoPcProtocol}
    try:
        return table[protocol]()
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r} (expected cc, 2pc or none)") from None
