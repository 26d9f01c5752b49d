"""Protocol-level value types shared by the runtime, the protocols and the oracle.

A group is identified globally by its *ggid*, the sorted tuple of member world
ranks.  Two communicators over the same member set share a ggid, so their
collective counters alias; this is intentional.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Mapping, Optional, Tuple


class InvalidGroupError(ValueError):
    """Raised for an empty or malformed group."""


@dataclass(frozen=True, order=True)
class Ggid:
    """Global group id: the canonical (sorted, duplicate-free) member list."""

    members: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise InvalidGroupError("a group needs at least one member")
        if list(self.members) != sorted(set(self.members)):
            raise InvalidGroupError(f"ggid members must be sorted and unique: {self.members}")

    def __contains__(self, rank: int) -> bool:
        return rank in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.members)) + "}"

    def to_json(self) -> list:
        return list(self.members)

    def __deepcopy__(self, memo):
        return self


def compute_ggid(members: Iterable[int]) -> Ggid:
    """Return the ggid of a member set.

    Order and repetition in *members* are ignored; negative ranks and the
    empty set are rejected.
    """
    ranks = set(members)
    if not ranks:
        raise InvalidGroupError("cannot compute the ggid of an empty group")
    if any((not isinstance(r, int)) or r < 0 for r in ranks):
        raise InvalidGroupError(f"invalid world ranks in group: {sorted(map(str, ranks))}")
    return Ggid(tuple(sorted(ranks)))


@dataclass(frozen=True)
class GroupMembership:
    """Ordered member list of a group, with world <-> local rank translation."""

    members: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise InvalidGroupError("a group needs at least one member")
        if len(set(self.members)) != len(self.members):
            raise InvalidGroupError(f"duplicate ranks in group: {self.members}")
        if any(r < 0 for r in self.members):
            raise InvalidGroupError(f"negative rank in group: {self.members}")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def local_rank_of(self) -> Dict[int, int]:
        return {world: local for local, world in enumerate(self.members)}

    def to_world(self, local_rank: int) -> int:
        return self.members[local_rank]

    def to_local(self, world_rank: int) -> int:
        try:
            return self.members.index(world_rank)
        except ValueError:
            raise KeyError(f"rank {world_rank} is not a member of {self.members}") from None


@dataclass(frozen=True)
class CommunicatorHandle:
    """A per-process communicator handle.  ``id`` is only meaningful locally."""

    id: str
    group: GroupMembership
    ggid: Ggid = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ggid", compute_ggid(self.group.members))

    def peers(self, me: int) -> Tuple[int, ...]:
        return tuple(r for r in self.ggid.members if r != me)


class SeqTable:
    """Per-process collective call counters, keyed by ggid.

    Absent entries read as zero.  Counters only move upward.
    """

    __slots__ = ("_seq",)

    def __init__(self, initial: Optional[Mapping[Ggid, int]] = None) -> None:
        self._seq: Dict[Ggid, int] = {}
        for g, v in (initial or {}).items():
            if v < 0:
                raise ValueError("sequence numbers are non-negative")
            self._seq[g] = v

    def get(self, g: Ggid) -> int:
        return self._seq.get(g, 0)

    __getitem__ = get

    def increment(self, g: Ggid) -> int:
        value = self._seq.get(g, 0) + 1
        self._seq[g] = value
        return value

    def ensure(self, g: Ggid) -> None:
        """Register *g* with counter 0 if unseen (communicator creation)."""
        self._seq.setdefault(g, 0)

    def known(self) -> Tuple[Ggid, ...]:
        return tuple(sorted(self._seq))

    def items(self) -> Iterator[Tuple[Ggid, int]]:
        return iter(sorted(self._seq.items()))

    def as_dict(self) -> Dict[Ggid, int]:
        return dict(self._seq)

    def key(self) -> tuple:
        return tuple((g.members, v) for g, v in sorted(self._seq.items()) if v)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SeqTable):
            return NotImplemented
        return self.key() == other.key()

    def __repr__(self) -> str:
        body = ", ".join(f"{g}: {v}" for g, v in sorted(self._seq.items()))
        return f"SeqTable({body})"


def seq_get(table: SeqTable, g: Ggid) -> int:
    return table.get(g)


class TargetTable:
    """Global target counters, merged by max once a checkpoint is pending."""

    __slots__ = ("_target", "ckpt_pending")

    def __init__(self) -> None:
        self._target: Dict[Ggid, int] = {}
        self.ckpt_pending = False

    def get(self, g: Ggid) -> int:
        return self._target.get(g, 0)

    __getitem__ = get

    def merge(self, g: Ggid, value: int) -> bool:
        if value < 0:
            raise ValueError("targets are non-negative")
        if value > self._target.get(g, 0):
            self._target[g] = value
            return True
        self._target.setdefault(g, 0)
        return False

    def known(self) -> Tuple[Ggid, ...]:
        return tuple(sorted(self._target))

    def items(self) -> Iterator[Tuple[Ggid, int]]:
        return iter(sorted(self._target.items()))

    def as_dict(self) -> Dict[Ggid, int]:
        return dict(self._target)

    def key(self) -> tuple:
        return (self.ckpt_pending,) + tuple(
            (g.members, v) for g, v in sorted(self._target.items()) if v
        )

    def __repr__(self) -> str:
        body = ", ".join(f"{g}: {v}" for g, v in sorted(self._target.items()))
        return f"TargetTable(pending={self.ckpt_pending}, {body})"


def target_merge(table: TargetTable, g: Ggid, value: int) -> bool:
    """``target[g] := max(target[g], value)``; True iff the entry increased."""
    return table.merge(g, value)


class RequestState(str, enum.Enum):
    NULL = "null"
    PENDING = "pending"
    COMPLETE = "locally-complete"


class RequestKind(str, enum.Enum):
    SEND = "p2p-send"
    RECV = "p2p-recv"
    COLLECTIVE = "collective"


class RequestStateError(RuntimeError):
    pass


@dataclass
class RequestHandle:
    """A request object.  Moves pending -> locally-complete -> null, once."""

    id: str
    kind: RequestKind = RequestKind.COLLECTIVE
    ggid: Optional[Ggid] = None
    state: RequestState = RequestState.PENDING
    instance: Optional[tuple] = None

    @property
    def is_null(self) -> bool:
        return self.state is RequestState.NULL

    def mark_complete(self) -> None:
        if self.state is not RequestState.PENDING:
            raise RequestStateError(f"request {self.id} is {self.state.value}, not pending")
        self.state = RequestState.COMPLETE

    def release(self) -> None:
        if self.state is not RequestState.COMPLETE:
            raise RequestStateError(f"request {self.id} is {self.state.value}, not complete")
        self.state = RequestState.NULL


@dataclass(frozen=True)
class TargetUpdateMsg:
    """Target update on the protocol channel.

    Wire layout (big-endian): ``u16 n_members, n * u32 member, u64 new_target,
    u32 sender``.
    """

    ggid: Ggid
    new_target: int
    sender: int

    def encode(self) -> bytes:
        members = self.ggid.members
        return struct.pack(f">H{len(members)}IQI", len(members), *members, self.new_target, self.sender)

    @classmethod
    def decode(cls, data: bytes) -> "TargetUpdateMsg":
        (n,) = struct.unpack_from(">H", data, 0)
        fmt = f">H{n}IQI"
        if struct.calcsize(fmt) != len(data):
            raise ValueError("truncated or oversized target update message")
        fields = struct.unpack(fmt, data)
        return cls(Ggid(tuple(fields[1 : 1 + n])), fields[1 + n], fields[2 + n])

    def key(self) -> tuple:
        return (self.ggid.members, self.new_target, self.sender)

    def __deepcopy__(self, memo):
        return self


# Reserved protocol channel; application traffic never uses it.
PROTOCOL_COMM = "__cc_protocol__"
PROTOCOL_TAG = -1
