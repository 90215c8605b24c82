"""Queues of boxed in-transit items and forwarder typing contexts.

A queue item sits in the queue of the endpoint that received it and is
labelled with the endpoint it must be forwarded to.  Items aimed at distinct
endpoints commute; per-target order is part of the judgement.

``Config`` is the compatibility-checking state: a type environment plus one
FIFO per ordered (target, holder) pair of endpoints.  Its translation into a
typing context is the bridge between the transition semantics and the proof
system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Union

from .syntax import Endpoint, Type, erase, is_fully_annotated, rename_targets, size


# ---------------------------------------------------------------------------
# Queue items


@dataclass(frozen=True)
class MsgBox:
    """A boxed message: payload endpoints received here, to forward to target.

    The basic proof system only ever boxes a single typed endpoint; gathered
    boxes with several payloads appear during generalized cut rewriting.
    """

    target: Endpoint
    payloads: tuple[tuple[Endpoint, Type], ...]

    @property
    def payload_endpoint(self) -> Endpoint:
        ((e, _),) = self.payloads
        return e

    @property
    def payload_type(self) -> Type:
        ((_, t),) = self.payloads
        return t


def msgbox(target: Endpoint, endpoint: Endpoint, typ: Type) -> MsgBox:
    return MsgBox(target, ((endpoint, typ),))


@dataclass(frozen=True)
class Star:
    target: Endpoint


@dataclass(frozen=True)
class Query:
    target: Endpoint


@dataclass(frozen=True)
class LeftTok:
    target: Endpoint


@dataclass(frozen=True)
class RightTok:
    target: Endpoint


QueueItem = Union[MsgBox, Star, Query, LeftTok, RightTok]
Queue = tuple[QueueItem, ...]


def retarget(item: QueueItem, new: Endpoint) -> QueueItem:
    match item:
        case MsgBox(_, payloads):
            return MsgBox(new, payloads)
        case Star():
            return Star(new)
        case Query():
            return Query(new)
        case LeftTok():
            return LeftTok(new)
        case RightTok():
            return RightTok(new)
    raise TypeError(item)


def rename_item_targets(item: QueueItem, mapping: dict[Endpoint, Endpoint]) -> QueueItem:
    out = retarget(item, mapping.get(item.target, item.target))
    if isinstance(out, MsgBox):
        out = MsgBox(
            out.target,
            tuple((e, rename_targets(t, mapping)) for e, t in out.payloads),
        )
    return out


def normalize_queue(q: Queue) -> Queue:
    """Canonical form: stable sort by target name, per-target order kept.

    Items aimed at independent endpoints commute freely, so sorting maximal
    commuting segments by target is a sound canonical representative; the
    subsequence of items sharing a target is never reordered.
    """
    return tuple(sorted(q, key=lambda it: it.target))


def queues_equivalent(q1: Queue, q2: Queue) -> bool:
    return normalize_queue(q1) == normalize_queue(q2)


# ---------------------------------------------------------------------------
# Typing contexts


@dataclass(frozen=True)
class Entry:
    endpoint: Endpoint
    queue: Queue = ()
    typing: Type | None = None  # None encodes the terminated entry "x:."


@dataclass(frozen=True)
class Context:
    entries: tuple[Entry, ...]

    def __post_init__(self):
        names = [e.endpoint for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate endpoints in context: {names}")

    def endpoints(self) -> tuple[Endpoint, ...]:
        return tuple(e.endpoint for e in self.entries)

    def get(self, x: Endpoint) -> Entry:
        for e in self.entries:
            if e.endpoint == x:
                return e
        raise KeyError(x)

    def has(self, x: Endpoint) -> bool:
        return any(e.endpoint == x for e in self.entries)

    def without(self, *xs: Endpoint) -> Context:
        return Context(tuple(e for e in self.entries if e.endpoint not in xs))

    def replace(self, x: Endpoint, new: Entry) -> Context:
        return Context(tuple(new if e.endpoint == x else e for e in self.entries))

    def add(self, *new: Entry) -> Context:
        return Context(self.entries + tuple(new))


def ctx(*entries: Entry) -> Context:
    return Context(tuple(entries))


def context_fully_annotated(g: Context) -> bool:
    for e in g.entries:
        if e.typing is not None and not is_fully_annotated(e.typing):
            return False
        for it in e.queue:
            if isinstance(it, MsgBox) and not all(is_fully_annotated(t) for _, t in it.payloads):
                return False
    return True


def normalize_context(g: Context) -> Context:
    """Entries in name order with normalized queues; checking is invariant
    under this reordering."""
    ents = tuple(
        Entry(e.endpoint, normalize_queue(e.queue), e.typing)
        for e in sorted(g.entries, key=lambda e: e.endpoint)
    )
    return Context(ents)


def contexts_equivalent(g1: Context, g2: Context) -> bool:
    return normalize_context(g1) == normalize_context(g2)


def rename_context_targets(g: Context, mapping: dict[Endpoint, Endpoint]) -> Context:
    """Rename endpoints wherever they occur as forwarding targets (queue item
    labels and type annotations); entry names are untouched."""
    ents = []
    for e in g.entries:
        typ = rename_targets(e.typing, mapping) if e.typing is not None else None
        ents.append(Entry(e.endpoint, tuple(rename_item_targets(i, mapping) for i in e.queue), typ))
    return Context(tuple(ents))


def context_size(g: Context) -> int:
    """Total size: connectives in entry types plus in queued payload types."""
    n = 0
    for e in g.entries:
        if e.typing is not None:
            n += size(e.typing)
        for it in e.queue:
            if isinstance(it, MsgBox):
                n += sum(size(t) for _, t in it.payloads)
    return n


def erase_context(g: Context) -> tuple[tuple[Endpoint, Type], ...]:
    """Erasure into a CP environment.

    Boxed messages become standalone typed endpoints, tokens vanish, and
    terminated entries contribute only their queue contents.
    """
    out: list[tuple[Endpoint, Type]] = []
    for e in g.entries:
        for it in e.queue:
            if isinstance(it, MsgBox):
                out.extend((p, erase(t)) for p, t in it.payloads)
        if e.typing is not None:
            out.append((e.endpoint, erase(e.typing)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Compatibility configurations


@dataclass(frozen=True)
class Config:
    """Type environment plus per ordered (target, holder) pair FIFOs.

    ``sigma[(u, x)]`` holds the items received at ``x`` still to be forwarded
    to ``u``; in the translation they become ``x``'s queue with brackets
    labelled ``u``.  Both maps are stored as sorted tuples so configs hash.
    """

    delta: tuple[tuple[Endpoint, Type], ...]
    sigma: tuple[tuple[tuple[Endpoint, Endpoint], Queue], ...] = ()

    @staticmethod
    def make(
        delta: Iterable[tuple[Endpoint, Type]],
        sigma: Iterable[tuple[tuple[Endpoint, Endpoint], Queue]] = (),
    ) -> Config:
        d = tuple(sorted(delta))
        s = tuple(sorted((k, tuple(q)) for k, q in sigma if q))
        return Config(d, s)

    def delta_map(self) -> dict[Endpoint, Type]:
        return dict(self.delta)

    def sigma_map(self) -> dict[tuple[Endpoint, Endpoint], Queue]:
        return {k: q for k, q in self.sigma}

    def holders(self) -> set[Endpoint]:
        return {x for (_, x), _ in self.sigma}

    def is_empty(self) -> bool:
        return not self.delta and not self.sigma


EMPTY_CONFIG = Config((), ())


def translate_config(c: Config) -> Context:
    """Forwarder context of a configuration.

    Each endpoint's pending queues are concatenated grouped by bracket label
    in canonical name order; holders absent from delta become terminated
    entries that persist until their queues drain.
    """
    delta = c.delta_map()
    sigma = c.sigma_map()
    known = set(delta) | {x for (_, x) in sigma} | {u for (u, _) in sigma}
    for (u, x), q in sigma.items():
        if u == x:
            raise ValueError(f"self-directed queue at {x}")
        if u not in known:
            raise ValueError(f"queue target {u} unknown to the configuration")
    entries = []
    holders = sorted(set(delta) | {x for (_, x), q in c.sigma if q})
    for x in holders:
        queue: list[QueueItem] = []
        for u in sorted({u for (u, h) in sigma if h == x}):
            queue.extend(sigma[(u, x)])
        entries.append(Entry(x, tuple(queue), delta.get(x)))
    return Context(tuple(entries))


def config_of_context(g: Context) -> Config:
    """Inverse of ``translate_config`` on its image."""
    delta = []
    sigma: dict[tuple[Endpoint, Endpoint], list[QueueItem]] = {}
    for e in g.entries:
        if e.typing is not None:
            delta.append((e.endpoint, e.typing))
        for it in e.queue:
            sigma.setdefault((it.target, e.endpoint), []).append(it)
    return Config.make(delta, ((k, tuple(v)) for k, v in sigma.items()))


def iter_queue_items(g: Context) -> Iterator[tuple[Endpoint, QueueItem]]:
    for e in g.entries:
        for it in e.queue:
            yield e.endpoint, it
