"""Abstract syntax for annotated session types and process terms.

Types are classical linear logic propositions whose connectives carry
forwarding-target annotations: an empty annotation slot means the type is in
its erased (plain) form.  One AST serves both the annotated judgement and the
plain CP judgement; the checkers decide which discipline applies.

Endpoints are bare strings matching ``[a-zA-Z][a-zA-Z0-9_']*``.  Engine-made
fresh names may additionally contain ``#``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator, Union

Endpoint = str

ENDPOINT_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9_']*\Z")
# '#' only appears in machine-generated fresh names (base#counter).
INTERNAL_ENDPOINT_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9_']*(?:#[0-9]+)?\Z")


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class DualAtom:
    name: str


@dataclass(frozen=True)
class One:
    targets: tuple[Endpoint, ...] = ()


@dataclass(frozen=True)
class Bot:
    target: Endpoint | None = None


@dataclass(frozen=True)
class Tensor:
    left: Type
    right: Type
    targets: tuple[Endpoint, ...] = ()


@dataclass(frozen=True)
class Par:
    left: Type
    right: Type
    target: Endpoint | None = None


@dataclass(frozen=True)
class Plus:
    left: Type
    right: Type
    target: Endpoint | None = None


@dataclass(frozen=True)
class With:
    left: Type
    right: Type
    targets: tuple[Endpoint, ...] = ()


@dataclass(frozen=True)
class OfCourse:
    body: Type
    targets: tuple[Endpoint, ...] = ()


@dataclass(frozen=True)
class WhyNot:
    body: Type
    target: Endpoint | None = None


Type = Union[Atom, DualAtom, One, Bot, Tensor, Par, Plus, With, OfCourse, WhyNot]

# Variants whose annotation slot is a set of endpoints (gathering/broadcast).
MULTI_TARGET = (One, Tensor, With, OfCourse)
# Variants whose annotation slot is a single endpoint.
SINGLE_TARGET = (Bot, Par, Plus, WhyNot)


def children(t: Type) -> tuple[Type, ...]:
    match t:
        case Atom() | DualAtom() | One() | Bot():
            return ()
        case Tensor(l, r, _) | Par(l, r, _) | Plus(l, r, _) | With(l, r, _):
            return (l, r)
        case OfCourse(b, _) | WhyNot(b, _):
            return (b,)
    raise TypeError(t)


def subtypes(t: Type) -> Iterator[Type]:
    """Pre-order traversal of a type."""
    yield t
    for c in children(t):
        yield from subtypes(c)


def size(t: Type) -> int:
    """Number of connectives and units; atoms count zero."""
    match t:
        case Atom() | DualAtom():
            return 0
        case One() | Bot():
            return 1
        case Tensor(l, r, _) | Par(l, r, _) | Plus(l, r, _) | With(l, r, _):
            return 1 + size(l) + size(r)
        case OfCourse(b, _) | WhyNot(b, _):
            return 1 + size(b)
    raise TypeError(t)


def erase(t: Type) -> Type:
    """Strip every annotation slot, yielding the plain CP-side type."""
    match t:
        case Atom() | DualAtom():
            return t
        case One():
            return One()
        case Bot():
            return Bot()
        case Tensor(l, r, _):
            return Tensor(erase(l), erase(r))
        case Par(l, r, _):
            return Par(erase(l), erase(r))
        case Plus(l, r, _):
            return Plus(erase(l), erase(r))
        case With(l, r, _):
            return With(erase(l), erase(r))
        case OfCourse(b, _):
            return OfCourse(erase(b))
        case WhyNot(b, _):
            return WhyNot(erase(b))
    raise TypeError(t)


def dual(t: Type) -> Type:
    """De Morgan dual of an erased type.

    Cut formulas are compared only up to erasure, so duality is defined on
    plain types; annotated inputs are erased first.
    """
    match t:
        case Atom(a):
            return DualAtom(a)
        case DualAtom(a):
            return Atom(a)
        case One():
            return Bot()
        case Bot():
            return One()
        case Tensor(l, r, _):
            return Par(dual(l), dual(r))
        case Par(l, r, _):
            return Tensor(dual(l), dual(r))
        case Plus(l, r, _):
            return With(dual(l), dual(r))
        case With(l, r, _):
            return Plus(dual(l), dual(r))
        case OfCourse(b, _):
            return WhyNot(dual(b))
        case WhyNot(b, _):
            return OfCourse(dual(b))
    raise TypeError(t)


def targets_of(t: Type) -> tuple[Endpoint, ...]:
    """Annotation slot of the head connective, as a tuple (empty if unset)."""
    match t:
        case Atom() | DualAtom():
            return ()
        case One(ts) | Tensor(_, _, ts) | With(_, _, ts) | OfCourse(_, ts):
            return ts
        case Bot(u) | Par(_, _, u) | Plus(_, _, u) | WhyNot(_, u):
            return (u,) if u is not None else ()
    raise TypeError(t)


def with_targets(t: Type, ts: tuple[Endpoint, ...]) -> Type:
    """Replace the head annotation slot."""
    match t:
        case Atom() | DualAtom():
            if ts:
                raise ValueError("atoms carry no annotation")
            return t
        case One() | Tensor() | With() | OfCourse():
            return replace(t, targets=ts)
        case Bot() | Par() | Plus() | WhyNot():
            if len(ts) > 1:
                raise ValueError(f"single-target connective got {ts}")
            return replace(t, target=ts[0] if ts else None)
    raise TypeError(t)


def is_fully_annotated(t: Type) -> bool:
    """True when every connective and unit carries a nonempty target slot."""
    for s in subtypes(t):
        if isinstance(s, (Atom, DualAtom)):
            continue
        if not targets_of(s) or any(u.startswith("?") for u in targets_of(s)):
            return False
    return True


def rename_targets(t: Type, mapping: dict[Endpoint, Endpoint]) -> Type:
    """Rename annotation targets throughout a type (identity on structure)."""
    if not mapping:
        return t

    def ren(ts: tuple[Endpoint, ...]) -> tuple[Endpoint, ...]:
        return tuple(mapping.get(u, u) for u in ts)

    match t:
        case Atom() | DualAtom():
            return t
        case One(ts):
            return One(ren(ts))
        case Bot():
            return with_targets(t, ren(targets_of(t)))
        case Tensor(l, r, ts):
            return Tensor(rename_targets(l, mapping), rename_targets(r, mapping), ren(ts))
        case Par(l, r, _):
            return with_targets(
                Par(rename_targets(l, mapping), rename_targets(r, mapping)), ren(targets_of(t))
            )
        case Plus(l, r, _):
            return with_targets(
                Plus(rename_targets(l, mapping), rename_targets(r, mapping)), ren(targets_of(t))
            )
        case With(l, r, ts):
            return With(rename_targets(l, mapping), rename_targets(r, mapping), ren(ts))
        case OfCourse(b, ts):
            return OfCourse(rename_targets(b, mapping), ren(ts))
        case WhyNot(b, _):
            return with_targets(WhyNot(rename_targets(b, mapping)), ren(targets_of(t)))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Processes


@dataclass(frozen=True)
class Link:
    x: Endpoint
    y: Endpoint


@dataclass(frozen=True)
class Close:
    x: Endpoint


@dataclass(frozen=True)
class Wait:
    x: Endpoint
    cont: Process


@dataclass(frozen=True)
class Send:
    x: Endpoint
    fresh: Endpoint
    payload: Process
    cont: Process


@dataclass(frozen=True)
class Recv:
    x: Endpoint
    fresh: Endpoint
    cont: Process


@dataclass(frozen=True)
class Inl:
    x: Endpoint
    cont: Process


@dataclass(frozen=True)
class Inr:
    x: Endpoint
    cont: Process


@dataclass(frozen=True)
class Case:
    x: Endpoint
    left: Process
    right: Process


@dataclass(frozen=True)
class Server:
    x: Endpoint
    fresh: Endpoint
    body: Process


@dataclass(frozen=True)
class Client:
    x: Endpoint
    fresh: Endpoint
    cont: Process


@dataclass(frozen=True)
class Cut:
    x: Endpoint
    y: Endpoint
    left: Process
    right: Process


@dataclass(frozen=True)
class MCut:
    bound: tuple[Endpoint, ...]
    fwd: Process
    pending: tuple[tuple[Endpoint, Process], ...]
    parts: tuple[Process, ...]


Process = Union[Link, Close, Wait, Send, Recv, Inl, Inr, Case, Server, Client, Cut, MCut]


def free_endpoints(p: Process) -> frozenset[Endpoint]:
    match p:
        case Link(x, y):
            return frozenset((x, y))
        case Close(x):
            return frozenset((x,))
        case Wait(x, c):
            return free_endpoints(c) | {x}
        case Send(x, f, pl, c):
            return (free_endpoints(pl) - {f}) | free_endpoints(c) | {x}
        case Recv(x, f, c):
            return (free_endpoints(c) - {f}) | {x}
        case Inl(x, c) | Inr(x, c):
            return free_endpoints(c) | {x}
        case Case(x, l, r):
            return free_endpoints(l) | free_endpoints(r) | {x}
        case Server(x, f, b) | Client(x, f, b):
            return (free_endpoints(b) - {f}) | {x}
        case Cut(x, y, l, r):
            return (free_endpoints(l) - {x}) | (free_endpoints(r) - {y})
        case MCut(bound, fwd, pending, parts):
            fv = free_endpoints(fwd)
            for y, q in pending:
                fv |= free_endpoints(q) - {y}
            for q in parts:
                fv |= free_endpoints(q)
            return fv - frozenset(bound) - frozenset(y for y, _ in pending)
    raise TypeError(p)


def is_cut_free(p: Process) -> bool:
    match p:
        case Cut() | MCut():
            return False
        case Link() | Close():
            return True
        case Wait(_, c) | Inl(_, c) | Inr(_, c):
            return is_cut_free(c)
        case Send(_, _, pl, c):
            return is_cut_free(pl) and is_cut_free(c)
        case Recv(_, _, c) | Server(_, _, c) | Client(_, _, c):
            return is_cut_free(c)
        case Case(_, l, r):
            return is_cut_free(l) and is_cut_free(r)
    raise TypeError(p)


class FreshNames:
    """Deterministic fresh-name supply: base#1, base#2, ... avoiding a set."""

    def __init__(self, avoid: frozenset[str] = frozenset()):
        self.used = set(avoid)
        self.counter = 0

    def fresh(self, base: str) -> str:
        base = base.split("#", 1)[0] or "e"
        cand = base
        while cand in self.used:
            self.counter += 1
            cand = f"{base}#{self.counter}"
        self.used.add(cand)
        return cand


def rename_free(p: Process, mapping: dict[Endpoint, Endpoint]) -> Process:
    """Capture-avoiding renaming of free endpoints."""
    if not mapping:
        return p

    def go(p: Process, m: dict[Endpoint, Endpoint]) -> Process:
        if not m:
            return p

        def r(x: Endpoint) -> Endpoint:
            return m.get(x, x)

        def under(binders: tuple[Endpoint, ...], q: Process) -> tuple[tuple[Endpoint, ...], Process]:
            # Drop shadowed entries; freshen binders that would capture.
            m2 = {k: v for k, v in m.items() if k not in binders}
            clash = [b for b in binders if b in m2.values()]
            if clash:
                fresh = FreshNames(frozenset(m2.values()) | free_endpoints(q) | set(binders))
                ren = {b: fresh.fresh(b) for b in clash}
                q = go(q, ren)
                binders = tuple(ren.get(b, b) for b in binders)
                m2 = {k: v for k, v in m.items() if k not in binders}
            return binders, go(q, m2)

        match p:
            case Link(x, y):
                return Link(r(x), r(y))
            case Close(x):
                return Close(r(x))
            case Wait(x, c):
                return Wait(r(x), go(c, m))
            case Send(x, f, pl, c):
                (f2,), pl2 = under((f,), pl)
                return Send(r(x), f2, pl2, go(c, m))
            case Recv(x, f, c):
                (f2,), c2 = under((f,), c)
                return Recv(r(x), f2, c2)
            case Inl(x, c):
                return Inl(r(x), go(c, m))
            case Inr(x, c):
                return Inr(r(x), go(c, m))
            case Case(x, l, rr):
                return Case(r(x), go(l, m), go(rr, m))
            case Server(x, f, b):
                (f2,), b2 = under((f,), b)
                return Server(r(x), f2, b2)
            case Client(x, f, b):
                (f2,), b2 = under((f,), b)
                return Client(r(x), f2, b2)
            case Cut(x, y, l, rr):
                (x2,), l2 = under((x,), l)
                (y2,), r2 = under((y,), rr)
                return Cut(x2, y2, l2, r2)
            case MCut(bound, fwd, pending, parts):
                m2 = {k: v for k, v in m.items() if k not in bound}
                pend = tuple(
                    (y, go(q, {k: v for k, v in m2.items() if k != y})) for y, q in pending
                )
                return MCut(
                    bound,
                    go(fwd, {k: v for k, v in m2.items()}),
                    pend,
                    tuple(go(q, m2) for q in parts),
                )
        raise TypeError(p)

    return go(p, dict(mapping))


# ---------------------------------------------------------------------------
# Printing


def _fmt_targets(ts: tuple[Endpoint, ...]) -> str:
    return "{" + ",".join(ts) + "}" if ts else ""


def _fmt_opt(u: Endpoint | None) -> str:
    return "{" + u + "}" if u is not None else ""


_BINOPS = {Tensor: "*", Par: "|", Plus: "+", With: "&"}


def print_type(t: Type) -> str:
    match t:
        case Atom(a):
            return a
        case DualAtom(a):
            return "~" + a
        case One(ts):
            return "1" + _fmt_targets(ts)
        case Bot(u):
            return "bot" + _fmt_opt(u)
        case Tensor(l, r, ts) | With(l, r, ts):
            op = _BINOPS[type(t)] + _fmt_targets(ts)
            return f"{_print_operand(l)} {op} {print_type(r)}"
        case Par(l, r, u) | Plus(l, r, u):
            op = _BINOPS[type(t)] + _fmt_opt(u)
            return f"{_print_operand(l)} {op} {print_type(r)}"
        case OfCourse(b, ts):
            return "!" + _fmt_targets(ts) + " " + _print_operand(b)
        case WhyNot(b, u):
            return "?" + _fmt_opt(u) + " " + _print_operand(b)
    raise TypeError(t)


def _print_operand(t: Type) -> str:
    # Binaries are right-associative at one precedence tier, so a binary in
    # left-operand position needs parentheses.
    if isinstance(t, (Tensor, Par, Plus, With)):
        return "(" + print_type(t) + ")"
    return print_type(t)


def print_process(p: Process) -> str:
    match p:
        case Link(x, y):
            return f"{x}<->{y}"
        case Close(x):
            return f"close {x}"
        case Wait(x, c):
            return f"wait {x}; {print_process(c)}"
        case Send(x, f, pl, c):
            return f"{x}[{f}].({print_process(pl)} | {print_process(c)})"
        case Recv(x, f, c):
            return f"{x}({f}). {print_process(c)}"
        case Inl(x, c):
            return f"{x}.inl. {print_process(c)}"
        case Inr(x, c):
            return f"{x}.inr. {print_process(c)}"
        case Case(x, l, r):
            return f"case {x} {{inl: {print_process(l)}; inr: {print_process(r)}}}"
        case Server(x, f, b):
            return f"!{x}({f}). {print_process(b)}"
        case Client(x, f, b):
            return f"?{x}[{f}]. {print_process(b)}"
        case Cut(x, y, l, r):
            return f"res {x} {y} ({print_process(l)} | {print_process(r)})"
        case MCut(bound, fwd, pending, parts):
            hdr = " ".join(bound) + " : " + print_process(fwd)
            if pending:
                hdr += " [" + ", ".join(f"{y} <- {print_process(q)}" for y, q in pending) + "]"
            return "res {" + hdr + "} (" + " | ".join(print_process(q) for q in parts) + ")"
    raise TypeError(p)
