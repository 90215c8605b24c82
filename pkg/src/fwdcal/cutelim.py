"""Binary cut: distribution, substitution, and the reduction engine.

A cut joins two judgements whose distinguished formulas are dual up to
erasure.  Its conclusions are computed in two phases: distribution relocates
every queued item of the dying endpoints to an endpoint of the opposite
context (rewriting the item's destination to expect delivery from there), and
substitution peels the two formulas in lockstep, rewiring every remaining
reference to the dying endpoints.  Distribution is nondeterministic, so a cut
has a set of conclusions; the reduction engine realizes any chosen one by
beta-steps, strictly decreasing the (rank, process sizes) measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from . import syntax as S
from .syntax import (
    Atom, Bot, Case, Client, Close, Cut, DualAtom, Endpoint, Inl, Inr, Link, OfCourse,
    One, Par, Plus, Process, Recv, Send, Server, Tensor, Type, Wait, WhyNot, With,
    dual, erase, rename_free, size,
)
from .contexts import (
    Context, Entry, LeftTok, MsgBox, Query, Queue, QueueItem, RightTok, Star,
    normalize_context, retarget,
)
from .checker import CheckError, Derivation, check_forwarder, forwarder_step


class CutError(Exception):
    pass


class NoSuchReceiver(CutError):
    pass


class EmptyQueue(CutError):
    pass


class AnnotationMismatch(CutError):
    pass


class StructuralMismatch(CutError):
    pass


class DanglingReference(CutError):
    pass


class PlanMismatch(CutError):
    pass


class FuelExhausted(CutError):
    def __init__(self, msg, trace):
        super().__init__(f"{msg}; trace so far: {trace}")
        self.trace = trace


class Stuck(CutError):
    pass


# ---------------------------------------------------------------------------
# Cut pairs


@dataclass(frozen=True)
class CutSide:
    ctx: Context  # spectator entries
    queue: Queue  # pending items of the cut endpoint
    endpoint: Endpoint
    formula: Type

    @staticmethod
    def of(g: Context, x: Endpoint) -> CutSide:
        e = g.get(x)
        if e.typing is None:
            raise StructuralMismatch(f"cut endpoint {x} is terminated")
        return CutSide(g.without(x), e.queue, x, e.typing)

    def judgement(self) -> Context:
        return self.ctx.add(Entry(self.endpoint, self.queue, self.formula))


@dataclass(frozen=True)
class Done:
    context: Context


@dataclass(frozen=True)
class CutPair:
    top: CutSide
    bottom: CutSide
    phase: str | Done = "distributing"
    # The bullet markers: distributed items accumulate per receiver, in front
    # of the receiver's original queue.  Present only while distributing.
    cursors: tuple[tuple[Endpoint, Queue], ...] = ()

    def __post_init__(self):
        if erase(self.top.formula) != dual(erase(self.bottom.formula)):
            raise StructuralMismatch(
                f"cut formulas are not dual: {erase(self.top.formula)} "
                f"vs {erase(self.bottom.formula)}"
            )


# -- the sender-side rewiring -------------------------------------------------


def _splice(ts: tuple[Endpoint, ...], old: Endpoint, new: tuple[Endpoint, ...]) -> tuple[Endpoint, ...]:
    i = ts.index(old)
    return ts[:i] + new + ts[i + 1 :]


def rewrite_pending(t: Type, kind: type, at: Endpoint, new: tuple[Endpoint, ...]) -> Type | None:
    """Rewrite the leftmost ``kind`` connective aimed at ``at`` to aim at
    ``new`` instead; None when no such connective exists."""
    if isinstance(t, kind) and at in S.targets_of(t):
        return S.with_targets(t, _splice(S.targets_of(t), at, new))
    match t:
        case Atom() | DualAtom() | One() | Bot():
            return None
        case Tensor(l, r, _) | Par(l, r, _) | Plus(l, r, _) | With(l, r, _):
            got = rewrite_pending(l, kind, at, new)
            if got is not None:
                return type(t)(got, r, *_slot(t))
            got = rewrite_pending(r, kind, at, new)
            if got is not None:
                return type(t)(l, got, *_slot(t))
            return None
        case OfCourse(b, _) | WhyNot(b, _):
            got = rewrite_pending(b, kind, at, new)
            if got is not None:
                return type(t)(got, *_slot(t))
            return None
    raise TypeError(t)


def rewrite_all(t: Type, kind: type, at: Endpoint, new: Endpoint) -> tuple[Type, int]:
    """Rewrite every ``kind`` connective aimed at ``at``; returns the count."""
    n = 0
    if isinstance(t, kind) and at in S.targets_of(t):
        t = S.with_targets(t, _splice(S.targets_of(t), at, (new,)))
        n += 1
    match t:
        case Atom() | DualAtom() | One() | Bot():
            return t, n
        case Tensor(l, r, _) | Par(l, r, _) | Plus(l, r, _) | With(l, r, _):
            l2, nl = rewrite_all(l, kind, at, new)
            r2, nr = rewrite_all(r, kind, at, new)
            return type(t)(l2, r2, *_slot(t)), n + nl + nr
        case OfCourse(b, _) | WhyNot(b, _):
            b2, nb = rewrite_all(b, kind, at, new)
            return type(t)(b2, *_slot(t)), n + nb
    raise TypeError(t)


def _slot(t: Type):
    ts = S.targets_of(t)
    if isinstance(t, (One, Tensor, With, OfCourse)):
        return (ts,)
    return (ts[0] if ts else None,)


_ITEM_PENDING: dict[type, type] = {
    MsgBox: Tensor,
    Star: One,
    LeftTok: Plus,
    RightTok: Plus,
    Query: WhyNot,
}


def _rewire_sender(ctx: Context, item: QueueItem, dying: Endpoint,
                   receivers: tuple[Endpoint, ...]) -> Context:
    """Point the item's destination at the receivers instead of the dying
    cut endpoint."""
    d = item.target
    if not ctx.has(d):
        raise AnnotationMismatch(f"queued item aimed at {d}, absent from the context")
    e = ctx.get(d)
    if e.typing is None:
        raise AnnotationMismatch(f"queued item aimed at terminated endpoint {d}")
    got = rewrite_pending(e.typing, _ITEM_PENDING[type(item)], dying, receivers)
    if got is None:
        raise AnnotationMismatch(
            f"{d} has no pending {_ITEM_PENDING[type(item)].__name__} aimed at {dying}"
        )
    return ctx.replace(d, Entry(d, e.queue, got))


def distr_step(p: CutPair, item_target_choice: Endpoint | tuple[Endpoint, ...]) -> CutPair:
    """Move the head item of a cut queue to a chosen receiver opposite it.

    The top queue is drained first; gathered boxes take one receiver per
    payload and split accordingly.  When both queues are empty the phase
    advances by ``finish_distribution``.
    """
    if p.phase != "distributing":
        raise CutError("distr_step outside the distribution phase")
    if p.top.queue:
        src, dst_ctx, from_top = p.top, p.bottom.ctx, True
    elif p.bottom.queue:
        src, dst_ctx, from_top = p.bottom, p.top.ctx, False
    else:
        raise EmptyQueue("both cut queues are already distributed")
    item, rest = src.queue[0], src.queue[1:]

    choice = item_target_choice
    if isinstance(choice, str):
        choice = (choice,)
    if isinstance(item, MsgBox) and len(item.payloads) > 1:
        if len(choice) != len(item.payloads):
            raise NoSuchReceiver("gathered box needs one receiver per payload")
        pieces = [MsgBox(item.target, (pl,)) for pl in item.payloads]
    else:
        if len(choice) != 1:
            raise NoSuchReceiver("plain items take a single receiver")
        pieces = [item]
    for c in choice:
        if not dst_ctx.has(c):
            raise NoSuchReceiver(f"{c} is not an endpoint of the opposite context")

    # Rewire the sender entry, which lives on the same side as the queue.
    same_ctx = p.top.ctx if from_top else p.bottom.ctx
    same_ctx = _rewire_sender(same_ctx, item, src.endpoint, tuple(choice))

    cursors = p.cursors
    for c, piece in zip(choice, pieces):
        cur = dict(cursors)
        cur[c] = cur.get(c, ()) + (piece,)
        cursors = tuple(sorted(cur.items()))

    if from_top:
        top = CutSide(same_ctx, rest, p.top.endpoint, p.top.formula)
        return CutPair(top, p.bottom, "distributing", cursors)
    bottom = CutSide(same_ctx, rest, p.bottom.endpoint, p.bottom.formula)
    return CutPair(p.top, bottom, "distributing", cursors)


def finish_distribution(p: CutPair) -> CutPair:
    """Flush the bullet markers: distributed items precede original queues."""
    if p.top.queue or p.bottom.queue:
        raise CutError("queues not fully distributed")
    cur = dict(p.cursors)

    def flush(ctx: Context) -> Context:
        ents = []
        for e in ctx.entries:
            pre = cur.get(e.endpoint, ())
            ents.append(Entry(e.endpoint, tuple(pre) + e.queue, e.typing))
        return Context(tuple(ents))

    top = CutSide(flush(p.top.ctx), (), p.top.endpoint, p.top.formula)
    bottom = CutSide(flush(p.bottom.ctx), (), p.bottom.endpoint, p.bottom.formula)
    return CutPair(top, bottom, "substituting", ())


def distr_enumerate(p: CutPair) -> list[CutPair]:
    """All maximal distributions, cursors flushed, deduplicated."""
    results: dict[tuple, CutPair] = {}

    def go(q: CutPair):
        if not q.top.queue and not q.bottom.queue:
            done = finish_distribution(q)
            key = (normalize_context(done.top.ctx), normalize_context(done.bottom.ctx))
            results.setdefault(key, done)
            return
        src_top = bool(q.top.queue)
        item = (q.top.queue if src_top else q.bottom.queue)[0]
        receivers = (q.bottom.ctx if src_top else q.top.ctx).endpoints()
        if not receivers:
            return  # no maximal distribution exists
        if isinstance(item, MsgBox) and len(item.payloads) > 1:
            from itertools import product

            for combo in product(receivers, repeat=len(item.payloads)):
                go(distr_step(q, tuple(combo)))
        else:
            for c in receivers:
                go(distr_step(q, c))

    go(p)
    return [results[k] for k in sorted(results, key=repr)]


# -- substitution -------------------------------------------------------------


def _first_destined(queue: Queue, target: Endpoint) -> int | None:
    for i, it in enumerate(queue):
        if it.target == target:
            return i
    return None


def _subst_multi_side(ctx: Context, dying: Endpoint, partners: tuple[Endpoint, ...],
                      pending_kind: type, item_kind: type, to: Endpoint) -> Context:
    """On the gathering/broadcast side: each partner either already queues the
    matching item for the dying endpoint or still carries the pending dual
    connective; both kinds of reference are redirected to ``to``."""
    for m in partners:
        if not ctx.has(m):
            raise DanglingReference(f"partner {m} missing from context")
        e = ctx.get(m)
        if item_kind is not None:
            idx = _first_destined(e.queue, dying)
            if idx is not None:
                it = e.queue[idx]
                if not isinstance(it, item_kind):
                    raise StructuralMismatch(
                        f"first item for {dying} at {m} is {type(it).__name__}"
                    )
                if item_kind is Star:
                    # every star aimed at the dying endpoint moves with it
                    q = tuple(
                        retarget(i, to) if isinstance(i, Star) and i.target == dying else i
                        for i in e.queue
                    )
                else:
                    q = e.queue[:idx] + (retarget(it, to),) + e.queue[idx + 1 :]
                ctx = ctx.replace(m, Entry(m, q, e.typing))
                continue
        if e.typing is None:
            raise DanglingReference(f"{m} terminated with no queued reference to {dying}")
        if item_kind is Star:
            t2, n = rewrite_all(e.typing, pending_kind, dying, to)
            if n == 0:
                raise DanglingReference(f"{m} has no pending {pending_kind.__name__} at {dying}")
        else:
            t2 = rewrite_pending(e.typing, pending_kind, dying, (to,))
            if t2 is None:
                raise DanglingReference(f"{m} has no pending {pending_kind.__name__} at {dying}")
        ctx = ctx.replace(m, Entry(m, e.queue, t2))
    return ctx


def _subst_single_side(ctx: Context, dying: Endpoint, partner: Endpoint,
                       pending_kind: type, token_kind: type | None,
                       new_names: tuple[Endpoint, ...]) -> Context:
    """On the single-target side: the partner either queues the token aimed at
    the dying endpoint (expanded into a broadcast series) or carries the dual
    pending connective whose target list gets the new names spliced in."""
    if not ctx.has(partner):
        raise DanglingReference(f"partner {partner} missing from context")
    e = ctx.get(partner)
    if token_kind is not None:
        idx = _first_destined(e.queue, dying)
        if idx is not None:
            it = e.queue[idx]
            if not isinstance(it, token_kind):
                raise StructuralMismatch(
                    f"first item for {dying} at {partner} is {type(it).__name__}"
                )
            series = tuple(retarget(it, u) for u in new_names)
            q = e.queue[:idx] + series + e.queue[idx + 1 :]
            return ctx.replace(partner, Entry(partner, q, e.typing))
    if e.typing is None:
        raise DanglingReference(f"{partner} terminated with no reference to {dying}")
    t2 = rewrite_pending(e.typing, pending_kind, dying, new_names)
    if t2 is None:
        raise DanglingReference(
            f"{partner} has no pending {pending_kind.__name__} at {dying}"
        )
    return ctx.replace(partner, Entry(partner, e.queue, t2))


def subst_step(p: CutPair) -> CutPair:
    """One peeling step of the substitution phase; deterministic."""
    if p.phase != "substituting":
        raise CutError("subst_step outside the substitution phase")
    a, b = p.top.formula, p.bottom.formula
    x, y = p.top.endpoint, p.bottom.endpoint
    tctx, bctx = p.top.ctx, p.bottom.ctx

    def swapped(q: CutPair) -> CutPair:
        return CutPair(q.bottom, q.top, q.phase, q.cursors)

    match a, b:
        case (Atom(n), DualAtom(m)) | (DualAtom(n), Atom(m)):
            if n != m:
                raise StructuralMismatch(f"atoms differ: {n} vs {m}")
            merged = Context(tctx.entries + bctx.entries)
            return CutPair(p.top, p.bottom, Done(merged), ())

        case (One(ms), Bot(c)):
            tctx2 = _subst_multi_side(tctx, x, ms, Bot, Star, c)
            bctx2 = _subst_single_side(bctx, y, c, One, None, ms)
            merged = Context(tctx2.entries + bctx2.entries)
            return CutPair(p.top, p.bottom, Done(merged), ())
        case (Bot(_), One(_)):
            return swapped(subst_step(swapped(p)))

        case (Tensor(a1, b1, ms), Par(_, b2, c)):
            tctx2 = _subst_multi_side(tctx, x, ms, Par, MsgBox, c)
            bctx2 = _subst_single_side(bctx, y, c, Tensor, None, ms)
            return CutPair(
                CutSide(tctx2, (), x, b1), CutSide(bctx2, (), y, b2), "substituting", ()
            )
        case (Par(_, _, _), Tensor(_, _, _)):
            return swapped(subst_step(swapped(p)))

        case (With(a1, b1, ms), Plus(a2, b2, c)):
            tctx2 = _subst_multi_side(tctx, x, ms, Plus, None, c)
            # the token (if queued) decides the branch; otherwise peel left
            branch = "L"
            e = bctx.get(c) if bctx.has(c) else None
            if e is not None:
                idx = _first_destined(e.queue, y)
                if idx is not None and isinstance(e.queue[idx], (LeftTok, RightTok)):
                    branch = "L" if isinstance(e.queue[idx], LeftTok) else "R"
                    bctx2 = _subst_single_side(bctx, y, c, With, type(e.queue[idx]), ms)
                else:
                    bctx2 = _subst_single_side(bctx, y, c, With, None, ms)
            else:
                raise DanglingReference(f"partner {c} missing from context")
            ka, kb = (a1, a2) if branch == "L" else (b1, b2)
            return CutPair(
                CutSide(tctx2, (), x, ka), CutSide(bctx2, (), y, kb), "substituting", ()
            )
        case (Plus(_, _, _), With(_, _, _)):
            return swapped(subst_step(swapped(p)))

        case (OfCourse(a1, ms), WhyNot(a2, c)):
            tctx2 = _subst_multi_side(tctx, x, ms, WhyNot, None, c)
            bctx2 = _subst_single_side(bctx, y, c, OfCourse, Query, ms)
            return CutPair(
                CutSide(tctx2, (), x, a1), CutSide(bctx2, (), y, a2), "substituting", ()
            )
        case (WhyNot(_, _), OfCourse(_, _)):
            return swapped(subst_step(swapped(p)))

    raise StructuralMismatch(f"no substitution case for {type(a).__name__}/{type(b).__name__}")


def subst_run(p: CutPair) -> Context:
    """Peel the cut formulas to quiescence; deterministic."""
    while not isinstance(p.phase, Done):
        p = subst_step(p)
    return p.phase.context


def context_names(g: Context) -> frozenset[str]:
    names = set(_ctx_names(g))
    for e in g.entries:
        if e.typing is not None:
            for s in S.subtypes(e.typing):
                names.update(S.targets_of(s))
        for it in e.queue:
            names.add(it.target)
            if isinstance(it, MsgBox):
                for _, pt in it.payloads:
                    for s in S.subtypes(pt):
                        names.update(S.targets_of(s))
    return frozenset(names)


def cut_conclusions(left: Context, x: Endpoint, right: Context, y: Endpoint) -> list[Context]:
    """Every admissible conclusion of cutting ``x`` in ``left`` against ``y``
    in ``right``, in a canonical order.  The contexts must not share names."""
    shared = context_names(left) & context_names(right)
    if shared:
        raise CutError(f"cut contexts share names {sorted(shared)}")
    pair = CutPair(CutSide.of(left, x), CutSide.of(right, y))
    out: dict[Context, Context] = {}
    for q in distr_enumerate(pair):
        g = subst_run(q)
        out.setdefault(normalize_context(g), g)
    return [out[k] for k in sorted(out, key=repr)]


# ---------------------------------------------------------------------------
# Rank


def proc_size(p: Process) -> int:
    match p:
        case Link() | Close():
            return 1
        case Wait(_, c) | Inl(_, c) | Inr(_, c) | Recv(_, _, c) | Server(_, _, c) | Client(_, _, c):
            return 1 + proc_size(c)
        case Send(_, _, pl, c):
            return 1 + proc_size(pl) + proc_size(c)
        case Case(_, l, r):
            return 1 + proc_size(l) + proc_size(r)
        case Cut(_, _, l, r):
            return 1 + proc_size(l) + proc_size(r)
        case S.MCut(_, fwd, pending, parts):
            return 1 + proc_size(fwd) + sum(proc_size(q) for _, q in pending) + sum(
                proc_size(q) for q in parts
            )
    raise TypeError(p)


def rank(p: Process, formula_of: Callable[[Cut], Type] | None = None) -> int:
    """Maximum size of a cut formula in ``p``; zero when cut-free.

    Bare process terms do not carry cut formulas, so a lookup supplies them;
    the reduction engine tracks formulas alongside the terms it rewrites.
    """
    match p:
        case Cut() as c:
            if formula_of is None:
                raise CutError("rank of a cut needs its formula")
            sub = max(rank(c.left, formula_of), rank(c.right, formula_of))
            return max(size(erase(formula_of(c))), sub)
        case Link() | Close():
            return 0
        case Wait(_, c) | Inl(_, c) | Inr(_, c) | Recv(_, _, c) | Server(_, _, c) | Client(_, _, c):
            return rank(c, formula_of)
        case Send(_, _, pl, c):
            return max(rank(pl, formula_of), rank(c, formula_of))
        case Case(_, l, r):
            return max(rank(l, formula_of), rank(r, formula_of))
        case S.MCut():
            raise CutError("rank is defined for binary cut terms")
    raise TypeError(p)


# ---------------------------------------------------------------------------
# The reduction engine


@dataclass(frozen=True)
class Judged:
    """A forwarder term together with its (derivable) typing context."""

    term: Process
    ctx: Context


@dataclass
class _Engine:
    fuel: int
    trace: list[str] = field(default_factory=list)
    steps: int = 0

    def tick(self, tag: str):
        self.steps += 1
        self.trace.append(tag)
        if self.steps > self.fuel:
            raise FuelExhausted("fuel exhausted", tuple(self.trace))

    def untick(self, upto: int):
        # backtracking: forget the abandoned branch's tags
        del self.trace[upto:]


def default_fuel(left: Judged, right: Judged) -> int:
    from .contexts import context_size

    return 4 * (
        context_size(left.ctx) + context_size(right.ctx)
        + proc_size(left.term) + proc_size(right.term) + 4
    )


def reduce_cut(left: Judged, x: Endpoint, right: Judged, y: Endpoint,
               gamma: Context, fuel: int | None = None) -> tuple[Process, tuple[str, ...]]:
    """Reduce ``res x y (left | right)`` to a cut-free process at ``gamma``.

    ``gamma`` must be one of the cut's conclusions; the engine threads the
    goal through commuting steps and backtracks over the interleavings the
    nondeterministic distribution allows.  The two judgements must not share
    any name (freshen_judgement prepares a side).
    """
    shared = judgement_names(left) & judgement_names(right)
    if shared:
        raise CutError(f"cut sides share names {sorted(shared)}; rename apart first")
    if fuel is None:
        fuel = default_fuel(left, right)
    eng = _Engine(fuel)
    supply = S.FreshNames(
        frozenset(_ctx_names(left.ctx) | _ctx_names(right.ctx) | _proc_names(left.term)
                  | _proc_names(right.term) | _ctx_names(gamma))
    )
    got = _reduce(left, x, right, y, gamma, eng, supply)
    if got is None:
        raise Stuck(f"no reduction realizes the requested conclusion; trace {eng.trace}")
    return got, tuple(eng.trace)


def _ctx_names(g: Context) -> set[str]:
    out = set(g.endpoints())
    for e in g.entries:
        for it in e.queue:
            if isinstance(it, MsgBox):
                out.update(p for p, _ in it.payloads)
    return out


def _proc_names(p: Process) -> set[str]:
    out = set()

    def go(q: Process):
        match q:
            case Link(a, b):
                out.update((a, b))
            case Close(a):
                out.add(a)
            case Wait(a, c) | Inl(a, c) | Inr(a, c):
                out.add(a)
                go(c)
            case Send(a, f, pl, c):
                out.update((a, f))
                go(pl)
                go(c)
            case Recv(a, f, c) | Server(a, f, c) | Client(a, f, c):
                out.update((a, f))
                go(c)
            case Case(a, l, r):
                out.add(a)
                go(l)
                go(r)
            case Cut(a, b, l, r):
                out.update((a, b))
                go(l)
                go(r)
            case S.MCut(bound, fwd, pending, parts):
                out.update(bound)
                go(fwd)
                for yy, qq in pending:
                    out.add(yy)
                    go(qq)
                for qq in parts:
                    go(qq)

    go(p)
    return out


def judgement_names(j: Judged) -> frozenset[str]:
    """Every name a judgement mentions: endpoints, boxed payload names,
    annotation targets (which may forward-reference term binders), and the
    term's free and bound names."""
    return context_names(j.ctx) | frozenset(_proc_names(j.term))


def freshen_judgement(j: Judged, avoid: frozenset[str]) -> Judged:
    """Rename every name of the judgement that collides with ``avoid``,
    consistently across the context (entries, payloads, annotation targets)
    and the term (free names and binders)."""
    clash = sorted(judgement_names(j) & avoid)
    if not clash:
        return j
    supply = S.FreshNames(frozenset(avoid) | judgement_names(j))
    mapping = {b: supply.fresh(b) for b in clash}
    return Judged(_rename_everywhere(j.term, mapping), _rename_ctx_everywhere(j.ctx, mapping))


def _rename_everywhere(p: Process, m: dict[str, str]) -> Process:
    def r(n: str) -> str:
        return m.get(n, n)

    match p:
        case Link(a, b):
            return Link(r(a), r(b))
        case Close(a):
            return Close(r(a))
        case Wait(a, c):
            return Wait(r(a), _rename_everywhere(c, m))
        case Inl(a, c):
            return Inl(r(a), _rename_everywhere(c, m))
        case Inr(a, c):
            return Inr(r(a), _rename_everywhere(c, m))
        case Case(a, l, rr):
            return Case(r(a), _rename_everywhere(l, m), _rename_everywhere(rr, m))
        case Recv(a, f, c) | Server(a, f, c) | Client(a, f, c):
            return type(p)(r(a), r(f), _rename_everywhere(c, m))
        case Send(a, f, pl, c):
            return Send(r(a), r(f), _rename_everywhere(pl, m), _rename_everywhere(c, m))
        case Cut(a, b, l, rr):
            return Cut(r(a), r(b), _rename_everywhere(l, m), _rename_everywhere(rr, m))
    raise TypeError(p)


def _rename_ctx_everywhere(g: Context, m: dict[str, str]) -> Context:
    from .syntax import rename_targets

    ents = []
    for e in g.entries:
        q = []
        for it in e.queue:
            it = retarget(it, m.get(it.target, it.target))
            if isinstance(it, MsgBox):
                it = MsgBox(it.target,
                            tuple((m.get(pn, pn), rename_targets(pt, m))
                                  for pn, pt in it.payloads))
            q.append(it)
        typ = rename_targets(e.typing, m) if e.typing is not None else None
        ents.append(Entry(m.get(e.endpoint, e.endpoint), tuple(q), typ))
    return Context(tuple(ents))


def _premises(j: Judged) -> tuple[str, tuple[Judged, ...]]:
    tag, prem = forwarder_step(j.term, j.ctx)
    return tag, tuple(Judged(q, h) for q, h in prem)


def _measure(a: Type, left: Judged, right: Judged) -> tuple[int, int]:
    return size(erase(a)), proc_size(left.term) + proc_size(right.term)


def _head_endpoint(p: Process) -> Endpoint | None:
    match p:
        case Close(a) | Wait(a, _) | Send(a, _, _, _) | Recv(a, _, _) | Inl(a, _) \
             | Inr(a, _) | Case(a, _, _) | Server(a, _, _) | Client(a, _, _):
            return a
        case Link():
            return None
    return None


def _reduce(left: Judged, x: Endpoint, right: Judged, y: Endpoint,
            gamma: Context, eng: _Engine, supply: S.FreshNames) -> Process | None:
    # Base case B1: a bare link on the cut endpoint renames the other side.
    for (a_j, a_x, b_j, b_y, swap) in ((left, x, right, y, False), (right, y, left, x, True)):
        if isinstance(a_j.term, Link) and a_x in (a_j.term.x, a_j.term.y):
            z = a_j.term.y if a_j.term.x == a_x else a_j.term.x
            mark = len(eng.trace)
            eng.tick("B1")
            result = rename_free(b_j.term, {b_y: z})
            try:
                check_forwarder(result, gamma)
                return result
            except CheckError:
                eng.untick(mark)
                return None

    lh, rh = _head_endpoint(left.term), _head_endpoint(right.term)

    # Base case B2 and the key cases need both heads on the cut pair.
    if lh == x and rh == y:
        return _principal(left, x, right, y, gamma, eng, supply)
    if lh == x and rh != y:
        return _commute(right, y, left, x, gamma, eng, supply, swap=True)
    if rh == y and lh != x:
        return _commute(left, x, right, y, gamma, eng, supply, swap=False)
    # both non-principal: try commuting either side
    got = _commute(right, y, left, x, gamma, eng, supply, swap=True)
    if got is not None:
        return got
    return _commute(left, x, right, y, gamma, eng, supply, swap=False)


def _principal(left: Judged, x: Endpoint, right: Judged, y: Endpoint,
               gamma: Context, eng: _Engine, supply: S.FreshNames) -> Process | None:
    lt, rt = left.term, right.term
    if isinstance(lt, Recv) or isinstance(lt, Inl) or isinstance(lt, Inr) \
       or isinstance(lt, Client) or isinstance(lt, Wait):
        # normalize so the positive action (send/case/server/close) is on the left
        return _principal(right, y, left, x, gamma, eng, supply)

    mark = len(eng.trace)
    match lt, rt:
        case (Close(_), Wait(_, _)):
            eng.tick("B2")
            got = _b2(left, x, right, y, gamma)
            if got is not None:
                return got
            eng.untick(mark)
            return None

        case (Send(_, a, _, _), Recv(_, c, _)):
            eng.tick("K")
            _, (payload_j, cont_j) = _premises(left)
            _, (rcont_j,) = _premises(right)
            try:
                boxed = _cut_in_box(payload_j, a, rcont_j, c, eng, supply)
            except CutError:
                eng.untick(mark)
                return None
            got = _reduce(cont_j, x, boxed, y, gamma, eng, supply)
            if got is None:
                eng.untick(mark)
            return got

        case (Case(_, _, _), Inl(_, _)) | (Case(_, _, _), Inr(_, _)):
            eng.tick("K-add")
            _, (lprem, rprem) = _premises(left)
            _, (cont_j,) = _premises(right)
            chosen = lprem if isinstance(rt, Inl) else rprem
            got = _reduce(chosen, x, cont_j, y, gamma, eng, supply)
            if got is None:
                eng.untick(mark)
            return got

        case (Server(_, a, _), Client(_, b, _)):
            eng.tick("K-exp")
            _, (body_j,) = _premises(left)
            _, (cont_j,) = _premises(right)
            got = _reduce(body_j, a, cont_j, b, gamma, eng, supply)
            if got is None:
                eng.untick(mark)
            return got

    raise Stuck(f"principal heads do not interact: {type(lt).__name__}/{type(rt).__name__}")


def _b2(left: Judged, x: Endpoint, right: Judged, y: Endpoint, gamma: Context) -> Process | None:
    """Unit base case: the wait continuation already inhabits the goal, the
    nonuniform substitution only reshuffles proof-level queues."""
    assert isinstance(right.term, Wait)
    _, (cont_j,) = _premises(right)
    try:
        check_forwarder(cont_j.term, gamma)
        return cont_j.term
    except CheckError:
        return None


def unit_redistribute(q: Judged, y: Endpoint, us: tuple[Endpoint, ...],
                      plan: dict[int, Endpoint], close_side: Context,
                      x: Endpoint) -> Judged:
    """Retype a unit-cut continuation at the redistributed context.

    ``q`` is the wait continuation, judged with ``y`` terminated; ``us`` are
    the gathering partners of the closing endpoint ``x`` and ``plan`` sends
    each position of ``y``'s pending queue (its closing star excluded) to one
    of them.  The term comes back unchanged: terminated endpoints never occur
    in it, only the typing records the scatter.
    """
    if not q.ctx.has(y):
        raise PlanMismatch(f"{y} not in the continuation context")
    ey = q.ctx.get(y)
    if ey.typing is not None:
        raise PlanMismatch(f"{y} must be terminated")
    items = list(ey.queue)
    if not items or not isinstance(items[-1], Star):
        raise PlanMismatch(f"{y}'s queue must end with the closing star")
    star = items.pop()
    if set(plan) != set(range(len(items))):
        raise PlanMismatch("plan must cover the queue positions exactly")
    for i in plan:
        if plan[i] not in us:
            raise PlanMismatch(f"receiver {plan[i]} is not a gathering partner")

    moved: dict[Endpoint, list[QueueItem]] = {u: [] for u in us}
    side = q.ctx.without(y)
    for i, it in enumerate(items):
        side = _rewire_sender(side, it, y, (plan[i],))
        moved[plan[i]].append(it)

    # partners were terminated holding one star for x; it now serves the
    # endpoint the closing star was aimed at
    c = star.target
    ents = []
    for u in us:
        old = close_side.get(u)
        if old.typing is not None or old.queue != (Star(x),):
            raise PlanMismatch(f"{u} is not a gathering partner of {x}")
        ents.append(Entry(u, tuple(moved[u]) + (Star(c),), None))
    if not side.has(c):
        raise PlanMismatch(f"unit partner {c} missing")
    ec = side.get(c)
    if ec.typing is None:
        raise PlanMismatch(f"unit partner {c} is terminated")
    t2 = rewrite_pending(ec.typing, One, y, us)
    if t2 is None:
        raise PlanMismatch(f"{c} has no pending unit aimed at {y}")
    side = side.replace(c, Entry(c, ec.queue, t2))
    return Judged(q.term, Context(tuple(ents) + side.entries))


def _commute(a_j: Judged, a_x: Endpoint, b_j: Judged, b_y: Endpoint,
             gamma: Context, eng: _Engine, supply: S.FreshNames, swap: bool) -> Process | None:
    """Push the head action of ``a_j`` (not on its cut endpoint) outside the
    cut, threading the goal context through the action's rule."""
    term = a_j.term
    if isinstance(term, Link) or _head_endpoint(term) == a_x:
        return None
    tags = {Wait: "C1", Recv: "C2", Send: "C3", Case: "C-case", Inl: "C-inl",
            Inr: "C-inr", Server: "C-srv", Client: "C-cli", Close: None}
    tag = tags.get(type(term))
    if tag is None:
        return None
    mark = len(eng.trace)
    eng.tick(tag)
    try:
        rule, gpremises = forwarder_step(term, gamma)
    except CheckError:
        eng.untick(mark)
        return None
    _, apremises = _premises(a_j)

    def orient(inner_a: Judged, g2: Context):
        if swap:
            return _reduce(b_j, b_y, inner_a, a_x, g2, eng, supply)
        return _reduce(inner_a, a_x, b_j, b_y, g2, eng, supply)

    result: Process | None = None
    match term:
        case Wait(z, _):
            got = orient(apremises[0], gpremises[0][1])
            result = Wait(z, got) if got is not None else None
        case Recv(z, v, _):
            got = orient(apremises[0], gpremises[0][1])
            result = Recv(z, v, got) if got is not None else None
        case Inl(z, _) | Inr(z, _):
            got = orient(apremises[0], gpremises[0][1])
            if got is not None:
                result = (Inl if isinstance(term, Inl) else Inr)(z, got)
        case Client(z, v, _):
            got = orient(apremises[0], gpremises[0][1])
            result = Client(z, v, got) if got is not None else None
        case Server(z, v, _):
            got = orient(apremises[0], gpremises[0][1])
            result = Server(z, v, got) if got is not None else None
        case Send(z, v, _, _):
            payload_j, cont_j = apremises
            gpl_ctx, gc_ctx = gpremises[0][1], gpremises[1][1]
            if normalize_context(payload_j.ctx) != normalize_context(gpl_ctx):
                eng.untick(mark)
                return None
            got = orient(cont_j, gc_ctx)
            result = Send(z, v, payload_j.term, got) if got is not None else None
        case Case(z, _, _):
            lprem, rprem = apremises
            a_got = orient(lprem, gpremises[0][1])
            if a_got is None:
                eng.untick(mark)
                return None
            b_got = orient(rprem, gpremises[1][1])
            result = Case(z, a_got, b_got) if b_got is not None else None
    if result is None:
        eng.untick(mark)
    return result


def _cut_in_box(payload: Judged, a: Endpoint, host: Judged, c: Endpoint,
                eng: _Engine, supply: S.FreshNames) -> Judged:
    """Replace the boxed endpoint ``c`` inside ``host`` by the payload's
    spectator ports, composing the payload in without a residual cut.

    When the box is consumed by a send whose gather is exactly that one
    message, the payload is spliced in place of the send's message process;
    otherwise a smaller cut is built and reduced recursively.
    """
    # locate the box holding c
    holder = None
    for e in host.ctx.entries:
        for it in e.queue:
            if isinstance(it, MsgBox) and any(pn == c for pn, _ in it.payloads):
                holder = e.endpoint
                break
    if holder is None:
        raise CutError(f"no box holds {c}")

    spect = []
    for en in payload.ctx.entries:
        if en.endpoint == a:
            continue
        if en.typing is None or en.queue:
            raise CutError("payload spectators must be plain typed entries")
        spect.append((en.endpoint, en.typing))
    spect = tuple(spect)

    def rebuild(h: Judged) -> Judged:
        tag, prem = _premises(h)
        term = h.term
        match term, tag:
            case (Send(z, v, pl, cont), "Tensor"):
                popped = _popped_payload_names(h)
                if c in popped:
                    pj, cj = prem
                    if len(popped) == 1 and len(pj.ctx.entries) == 2:
                        # simp: the gather is exactly the one box; splice
                        new_term = Send(z, a, payload.term, cj.term)
                        new_ctx = _swap_box(h.ctx, c, spect)
                        return Judged(new_term, new_ctx)
                    # general: cut the payload against the message process
                    sj = pj
                    concl = cut_conclusions(payload.ctx, a, sj.ctx, c)
                    if len(concl) != 1:
                        raise CutError(f"inner box cut is not determinate: {len(concl)}")
                    inner = _reduce(payload, a, sj, c, concl[0], eng, supply)
                    if inner is None:
                        raise CutError("inner box cut failed")
                    new_term = Send(z, v, inner, cj.term)
                    new_ctx = _swap_box(h.ctx, c, spect)
                    return Judged(new_term, new_ctx)
                pj, cj = prem
                sub = rebuild(cj)
                return Judged(Send(z, v, pj.term, sub.term), _swap_box(h.ctx, c, spect))
            case (Recv(z, v, _), "Par"):
                sub = rebuild(prem[0])
                return Judged(Recv(z, v, sub.term), _swap_box(h.ctx, c, spect))
            case (Wait(z, _), "Bot"):
                sub = rebuild(prem[0])
                return Judged(Wait(z, sub.term), _swap_box(h.ctx, c, spect))
            case (Inl(z, _), "PlusL"):
                sub = rebuild(prem[0])
                return Judged(Inl(z, sub.term), _swap_box(h.ctx, c, spect))
            case (Inr(z, _), "PlusR"):
                sub = rebuild(prem[0])
                return Judged(Inr(z, sub.term), _swap_box(h.ctx, c, spect))
            case (Case(z, _, _), "With"):
                l2, r2 = rebuild(prem[0]), rebuild(prem[1])
                return Judged(Case(z, l2.term, r2.term), _swap_box(h.ctx, c, spect))
            case (Client(z, v, _), "Quest"):
                sub = rebuild(prem[0])
                return Judged(Client(z, v, sub.term), _swap_box(h.ctx, c, spect))
            case (Server(z, v, _), "Bang"):
                sub = rebuild(prem[0])
                return Judged(Server(z, v, sub.term), _swap_box(h.ctx, c, spect))
        raise CutError(f"box never consumed under {tag}")

    out = rebuild(host)
    check_forwarder(out.term, out.ctx)
    return out


def _popped_payload_names(h: Judged) -> set[str]:
    term, ctx = h.term, h.ctx
    assert isinstance(term, Send)
    t = ctx.get(term.x).typing
    names: set[str] = set()
    for u in S.targets_of(t):
        q = ctx.get(u).queue
        if q and isinstance(q[0], MsgBox):
            names.update(pn for pn, _ in q[0].payloads)
    return names


def _swap_box(g: Context, c: Endpoint, spect: tuple[tuple[str, Type], ...]) -> Context:
    """Replace payload ``c`` in whatever box holds it by the spectator list."""
    ents = []
    for e in g.entries:
        q = []
        for it in e.queue:
            if isinstance(it, MsgBox) and any(pn == c for pn, _ in it.payloads):
                pls = []
                for pn, pt in it.payloads:
                    if pn == c:
                        pls.extend(spect)
                    else:
                        pls.append((pn, pt))
                it = MsgBox(it.target, tuple(pls))
            q.append(it)
        ents.append(Entry(e.endpoint, tuple(q), e.typing))
    return Context(tuple(ents))


# ---------------------------------------------------------------------------
# Single beta steps over bare terms (for the reduction figure's fixtures)


def beta_step(left: Judged, x: Endpoint, right: Judged, y: Endpoint) -> tuple[str, Process]:
    """Apply one reduction to ``res x y (left | right)``; returns the figure
    tag and the resulting term with remaining cuts as Cut nodes."""
    lt, rt = left.term, right.term
    if isinstance(lt, Link) and x in (lt.x, lt.y):
        z = lt.y if lt.x == x else lt.x
        return "B1", rename_free(rt, {y: z})
    if isinstance(rt, Link) and y in (rt.x, rt.y):
        z = rt.y if rt.x == y else rt.x
        return "B1", rename_free(lt, {x: z})

    lh, rh = _head_endpoint(lt), _head_endpoint(rt)
    if lh == x and rh == y:
        match lt, rt:
            case (Close(_), Wait(_, q)):
                return "B2", q
            case (Wait(_, q), Close(_)):
                return "B2", q
            case (Send(_, a, pl, cont), Recv(_, cv, r)):
                _, (payload_j, cont_j) = _premises(left)
                _, (r_j,) = _premises(right)
                eng = _Engine(default_fuel(left, right) * 4)
                supply = S.FreshNames(frozenset(
                    _ctx_names(left.ctx) | _ctx_names(right.ctx)
                    | _proc_names(lt) | _proc_names(rt)))
                boxed = _cut_in_box(payload_j, a, r_j, cv, eng, supply)
                return "K", Cut(x, y, cont_j.term, boxed.term)
            case (Recv(_, _, _), Send(_, _, _, _)):
                tag, tm = beta_step(right, y, left, x)
                return tag, tm
            case (Case(_, l, _), Inl(_, r)):
                return "K-add", Cut(x, y, l, r)
            case (Case(_, _, rr), Inr(_, r)):
                return "K-add", Cut(x, y, rr, r)
            case (Inl(_, _) | Inr(_, _), Case(_, _, _)):
                tag, tm = beta_step(right, y, left, x)
                return tag, tm
            case (Server(_, sa, b), Client(_, cb, q)):
                return "K-exp", Cut(sa, cb, b, q)
            case (Client(_, _, _), Server(_, _, _)):
                tag, tm = beta_step(right, y, left, x)
                return tag, tm
        raise Stuck("principal heads do not interact")

    # commute the right side first, as in the reduction figure
    for (side, sx, other, ox, flip) in ((right, y, left, x, True), (left, x, right, y, False)):
        st = side.term
        if isinstance(st, Link) or _head_endpoint(st) == sx:
            continue
        inner_args = lambda cont: (Cut(x, y, other.term, cont) if flip
                                   else Cut(x, y, cont, other.term))
        match st:
            case Wait(z, q):
                return "C1", Wait(z, inner_args(q))
            case Recv(z, v, q):
                return "C2", Recv(z, v, inner_args(q))
            case Send(z, v, pl, q):
                return "C3", Send(z, v, pl, inner_args(q))
            case Inl(z, q):
                return "C-inl", Inl(z, inner_args(q))
            case Inr(z, q):
                return "C-inr", Inr(z, inner_args(q))
            case Case(z, l, r):
                return "C-case", Case(z, inner_args(l), inner_args(r))
            case Client(z, v, q):
                return "C-cli", Client(z, v, inner_args(q))
            case Server(z, v, q):
                return "C-srv", Server(z, v, inner_args(q))
    raise Stuck("no beta step applies")
