"""Multiparty composition driven by a forwarder.

A configuration composes CP processes through a forwarder that arbitrates all
their bound endpoints, with in-transit message processes parked in a pending
list keyed by the payload endpoint the forwarder queued.  The forwarder's
outermost action selects the next case; a part whose head acts on one of its
own free endpoints first emits that action outside the whole composition.
Reduction terminates in a plain CP process covering the union of the external
environments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import syntax as S
from .syntax import (
    Case, Client, Close, Endpoint, Inl, Inr, Link, Process, Recv, Send, Server, Type,
    Wait, WhyNot, dual, erase, free_endpoints, rename_free, size,
)
from .contexts import Context, Entry, MsgBox, Star, context_size
from .checker import (
    CheckError, Env, check_cll, check_forwarder, cp_step, forwarder_step,
)
from .cutelim import Judged, proc_size


class McutError(Exception):
    pass


class Stuck(McutError):
    pass


class FuelExhausted(McutError):
    def __init__(self, msg, trace):
        super().__init__(f"{msg}; trace: {trace}")
        self.trace = trace


@dataclass(frozen=True)
class PartEntry:
    term: Process
    env: Env  # external endpoints
    endpoint: Endpoint  # the bound endpoint this part owns
    typ: Type  # its (plain) type


@dataclass(frozen=True)
class PendingEntry:
    name: Endpoint
    term: Process
    env: Env
    typ: Type


@dataclass(frozen=True)
class MCutConfig:
    bound: tuple[Endpoint, ...]
    fwd: Judged
    pending: tuple[PendingEntry, ...]
    parts: tuple[PartEntry, ...]

    def part_at(self, x: Endpoint) -> PartEntry:
        for p in self.parts:
            if p.endpoint == x:
                return p
        raise Stuck(f"no part owns endpoint {x}")

    def replace_part(self, x: Endpoint, new: PartEntry | None) -> tuple[PartEntry, ...]:
        out = []
        for p in self.parts:
            if p.endpoint == x:
                if new is not None:
                    out.append(new)
            else:
                out.append(p)
        return tuple(out)

    def term(self) -> Process:
        return S.MCut(
            self.bound,
            self.fwd.term,
            tuple((p.name, p.term) for p in self.pending),
            tuple(p.term for p in self.parts),
        )

    def conclusion_env(self) -> Env:
        out: list[tuple[Endpoint, Type]] = []
        seen = set()
        for p in self.pending:
            for n, t in p.env:
                if n not in seen:
                    seen.add(n)
                    out.append((n, erase(t)))
        for p in self.parts:
            for n, t in p.env:
                if n not in seen:
                    seen.add(n)
                    out.append((n, erase(t)))
        return tuple(out)


def check_mcut_config(c: MCutConfig) -> tuple[bool, str]:
    """All configuration invariants; reports the first violated one."""
    if len(set(c.bound)) != len(c.bound):
        return False, "bound endpoints not pairwise distinct"
    if not S.is_cut_free(c.fwd.term):
        return False, "forwarder contains a cut"
    if set(c.fwd.ctx.endpoints()) != set(c.bound):
        return False, "forwarder context must cover exactly the bound endpoints"
    try:
        check_forwarder(c.fwd.term, c.fwd.ctx)
    except CheckError as e:
        return False, f"forwarder does not check: {e}"
    owned = [p.endpoint for p in c.parts]
    if len(set(owned)) != len(owned) or not set(owned) <= set(c.bound):
        return False, "parts must own distinct bound endpoints"
    for p in c.parts:
        e = c.fwd.ctx.get(p.endpoint)
        if e.typing is None or erase(e.typing) != dual(erase(p.typ)):
            return False, f"{p.endpoint}: forwarder and part types are not dual"
        try:
            check_cll(p.term, p.env + ((p.endpoint, p.typ),))
        except CheckError as e2:
            return False, f"part at {p.endpoint} does not check: {e2}"
    names = [p.name for p in c.pending]
    if len(set(names)) != len(names):
        return False, "pending names not distinct"
    for p in c.pending:
        try:
            check_cll(p.term, p.env + ((p.name, p.typ),))
        except CheckError as e2:
            return False, f"pending {p.name} does not check: {e2}"
    boxed: list[tuple[Endpoint, Type]] = []
    for e in c.fwd.ctx.entries:
        for it in e.queue:
            if isinstance(it, MsgBox):
                boxed.extend((pn, erase(pt)) for pn, pt in it.payloads)
    want = sorted((p.name, dual(erase(p.typ))) for p in c.pending)
    if sorted(boxed) != want:
        return False, "queued messages and pending processes disagree"
    for x in c.bound:
        e = c.fwd.ctx.get(x)
        if e.typing is not None and x not in set(owned):
            return False, f"active forwarder endpoint {x} has no part"
    return True, "ok"


def mcut_measure(c: MCutConfig) -> tuple[int, int]:
    cut_sizes = sum(size(erase(p.typ)) for p in c.parts) + sum(
        size(erase(p.typ)) for p in c.pending
    )
    proc_sizes = sum(proc_size(p.term) for p in c.parts) + proc_size(c.fwd.term)
    return cut_sizes, proc_sizes


@dataclass
class _Runner:
    fuel: int
    validate: bool = True
    trace: list[str] = field(default_factory=list)
    supply: S.FreshNames = field(default_factory=lambda: S.FreshNames())
    steps: int = 0

    def tick(self, tag: str):
        self.trace.append(tag)
        self.steps += 1
        if self.steps > self.fuel:
            raise FuelExhausted("fuel exhausted", tuple(self.trace))


def default_mcut_fuel(c: MCutConfig) -> int:
    n = context_size(c.fwd.ctx) + proc_size(c.fwd.term)
    for p in c.parts:
        n += proc_size(p.term) + size(erase(p.typ))
    for p in c.pending:
        n += proc_size(p.term) + size(erase(p.typ))
    return 8 * (n + 4)


def run_mcut(c: MCutConfig, fuel: int | None = None, validate: bool = True,
             on_step=None) -> tuple[Process, tuple[str, ...]]:
    """Reduce a configuration to its residual composed process.

    Every step re-establishes the configuration invariants (checked when
    ``validate``); the result checks in CP at the union of the stored
    environments.  ``on_step`` observes (tag, config) after each rewrite.
    """
    if fuel is None:
        fuel = default_mcut_fuel(c)
    names = set(c.bound)
    for p in c.parts:
        names |= free_endpoints(p.term) | {p.endpoint} | {n for n, _ in p.env}
    for p in c.pending:
        names |= free_endpoints(p.term) | {p.name} | {n for n, _ in p.env}
    names |= set(_ctx_names(c.fwd.ctx))
    r = _Runner(fuel, validate, supply=S.FreshNames(frozenset(names)))
    # binders of independently authored parts may collide once composed
    c = replace(
        c,
        parts=tuple(replace(p, term=_freshen_binders(p.term, r.supply)) for p in c.parts),
        pending=tuple(replace(p, term=_freshen_binders(p.term, r.supply)) for p in c.pending),
    )
    ok, why = check_mcut_config(c)
    if not ok:
        raise McutError(f"invalid configuration: {why}")
    term = _run(c, r)
    try:
        check_cll(term, c.conclusion_env())
    except CheckError as e:
        raise McutError(f"final process does not check: {e}")
    return term, tuple(r.trace)


def _ctx_names(g: Context) -> set[str]:
    out = set(g.endpoints())
    for e in g.entries:
        for it in e.queue:
            if isinstance(it, MsgBox):
                out.update(pn for pn, _ in it.payloads)
    return out


def _run(c: MCutConfig, r: _Runner) -> Process:
    wrappers: list = []
    while True:
        got = _step(c, r)
        match got:
            case ("final", term, tag):
                r.tick(tag)
                out = term
                for w in reversed(wrappers):
                    out = w(out)
                return out
            case ("continue", c2, tag):
                r.tick(tag)
                if r.validate:
                    ok, why = check_mcut_config(c2)
                    if not ok:
                        raise McutError(f"invariant broken after {tag}: {why}")
                c = c2
            case ("emit", wrapper, c2, tag):
                r.tick(tag)
                wrappers.append(wrapper)
                if r.validate:
                    ok, why = check_mcut_config(c2)
                    if not ok:
                        raise McutError(f"invariant broken after {tag}: {why}")
                c = c2
            case ("fork", mk, cl, cr, tag):
                r.tick(tag)
                lterm = _run(cl, r)
                rterm = _run(cr, r)
                out = mk(lterm, rterm)
                for w in reversed(wrappers):
                    out = w(out)
                return out
            case _:
                raise AssertionError(got)


def mcutq_step(c: MCutConfig, r: _Runner | None = None):
    """One reduction of a configuration.

    Returns one of ``("final", term, tag)``, ``("continue", config, tag)``,
    ``("emit", wrapper, config, tag)`` for an action that leaves the
    composition, or ``("fork", combine, left, right, tag)`` when an external
    branching action splits the run.
    """
    return _step(c, r or _Runner(default_mcut_fuel(c)))


def _step(c: MCutConfig, r: _Runner):
    ft = c.fwd.term
    match ft:
        case Link(a, b):
            pa, pb = c.part_at(a), c.part_at(b)
            got = _commute_part(c, pa, r)
            if got is not None:
                return got
            got = _commute_part(c, pb, r)
            if got is not None:
                return got
            if not isinstance(pa.term, Link) or not isinstance(pb.term, Link):
                raise Stuck("axiom forwarder against non-link parts")
            za = pa.term.y if pa.term.x == a else pa.term.x
            zb = pb.term.y if pb.term.x == b else pb.term.x
            ta = dict(pa.env)[za]
            link = Link(za, zb) if isinstance(erase(ta), S.DualAtom) else Link(zb, za)
            if len(c.parts) != 2 or c.pending:
                raise Stuck("axiom case with leftover parts or pending messages")
            return ("final", link, "Ax")

        case Close(x):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Wait) or part.term.x != x:
                raise Stuck(f"forwarder closes {x} but the part does not wait")
            if len(c.parts) != 1 or c.pending:
                raise Stuck("closing step with leftover parts or pending messages")
            return ("final", part.term.cont, "Bot")

        case Wait(x, _):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Close) or part.term.x != x:
                raise Stuck(f"forwarder waits on {x} but the part does not close")
            if part.env and not all(isinstance(erase(t), WhyNot) for _, t in part.env):
                raise Stuck("closing part carries non-? externals")
            _, (fj,) = _fwd_premises(c.fwd)
            return ("continue", replace(c, fwd=fj, parts=c.replace_part(x, None)), "One")

        case Recv(x, yb, _):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Send) or part.term.x != x:
                raise Stuck(f"forwarder receives on {x} but the part does not send")
            g = r.supply.fresh(yb)
            fwd2 = _rename_bound_recv(c.fwd, g)
            _, (fj,) = _fwd_premises(fwd2)
            tag, prem = cp_step(part.term, part.env + ((x, part.typ),))
            (pl_term, pl_env), (ct_term, ct_env) = prem
            pl_env2 = tuple((n, t) for n, t in pl_env if n != part.term.fresh)
            a_typ = dict(pl_env)[part.term.fresh]
            pl = rename_free(pl_term, {part.term.fresh: g})
            pend = c.pending + (PendingEntry(g, pl, pl_env2, a_typ),)
            ct_env2 = tuple((n, t) for n, t in ct_env if n != x)
            newpart = PartEntry(ct_term, ct_env2, x, dict(ct_env)[x])
            return ("continue", replace(c, fwd=fj, pending=pend,
                                        parts=c.replace_part(x, newpart)), "Tensor")

        case Send(x, yb, _, _):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Recv) or part.term.x != x:
                raise Stuck(f"forwarder sends on {x} but the part does not receive")
            g = r.supply.fresh(part.term.fresh)
            _, (sj, qj) = _fwd_premises(c.fwd)
            # rename the transported forwarder's fresh endpoint to g
            sj = Judged(rename_free(sj.term, {yb: g}),
                        _rename_entry(sj.ctx, yb, g))
            cohort = [e.endpoint for e in sj.ctx.entries if e.endpoint != g]
            inner_parts = []
            consumed = []
            for z in cohort:
                pe = next((p for p in c.pending if p.name == z), None)
                if pe is None:
                    raise Stuck(f"gathered message {z} has no pending process")
                consumed.append(pe)
                inner_parts.append(PartEntry(pe.term, pe.env, z, pe.typ))
            tag, prem = cp_step(part.term, part.env + ((x, part.typ),))
            ((ct_term, ct_env),) = prem
            ct = rename_free(ct_term, {part.term.fresh: g})
            ct_env = tuple((g if n == part.term.fresh else n, t) for n, t in ct_env)
            a_typ = dict(ct_env)[g]
            part0 = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != g), g, a_typ)
            inner = MCutConfig((g,) + tuple(cohort), sj, (), (part0,) + tuple(inner_parts))
            s_in = _run(inner, r)
            outer_env = tuple((n, t) for n, t in part0.env if n != x)
            for pe in consumed:
                outer_env += pe.env
            newpart = PartEntry(s_in, outer_env, x, dict(part0.env)[x])
            pend = tuple(p for p in c.pending if p not in consumed)
            return ("continue", replace(c, fwd=qj, pending=pend,
                                        parts=c.replace_part(x, newpart)), "Par")

        case Case(x, _, _):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, (Inl, Inr)) or part.term.x != x:
                raise Stuck(f"forwarder branches on {x} but the part does not select")
            _, (lj, rj) = _fwd_premises(c.fwd)
            fj = lj if isinstance(part.term, Inl) else rj
            _, ((ct, ct_env),) = cp_step(part.term, part.env + ((x, part.typ),))
            newpart = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x,
                                dict(ct_env)[x])
            return ("continue", replace(c, fwd=fj, parts=c.replace_part(x, newpart)), "Plus")

        case Inl(x, _) | Inr(x, _):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Case) or part.term.x != x:
                raise Stuck(f"forwarder selects on {x} but the part does not branch")
            _, (fj,) = _fwd_premises(c.fwd)
            _, ((lt, le), (rt, re_)) = cp_step(part.term, part.env + ((x, part.typ),))
            ct, ct_env = (lt, le) if isinstance(ft, Inl) else (rt, re_)
            newpart = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x,
                                dict(ct_env)[x])
            return ("continue", replace(c, fwd=fj, parts=c.replace_part(x, newpart)), "With")

        case Client(x, zb, _):
            part = c.part_at(x)
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Server) or part.term.x != x:
                raise Stuck(f"forwarder queries {x} but the part is no server")
            g = r.supply.fresh(zb)
            fwd2 = _rename_bound_client(c.fwd, g)
            _, (fj,) = _fwd_premises(fwd2)
            _, ((bt, bt_env),) = cp_step(part.term, part.env + ((x, part.typ),))
            bt = rename_free(bt, {part.term.fresh: g})
            bt_env = tuple((g if n == part.term.fresh else n, t) for n, t in bt_env)
            newpart = PartEntry(bt, tuple((n, t) for n, t in bt_env if n != g), g,
                                dict(bt_env)[g])
            bound = tuple(g if b == x else b for b in c.bound)
            return ("continue", MCutConfig(bound, fj, c.pending,
                                           c.replace_part(x, newpart)), "Bang")

        case Server(x, zb, _):
            part = c.part_at(x)
            if x not in free_endpoints(part.term):
                # the part discards the server: drop the whole composition
                others = [p for p in c.parts if p.endpoint != x]
                if c.pending:
                    raise Stuck("weakening with pending messages")
                for o in others:
                    if not isinstance(erase(o.typ), S.OfCourse):
                        raise Stuck("weakening step against a non-server part")
                return ("final", part.term, "Weaken")
            got = _commute_part(c, part, r)
            if got is not None:
                return got
            if not isinstance(part.term, Client) or part.term.x != x:
                raise Stuck(f"forwarder serves {x} but the part is no client")
            if x in free_endpoints(part.term.cont):
                return _contract_step(c, part, r)
            g = r.supply.fresh(zb)
            fwd2 = _rename_bound_server(c.fwd, g)
            _, (fj,) = _fwd_premises(fwd2)
            _, ((ct, ct_env),) = cp_step(part.term, part.env + ((x, part.typ),))
            ct = rename_free(ct, {part.term.fresh: g})
            ct_env = tuple((g if n == part.term.fresh else n, t) for n, t in ct_env)
            newpart = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != g), g,
                                dict(ct_env)[g])
            bound = tuple(g if b == x else b for b in c.bound)
            return ("continue", MCutConfig(bound, fj, c.pending,
                                           c.replace_part(x, newpart)), "Quest")

    raise Stuck(f"forwarder head {type(ft).__name__} not handled")


def _fwd_premises(j: Judged) -> tuple[str, tuple[Judged, ...]]:
    tag, prem = forwarder_step(j.term, j.ctx)
    return tag, tuple(Judged(q, h) for q, h in prem)


def _rename_entry(g: Context, old: Endpoint, new: Endpoint) -> Context:
    from .contexts import rename_context_targets

    ents = tuple(
        Entry(new if e.endpoint == old else e.endpoint, e.queue, e.typing) for e in g.entries
    )
    return rename_context_targets(Context(ents), {old: new})


def _follow_ctx(g: Context, old: Endpoint, new: Endpoint) -> Context:
    # annotations may forward-reference a term binder; renaming the binder
    # renames those targets, unless the name is taken by an actual entry
    from .contexts import rename_context_targets

    if g.has(old):
        return g
    return rename_context_targets(g, {old: new})


def _rename_bound_recv(fwd: Judged, g: Endpoint) -> Judged:
    assert isinstance(fwd.term, Recv)
    t = fwd.term
    return Judged(Recv(t.x, g, rename_free(t.cont, {t.fresh: g})),
                  _follow_ctx(fwd.ctx, t.fresh, g))


def _rename_bound_client(fwd: Judged, g: Endpoint) -> Judged:
    assert isinstance(fwd.term, Client)
    t = fwd.term
    return Judged(Client(t.x, g, rename_free(t.cont, {t.fresh: g})),
                  _follow_ctx(fwd.ctx, t.fresh, g))


def _rename_bound_server(fwd: Judged, g: Endpoint) -> Judged:
    assert isinstance(fwd.term, Server)
    t = fwd.term
    return Judged(Server(t.x, g, rename_free(t.body, {t.fresh: g})),
                  _follow_ctx(fwd.ctx, t.fresh, g))


def _commute_part(c: MCutConfig, part: PartEntry, r: _Runner):
    """Emit the part's head action when it is on one of its own external
    endpoints; None when the head is on the bound endpoint."""
    term = part.term
    x = part.endpoint
    head = _head_endpoint(term)
    if head is None or head == x:
        return None
    ext = dict(part.env)
    if head not in ext:
        raise Stuck(f"part at {x} acts on unknown endpoint {head}")
    tag, prem = cp_step(term, part.env + ((x, part.typ),))
    match term:
        case Wait(z, _):
            ((ct, ct_env),) = prem
            np = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x, part.typ)
            return ("emit", lambda s, z=z: Wait(z, s),
                    replace(c, parts=c.replace_part(x, np)), "comm")
        case Recv(z, v, _):
            ((ct, ct_env),) = prem
            np = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x, part.typ)
            return ("emit", lambda s, z=z, v=v: Recv(z, v, s),
                    replace(c, parts=c.replace_part(x, np)), "comm")
        case Send(z, v, pl, cont):
            (pl_t, pl_env), (ct, ct_env) = prem
            if x in free_endpoints(pl):
                # the bound endpoint rides in the message: the continuation
                # leaves the composition, the payload becomes the part
                np = PartEntry(pl_t, tuple((n, t) for n, t in pl_env if n != x), x, part.typ)
                return ("emit", lambda s, z=z, v=v, ct=ct: Send(z, v, s, ct),
                        replace(c, parts=c.replace_part(x, np)), "comm")
            np = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x, part.typ)
            return ("emit", lambda s, z=z, v=v, pl=pl: Send(z, v, pl, s),
                    replace(c, parts=c.replace_part(x, np)), "comm")
        case Inl(z, _) | Inr(z, _):
            ((ct, ct_env),) = prem
            np = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x, part.typ)
            mk = Inl if isinstance(term, Inl) else Inr
            return ("emit", lambda s, z=z, mk=mk: mk(z, s),
                    replace(c, parts=c.replace_part(x, np)), "comm")
        case Client(z, v, _):
            ((ct, ct_env),) = prem
            np = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x, part.typ)
            return ("emit", lambda s, z=z, v=v: Client(z, v, s),
                    replace(c, parts=c.replace_part(x, np)), "comm")
        case Server(z, v, _):
            ((ct, ct_env),) = prem
            np = PartEntry(ct, tuple((n, t) for n, t in ct_env if n != x), x, part.typ)
            return ("emit", lambda s, z=z, v=v: Server(z, v, s),
                    replace(c, parts=c.replace_part(x, np)), "comm")
        case Case(z, _, _):
            (lt, le), (rt, re_) = prem
            npl = PartEntry(lt, tuple((n, t) for n, t in le if n != x), x, part.typ)
            npr = PartEntry(rt, tuple((n, t) for n, t in re_ if n != x), x, part.typ)
            cl = replace(c, parts=c.replace_part(x, npl))
            cr = replace(c, parts=c.replace_part(x, npr))
            return ("fork", lambda a, b, z=z: Case(z, a, b), cl, cr, "comm")
    raise Stuck(f"cannot commute head {type(term).__name__}")


def _head_endpoint(p: Process) -> Endpoint | None:
    match p:
        case Close(a) | Wait(a, _) | Send(a, _, _, _) | Recv(a, _, _) | Inl(a, _) \
             | Inr(a, _) | Case(a, _, _) | Server(a, _, _) | Client(a, _, _):
            return a
    return None


def _contract_step(c: MCutConfig, part: PartEntry, r: _Runner):
    """Server duplication: the part re-uses the bound server endpoint, so the
    whole server composition is copied; the copy serves the later uses."""
    x = part.endpoint
    assert isinstance(part.term, Client)
    x2 = r.supply.fresh(x)
    inner_term = Client(x, part.term.fresh, rename_free(part.term.cont, {x: x2}))
    inner_part = PartEntry(inner_term, part.env + ((x2, erase(part.typ)),), x, part.typ)
    inner = replace(c, parts=c.replace_part(x, inner_part))

    # fresh copy of the server composition for the leftover uses
    ren: dict[str, str] = {x: x2}
    for b in c.bound:
        if b != x:
            ren[b] = r.supply.fresh(b)
    fwd2 = Judged(rename_free(c.fwd.term, ren), _rename_ctx_all(c.fwd.ctx, ren))
    copy_parts = []
    for p in c.parts:
        if p.endpoint == x:
            continue
        copy_parts.append(PartEntry(_freshen_binders(p.term, r.supply), p.env,
                                    ren[p.endpoint], p.typ))
    s_in = _run(inner, r)
    outer_part = PartEntry(s_in, tuple((n, t) for n, t in inner.conclusion_env() if n != x2),
                           x2, part.typ)
    outer = MCutConfig(tuple(ren[b] for b in c.bound), fwd2, (),
                       (outer_part,) + tuple(copy_parts))
    return ("continue", outer, "Contract")


def _rename_ctx_all(g: Context, m: dict[str, str]) -> Context:
    from .contexts import rename_context_targets

    ents = tuple(Entry(m.get(e.endpoint, e.endpoint), e.queue, e.typing) for e in g.entries)
    return rename_context_targets(Context(ents), m)


def _freshen_binders(p: Process, supply: S.FreshNames) -> Process:
    match p:
        case Link() | Close():
            return p
        case Wait(a, c):
            return Wait(a, _freshen_binders(c, supply))
        case Inl(a, c):
            return Inl(a, _freshen_binders(c, supply))
        case Inr(a, c):
            return Inr(a, _freshen_binders(c, supply))
        case Case(a, l, rr):
            return Case(a, _freshen_binders(l, supply), _freshen_binders(rr, supply))
        case Recv(a, f, cnt) | Server(a, f, cnt) | Client(a, f, cnt):
            f2 = supply.fresh(f)
            return type(p)(a, f2, _freshen_binders(rename_free(cnt, {f: f2}), supply))
        case Send(a, f, pl, cnt):
            f2 = supply.fresh(f)
            return Send(a, f2, _freshen_binders(rename_free(pl, {f: f2}), supply),
                        _freshen_binders(cnt, supply))
        case S.Cut(a, b, l, rr):
            a2, b2 = supply.fresh(a), supply.fresh(b)
            return S.Cut(a2, b2, _freshen_binders(rename_free(l, {a: a2}), supply),
                         _freshen_binders(rename_free(rr, {b: b2}), supply))
    raise TypeError(p)
