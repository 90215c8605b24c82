"""Judgement checking and synthesis.

Two judgements live here.  ``check_forwarder`` validates the queue-annotated
forwarder system, where every receive enqueues a boxed item aimed at the
endpoint that must relay it and every send pops matching boxes.  ``check_cll``
validates plain CP typing with explicit weakening and contraction steps.
``synth_forwarder`` decides derivability by proof search (the rules are
invertible, so search never backtracks over rule order on fully annotated
contexts), and ``synth_with_annotations`` extends the search with lazy
resolution of missing annotations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from . import syntax as S
from .syntax import (
    Atom, Bot, Case, Client, Close, Cut, DualAtom, Inl, Inr, Link, MCut, OfCourse,
    One, Par, Plus, Process, Recv, Send, Server, Tensor, Type, Wait, WhyNot, With,
    dual, erase, free_endpoints,
)
from .contexts import (
    Context, Entry, LeftTok, MsgBox, Query, Queue, RightTok, Star,
    context_fully_annotated, msgbox, rename_context_targets,
)

Env = tuple[tuple[str, Type], ...]


class CheckError(Exception):
    pass


class NotAnnotated(CheckError):
    pass


class RuleMismatch(CheckError):
    pass


class QueueHeadMismatch(CheckError):
    pass


class LeftoverQueue(CheckError):
    pass


class NonEmptyTargetViolation(CheckError):
    pass


class UnusedEndpoint(CheckError):
    pass


class CutFormulaError(CheckError):
    pass


@dataclass(frozen=True)
class Derivation:
    rule: str
    process: Process
    context: Context | Env
    premises: tuple[Derivation, ...]

    def rules_preorder(self) -> tuple[str, ...]:
        out = [self.rule]
        for p in self.premises:
            out.extend(p.rules_preorder())
        return tuple(out)


# ---------------------------------------------------------------------------
# Forwarder system


def _names_in_context(g: Context) -> set[str]:
    seen = set(g.endpoints())
    for e in g.entries:
        for it in e.queue:
            if isinstance(it, MsgBox):
                seen.update(p for p, _ in it.payloads)
    return seen


def forwarder_step(p: Process, g: Context) -> tuple[str, tuple[tuple[Process, Context], ...]]:
    """One rule of the forwarder system, term-directed.

    Returns the rule tag and the premise judgements, or raises a CheckError
    naming the first mismatch.
    """
    match p:
        case Link(x, y):
            if set(g.endpoints()) != {x, y}:
                raise RuleMismatch(f"Ax needs exactly the endpoints {x},{y}")
            ex, ey = g.get(x), g.get(y)
            if ex.queue or ey.queue:
                raise LeftoverQueue("Ax requires empty queues")
            match ex.typing, ey.typing:
                case (DualAtom(a), Atom(b)) if a == b:
                    return "Ax", ()
            raise RuleMismatch(f"Ax needs {x}:~a and {y}:a, got {ex.typing} and {ey.typing}")

        case Close(x):
            e = _active(g, x)
            match e.typing:
                case One(ts):
                    if not ts:
                        raise NonEmptyTargetViolation("rule 1 needs a nonempty target set")
                    if e.queue:
                        raise LeftoverQueue(f"1 requires an empty queue at {x}")
                    others = [o for o in g.entries if o.endpoint != x]
                    if set(ts) != {o.endpoint for o in others}:
                        raise RuleMismatch(
                            f"1 at {x} must gather every other endpoint, got {ts}"
                        )
                    for o in others:
                        if o.typing is not None:
                            raise RuleMismatch(f"1 needs {o.endpoint} terminated")
                        if o.queue != (Star(x),):
                            raise LeftoverQueue(
                                f"{o.endpoint} must hold exactly one star for {x}"
                            )
                    return "One", ()
            raise RuleMismatch(f"close {x} needs {x}:1, got {e.typing}")

        case Wait(x, cont):
            e = _active(g, x)
            match e.typing:
                case Bot(u) if u is not None:
                    g2 = g.replace(x, Entry(x, e.queue + (Star(u),), None))
                    return "Bot", ((cont, g2),)
            raise RuleMismatch(f"wait {x} needs {x}:bot with a target, got {e.typing}")

        case Recv(x, f, cont):
            e = _active(g, x)
            match e.typing:
                case Par(a, b, u) if u is not None:
                    if f in _names_in_context(g):
                        raise RuleMismatch(f"received name {f} is not fresh")
                    g2 = g.replace(x, Entry(x, e.queue + (msgbox(u, f, a),), b))
                    return "Par", ((cont, g2),)
            raise RuleMismatch(f"recv on {x} needs {x}:A|{{u}}B, got {e.typing}")

        case Send(x, f, payload, cont):
            e = _active(g, x)
            match e.typing:
                case Tensor(a, b, ts):
                    if not ts:
                        raise NonEmptyTargetViolation("rule * needs a nonempty target set")
                    if f in _names_in_context(g):
                        raise RuleMismatch(f"sent name {f} is not fresh")
                    gathered: list[tuple[str, Type]] = []
                    g2 = g
                    for u in ts:
                        if u == x or not g.has(u):
                            raise RuleMismatch(f"* target {u} not in context")
                        eu = g2.get(u)
                        if not eu.queue:
                            raise QueueHeadMismatch(f"empty queue at {u}, * at {x} expects a box")
                        head = eu.queue[0]
                        if not isinstance(head, MsgBox) or head.target != x:
                            raise QueueHeadMismatch(
                                f"head of {u}'s queue must be a message for {x}, got {head}"
                            )
                        gathered.extend(head.payloads)
                        g2 = g2.replace(u, Entry(u, eu.queue[1:], eu.typing))
                    names = [n for n, _ in gathered] + [f]
                    if len(set(names)) != len(names):
                        raise RuleMismatch(f"gathered payload names clash: {names}")
                    left = Context(tuple(Entry(n, (), t) for n, t in gathered) + (Entry(f, (), a),))
                    ex2 = g2.get(x)
                    right = g2.replace(x, Entry(x, ex2.queue, b))
                    return "Tensor", ((payload, left), (cont, right))
            raise RuleMismatch(f"send on {x} needs {x}:A*{{u}}B, got {e.typing}")

        case Inl(x, cont) | Inr(x, cont):
            e = _active(g, x)
            want_left = isinstance(p, Inl)
            match e.typing:
                case Plus(a, b, z) if z is not None:
                    if not g.has(z):
                        raise RuleMismatch(f"+ target {z} not in context")
                    ez = g.get(z)
                    tok = LeftTok(x) if want_left else RightTok(x)
                    if not ez.queue or ez.queue[0] != tok:
                        raise QueueHeadMismatch(
                            f"head of {z}'s queue must be {tok}, got {ez.queue[:1]}"
                        )
                    g2 = g.replace(z, Entry(z, ez.queue[1:], ez.typing))
                    g2 = g2.replace(x, Entry(x, e.queue, a if want_left else b))
                    return ("PlusL" if want_left else "PlusR"), ((cont, g2),)
            raise RuleMismatch(f"select on {x} needs {x}:A+{{z}}B, got {e.typing}")

        case Case(x, l, r):
            e = _active(g, x)
            match e.typing:
                case With(a, b, ts):
                    if not ts:
                        raise NonEmptyTargetViolation("rule & needs a nonempty target set")
                    for u in ts:
                        if u == x or not g.has(u):
                            raise RuleMismatch(f"& target {u} not in context")
                    gl = g.replace(x, Entry(x, e.queue + tuple(LeftTok(u) for u in ts), a))
                    gr = g.replace(x, Entry(x, e.queue + tuple(RightTok(u) for u in ts), b))
                    return "With", ((l, gl), (r, gr))
            raise RuleMismatch(f"case on {x} needs {x}:A&{{u}}B, got {e.typing}")

        case Server(x, f, body):
            e = _active(g, x)
            match e.typing:
                case OfCourse(a, ts):
                    if not ts:
                        raise NonEmptyTargetViolation("rule ! needs a nonempty target set")
                    if e.queue:
                        raise LeftoverQueue(f"! requires an empty queue at {x}")
                    others = [o for o in g.entries if o.endpoint != x]
                    if set(ts) != {o.endpoint for o in others}:
                        raise RuleMismatch(f"! at {x} must broadcast to every other endpoint")
                    for o in others:
                        if o.typing is None or not isinstance(o.typing, WhyNot):
                            raise RuleMismatch(f"! needs {o.endpoint} to be ?-typed")
                        if o.queue:
                            raise LeftoverQueue(f"! needs an empty queue at {o.endpoint}")
                    if f in _names_in_context(g):
                        raise RuleMismatch(f"server name {f} is not fresh")
                    g2 = g.replace(x, Entry(f, tuple(Query(u) for u in ts), a))
                    g2 = rename_context_targets(g2, {x: f})
                    return "Bang", ((body, g2),)
            raise RuleMismatch(f"srv on {x} needs {x}:!{{u}}A, got {e.typing}")

        case Client(x, f, cont):
            e = _active(g, x)
            match e.typing:
                case WhyNot(a, z) if z is not None:
                    if not g.has(z):
                        raise RuleMismatch(f"? target {z} not in context")
                    ez = g.get(z)
                    if not ez.queue or ez.queue[0] != Query(x):
                        raise QueueHeadMismatch(
                            f"head of {z}'s queue must be a query for {x}, got {ez.queue[:1]}"
                        )
                    if f in _names_in_context(g):
                        raise RuleMismatch(f"client name {f} is not fresh")
                    g2 = g.replace(z, Entry(z, ez.queue[1:], ez.typing))
                    g2 = g2.replace(x, Entry(f, e.queue, a))
                    g2 = rename_context_targets(g2, {x: f})
                    return "Quest", ((cont, g2),)
            raise RuleMismatch(f"client on {x} needs {x}:?{{z}}A, got {e.typing}")

        case Cut() | MCut():
            raise RuleMismatch("forwarders contain no cuts")

    raise RuleMismatch(f"no forwarder rule for {type(p).__name__}")


def _active(g: Context, x: str) -> Entry:
    if not g.has(x):
        raise RuleMismatch(f"endpoint {x} not in context")
    e = g.get(x)
    if e.typing is None:
        raise RuleMismatch(f"endpoint {x} is terminated")
    return e


def check_forwarder(p: Process, g: Context) -> Derivation:
    """Build and return the forwarder derivation of ``p`` at ``g``."""
    if not context_fully_annotated(g):
        raise NotAnnotated("context has unannotated connectives")
    return _check_fwd(p, g)


def _check_fwd(p: Process, g: Context) -> Derivation:
    rule, premises = forwarder_step(p, g)
    return Derivation(rule, p, g, tuple(_check_fwd(q, h) for q, h in premises))


def validate_derivation(d: Derivation) -> bool:
    """Re-check every node of a forwarder derivation against its rule."""
    rule, premises = forwarder_step(d.process, d.context)  # may raise
    if rule != d.rule or len(premises) != len(d.premises):
        return False
    for (q, h), sub in zip(premises, d.premises):
        if q != sub.process or h != sub.context or not validate_derivation(sub):
            return False
    return True


# ---------------------------------------------------------------------------
# CP / CLL system


def _env_get(env: Env, x: str) -> Type:
    for n, t in env:
        if n == x:
            return t
    raise RuleMismatch(f"endpoint {x} not in environment")


def _env_del(env: Env, x: str) -> Env:
    out, dropped = [], False
    for n, t in env:
        if n == x and not dropped:
            dropped = True
            continue
        out.append((n, t))
    return tuple(out)


def check_cll(p: Process, env: Env) -> Derivation:
    """Check a CP process against a plain environment.

    Weakening and contraction of ?-typed endpoints are inserted where the
    term forces them and recorded as explicit derivation steps.  Cut formulas
    are reconstructed from the two subterms and must resolve completely.
    """
    env = tuple((n, erase(t)) for n, t in env)
    return _check_cll(p, env)


def _split_env(p_left: Process, drop_l: set[str], p_right: Process, drop_r: set[str],
               env: Env, whole: Process) -> tuple[Env, Env, list[str]]:
    fl = free_endpoints(p_left) - drop_l
    fr = free_endpoints(p_right) - drop_r
    left, right, contracted = [], [], []
    for n, t in env:
        inl, inr = n in fl, n in fr
        if inl and inr:
            if not isinstance(t, WhyNot):
                raise RuleMismatch(f"{n} used by both premises but not ?-typed")
            contracted.append(n)
            left.append((n, t))
            right.append((n, t))
        elif inl:
            left.append((n, t))
        elif inr:
            right.append((n, t))
        elif isinstance(t, WhyNot):
            right.append((n, t))  # weakened at a leaf of the continuation
        else:
            raise UnusedEndpoint(f"{n} unused by {type(whole).__name__}")
    return tuple(left), tuple(right), contracted


def _leaf(rule: str, p: Process, env: Env, used: set[str]) -> Derivation:
    extras = tuple((n, t) for n, t in env if n not in used)
    for n, t in extras:
        if not isinstance(t, WhyNot):
            raise UnusedEndpoint(f"{n} unused at {rule} leaf")
    core = tuple((n, t) for n, t in env if n in used)
    d = Derivation(rule, p, core, ())
    have = core
    for n, t in extras:
        have = have + ((n, t),)
        d = Derivation("Weaken", p, have, (d,))
    return d


def _check_cll(p: Process, env: Env) -> Derivation:
    match p:
        case Link(x, y):
            tx, ty = _env_get(env, x), _env_get(env, y)
            if dual(tx) != ty:
                raise RuleMismatch(f"link {x}<->{y} needs dual types, got {tx} / {ty}")
            return _leaf("Ax", p, env, {x, y})

        case Close(x):
            if not isinstance(_env_get(env, x), One):
                raise RuleMismatch(f"close {x} needs {x}:1")
            return _leaf("One", p, env, {x})

        case Wait(x, cont):
            if not isinstance(_env_get(env, x), Bot):
                raise RuleMismatch(f"wait {x} needs {x}:bot")
            sub = _check_cll(cont, _env_del(env, x))
            return Derivation("Bot", p, env, (sub,))

        case Send(x, f, payload, cont):
            t = _env_get(env, x)
            if not isinstance(t, Tensor):
                raise RuleMismatch(f"send on {x} needs {x}:A*B")
            rest = _env_del(env, x)
            left, right, contracted = _split_env(payload, {f}, cont, {x}, rest, p)
            dl = _check_cll(payload, left + ((f, t.left),))
            dr = _check_cll(cont, right + ((x, t.right),))
            d = Derivation("Tensor", p, env, (dl, dr))
            for _ in contracted:
                d = Derivation("Contract", p, env, (d,))
            return d

        case Recv(x, f, cont):
            t = _env_get(env, x)
            if not isinstance(t, Par):
                raise RuleMismatch(f"recv on {x} needs {x}:A|B")
            sub = _check_cll(cont, _env_del(env, x) + ((f, t.left), (x, t.right)))
            return Derivation("Par", p, env, (sub,))

        case Inl(x, cont) | Inr(x, cont):
            t = _env_get(env, x)
            if not isinstance(t, Plus):
                raise RuleMismatch(f"select on {x} needs {x}:A+B")
            keep = t.left if isinstance(p, Inl) else t.right
            sub = _check_cll(cont, _env_del(env, x) + ((x, keep),))
            return Derivation("PlusL" if isinstance(p, Inl) else "PlusR", p, env, (sub,))

        case Case(x, l, r):
            t = _env_get(env, x)
            if not isinstance(t, With):
                raise RuleMismatch(f"case on {x} needs {x}:A&B")
            dl = _check_cll(l, _env_del(env, x) + ((x, t.left),))
            dr = _check_cll(r, _env_del(env, x) + ((x, t.right),))
            return Derivation("With", p, env, (dl, dr))

        case Server(x, f, body):
            t = _env_get(env, x)
            if not isinstance(t, OfCourse):
                raise RuleMismatch(f"srv on {x} needs {x}:!A")
            rest = _env_del(env, x)
            for n, tt in rest:
                if not isinstance(tt, WhyNot):
                    raise RuleMismatch(f"! context must be ?-typed, {n} is not")
            sub = _check_cll(body, rest + ((f, t.body),))
            return Derivation("Bang", p, env, (sub,))

        case Client(x, f, cont):
            t = _env_get(env, x)
            if not isinstance(t, WhyNot):
                raise RuleMismatch(f"client on {x} needs {x}:?A")
            rest = _env_del(env, x)
            if x in free_endpoints(cont):
                sub = _check_cll(cont, rest + ((f, t.body), (x, t)))
                quest = Derivation("Quest", p, env + ((x, t),), (sub,))
                return Derivation("Contract", p, env, (quest,))
            sub = _check_cll(cont, rest + ((f, t.body),))
            return Derivation("Quest", p, env, (sub,))

        case Cut(x, y, l, r):
            left, right, contracted = _split_env(l, {x}, r, {y}, env, p)
            a = _infer(l, x, dict(left))
            b = _infer(r, y, dict(right))
            formula = _unify(a, dual(b))
            if formula is None:
                raise CutFormulaError(f"cut formulas disagree: {a} versus dual {b}")
            if _has_unknown(formula):
                raise CutFormulaError(f"cannot infer cut formula for res {x} {y}")
            dl = _check_cll(l, left + ((x, formula),))
            dr = _check_cll(r, right + ((y, dual(formula)),))
            d = Derivation("Cut", p, env, (dl, dr))
            for _ in contracted:
                d = Derivation("Contract", p, env, (d,))
            return d

        case MCut():
            raise RuleMismatch("multiparty cuts are validated as configurations")

    raise RuleMismatch(f"no CP rule for {type(p).__name__}")


def cp_step(p: Process, env: Env) -> tuple[str, tuple[tuple[Process, Env], ...]]:
    """One CP rule applied to the head of ``p``, yielding premise judgements.

    Contraction on a re-used ?-endpoint is folded into the client step; cuts
    are not decomposed here.
    """
    env = tuple((n, erase(t)) for n, t in env)
    match p:
        case Link(x, y):
            tx, ty = _env_get(env, x), _env_get(env, y)
            if dual(tx) != ty:
                raise RuleMismatch(f"link {x}<->{y} needs dual types")
            return "Ax", ()
        case Close(x):
            if not isinstance(_env_get(env, x), One):
                raise RuleMismatch(f"close {x} needs {x}:1")
            return "One", ()
        case Wait(x, cont):
            if not isinstance(_env_get(env, x), Bot):
                raise RuleMismatch(f"wait {x} needs {x}:bot")
            return "Bot", ((cont, _env_del(env, x)),)
        case Send(x, f, payload, cont):
            t = _env_get(env, x)
            if not isinstance(t, Tensor):
                raise RuleMismatch(f"send on {x} needs {x}:A*B")
            left, right, _ = _split_env(payload, {f}, cont, {x}, _env_del(env, x), p)
            return "Tensor", (
                (payload, left + ((f, t.left),)),
                (cont, right + ((x, t.right),)),
            )
        case Recv(x, f, cont):
            t = _env_get(env, x)
            if not isinstance(t, Par):
                raise RuleMismatch(f"recv on {x} needs {x}:A|B")
            return "Par", ((cont, _env_del(env, x) + ((f, t.left), (x, t.right))),)
        case Inl(x, cont) | Inr(x, cont):
            t = _env_get(env, x)
            if not isinstance(t, Plus):
                raise RuleMismatch(f"select on {x} needs {x}:A+B")
            keep = t.left if isinstance(p, Inl) else t.right
            tag = "PlusL" if isinstance(p, Inl) else "PlusR"
            return tag, ((cont, _env_del(env, x) + ((x, keep),)),)
        case Case(x, l, r):
            t = _env_get(env, x)
            if not isinstance(t, With):
                raise RuleMismatch(f"case on {x} needs {x}:A&B")
            rest = _env_del(env, x)
            return "With", ((l, rest + ((x, t.left),)), (r, rest + ((x, t.right),)))
        case Server(x, f, body):
            t = _env_get(env, x)
            if not isinstance(t, OfCourse):
                raise RuleMismatch(f"srv on {x} needs {x}:!A")
            rest = _env_del(env, x)
            for n, tt in rest:
                if not isinstance(tt, WhyNot):
                    raise RuleMismatch(f"! context must be ?-typed, {n} is not")
            return "Bang", ((body, rest + ((f, t.body),)),)
        case Client(x, f, cont):
            t = _env_get(env, x)
            if not isinstance(t, WhyNot):
                raise RuleMismatch(f"client on {x} needs {x}:?A")
            rest = _env_del(env, x)
            if x in free_endpoints(cont):
                return "Quest", ((cont, rest + ((f, t.body), (x, t))),)
            return "Quest", ((cont, rest + ((f, t.body),)),)
    raise RuleMismatch(f"cp_step cannot decompose {type(p).__name__}")


# Cut-formula reconstruction: a lightweight structural inference with an
# unknown placeholder, resolved by unifying the two sides of the cut.


@dataclass(frozen=True)
class _Unknown:
    pass


def _has_unknown(t) -> bool:
    if isinstance(t, _Unknown):
        return True
    return any(_has_unknown(c) for c in S.children(t))


def _unify(a, b):
    if isinstance(a, _Unknown):
        return b
    if isinstance(b, _Unknown):
        return a
    if type(a) is not type(b):
        return None
    match a:
        case Atom(n) | DualAtom(n):
            return a if (n == getattr(b, "name", None)) else None
        case One() | Bot():
            return a
        case Tensor(l, r, _) | Par(l, r, _) | Plus(l, r, _) | With(l, r, _):
            ul, ur = _unify(l, b.left), _unify(r, b.right)
            if ul is None or ur is None:
                return None
            return type(a)(ul, ur)
        case OfCourse(bd, _) | WhyNot(bd, _):
            ub = _unify(bd, b.body)
            return None if ub is None else type(a)(ub)
    return None


def _infer(p: Process, x: str, env: dict[str, Type]):
    """Type of ``x`` in ``p`` given the other endpoints, unknowns allowed."""
    match p:
        case Link(a, b):
            if x == a:
                return dual(env[b]) if b in env else _Unknown()
            if x == b:
                return dual(env[a]) if a in env else _Unknown()
            return _Unknown()
        case Close(a):
            return One() if a == x else _Unknown()
        case Wait(a, c):
            return Bot() if a == x else _infer(c, x, env)
        case Send(a, f, pl, c):
            if a == x:
                return Tensor(_infer(pl, f, env), _infer(c, x, env))
            if x in free_endpoints(pl):
                return _infer(pl, x, env)
            return _infer(c, x, env)
        case Recv(a, f, c):
            if a == x:
                return Par(_infer(c, f, env), _infer(c, x, env))
            return _infer(c, x, env)
        case Inl(a, c):
            return Plus(_infer(c, x, env), _Unknown()) if a == x else _infer(c, x, env)
        case Inr(a, c):
            return Plus(_Unknown(), _infer(c, x, env)) if a == x else _infer(c, x, env)
        case Case(a, l, r):
            if a == x:
                return With(_infer(l, x, env), _infer(r, x, env))
            u = _unify(_infer(l, x, env), _infer(r, x, env))
            return _Unknown() if u is None else u
        case Server(a, f, b):
            return OfCourse(_infer(b, f, env)) if a == x else _infer(b, x, env)
        case Client(a, f, b):
            if a == x:
                inner = _infer(b, f, env)
                if x in free_endpoints(b):
                    u = _unify(WhyNot(inner), _infer(b, x, env))
                    return u if u is not None else WhyNot(inner)
                return WhyNot(inner)
            return _infer(b, x, env)
        case Cut(a, b, l, r):
            if x in free_endpoints(l) - {a}:
                return _infer(l, x, env)
            return _infer(r, x, env)
    return _Unknown()


# ---------------------------------------------------------------------------
# Synthesis

_HOLE_PREFIX = "?"


def _is_hole(ts: tuple[str, ...]) -> bool:
    return len(ts) == 1 and ts[0].startswith(_HOLE_PREFIX)


class _HoleCounter:
    def __init__(self):
        self.n = 0

    def new(self) -> str:
        self.n += 1
        return f"{_HOLE_PREFIX}{self.n}"


def annotate_with_holes(t: Type, counter: _HoleCounter) -> Type:
    """Fill every empty annotation slot with a unique placeholder."""
    match t:
        case Atom() | DualAtom():
            return t
        case One(ts):
            return One(ts or (counter.new(),))
        case Bot(u):
            return Bot(u or counter.new())
        case Tensor(l, r, ts):
            return Tensor(annotate_with_holes(l, counter), annotate_with_holes(r, counter),
                          ts or (counter.new(),))
        case Par(l, r, u):
            return Par(annotate_with_holes(l, counter), annotate_with_holes(r, counter),
                       u or counter.new())
        case Plus(l, r, u):
            return Plus(annotate_with_holes(l, counter), annotate_with_holes(r, counter),
                        u or counter.new())
        case With(l, r, ts):
            return With(annotate_with_holes(l, counter), annotate_with_holes(r, counter),
                        ts or (counter.new(),))
        case OfCourse(b, ts):
            return OfCourse(annotate_with_holes(b, counter), ts or (counter.new(),))
        case WhyNot(b, u):
            return WhyNot(annotate_with_holes(b, counter), u or counter.new())
    raise TypeError(t)


def _subst_holes_type(t: Type, store: dict[str, tuple[str, ...]], default: str | None = None) -> Type:
    def sub(ts: tuple[str, ...]) -> tuple[str, ...]:
        if _is_hole(ts):
            if ts[0] in store:
                return store[ts[0]]
            if default is not None:
                return (default,)
        return ts

    match t:
        case Atom() | DualAtom():
            return t
        case One(ts):
            return One(sub(ts))
        case Bot(u):
            return S.with_targets(Bot(), sub((u,)) if u else ())
        case Tensor(l, r, ts):
            return Tensor(_subst_holes_type(l, store, default),
                          _subst_holes_type(r, store, default), sub(ts))
        case Par(l, r, u):
            return S.with_targets(Par(_subst_holes_type(l, store, default),
                                      _subst_holes_type(r, store, default)),
                                  sub((u,)) if u else ())
        case Plus(l, r, u):
            return S.with_targets(Plus(_subst_holes_type(l, store, default),
                                       _subst_holes_type(r, store, default)),
                                  sub((u,)) if u else ())
        case With(l, r, ts):
            return With(_subst_holes_type(l, store, default),
                        _subst_holes_type(r, store, default), sub(ts))
        case OfCourse(b, ts):
            return OfCourse(_subst_holes_type(b, store, default), sub(ts))
        case WhyNot(b, u):
            return S.with_targets(WhyNot(_subst_holes_type(b, store, default)),
                                  sub((u,)) if u else ())
    raise TypeError(t)


def _subst_holes_context(g: Context, store: dict[str, tuple[str, ...]]) -> Context:
    if not store:
        return g
    ents = []
    for e in g.entries:
        typ = _subst_holes_type(e.typing, store) if e.typing is not None else None
        queue = []
        for it in e.queue:
            if isinstance(it, MsgBox):
                it = MsgBox(it.target,
                            tuple((n, _subst_holes_type(t, store)) for n, t in it.payloads))
            queue.append(it)
        ents.append(Entry(e.endpoint, tuple(queue), typ))
    return Context(tuple(ents))


def synth_forwarder(g: Context) -> Process | None:
    """Search for a forwarder inhabiting a fully annotated context."""
    if not context_fully_annotated(g):
        raise NotAnnotated("context has unannotated connectives")
    supply = S.FreshNames(frozenset(_names_in_context(g)))
    for proc, _ in _solutions(g, {}, supply, {}, {}):
        return proc
    return None


def synth_with_annotations(env: Env) -> tuple[Context, Process] | None:
    """Find an annotation of a plain environment and a forwarder for it.

    Annotation slots are resolved lazily as the proof search reaches them;
    candidate targets are tried in name order, and multi-target slots by
    smallest subset first.  Slots the derivation never consults (branches not
    taken) are filled with an arbitrary other endpoint at the end.
    """
    counter = _HoleCounter()
    holed = tuple((x, annotate_with_holes(erase(t), counter)) for x, t in env)
    g = Context(tuple(Entry(x, (), t) for x, t in holed))
    supply = S.FreshNames(frozenset(x for x, _ in env))
    for proc, store in _solutions(g, {}, supply, {}, {}):
        names = sorted(x for x, _ in env)
        out_entries = []
        for x, t in holed:
            default = next((n for n in names if n != x), x)
            out_entries.append(Entry(x, (), _subst_holes_type(t, store, default)))
        return Context(tuple(out_entries)), proc
    return None


def _head_targets(t: Type) -> tuple[str, ...]:
    return S.targets_of(t)


def _dangling_names(g: Context) -> tuple[str, ...]:
    """Annotation targets that name no current endpoint or boxed payload.

    They are promises: an earlier rule recorded the name a later binder must
    introduce, so the search offers them as binder candidates.
    """
    present = set(g.endpoints())
    refs: set[str] = set()

    def scan_type(t: Type):
        for s in S.subtypes(t):
            refs.update(u for u in S.targets_of(s) if not u.startswith(_HOLE_PREFIX))

    for e in g.entries:
        if e.typing is not None:
            scan_type(e.typing)
        for it in e.queue:
            refs.add(it.target)
            if isinstance(it, MsgBox):
                for pn, pt in it.payloads:
                    present.add(pn)
                    scan_type(pt)
    return tuple(sorted(refs - present))


def _binder_candidates(base: str, g: Context, supply: S.FreshNames) -> list[str]:
    return [supply.fresh(base)] + [d for d in _dangling_names(g)]


def _solutions(
    g: Context,
    store: dict[str, tuple[str, ...]],
    supply: S.FreshNames,
    failed: dict,
    ren: dict[str, str],
) -> Iterator[tuple[Process, dict[str, tuple[str, ...]]]]:
    """Solutions of a (possibly holed) context.

    ``store`` holds hole resolutions in the names of the original judgement;
    ``ren`` maps those original names to their current names along this
    branch (continuations of ! and ? get renamed as the rules fire).
    """
    from .contexts import normalize_context

    if store:
        cur = {h: tuple(ren.get(u, u) for u in v) for h, v in store.items()}
        g = _subst_holes_context(g, cur)
    key = normalize_context(g)
    if key in failed:
        return

    produced = False
    for proc, st in _solutions_raw(g, store, supply, failed, ren):
        produced = True
        yield proc, st
    if not produced:
        failed[key] = True


def _unrename(ren: dict[str, str], names: tuple[str, ...]) -> tuple[str, ...]:
    inv = {c: o for o, c in ren.items()}
    return tuple(inv.get(u, u) for u in names)


def _solutions_raw(g, store, supply, failed, ren):
    entries = sorted(g.entries, key=lambda e: e.endpoint)

    # Leaf rules first: their applicability is forced by the whole context.
    if len(entries) == 2:
        (e1, e2) = entries
        ts = {type(e1.typing), type(e2.typing)}
        if ts == {Atom, DualAtom} and not e1.queue and not e2.queue:
            if isinstance(e1.typing, DualAtom):
                d, a = e1, e2
            else:
                d, a = e2, e1
            if d.typing.name == a.typing.name:
                yield Link(d.endpoint, a.endpoint), store
                return

    for e in entries:
        if isinstance(e.typing, One) and not e.queue:
            others = [o for o in entries if o.endpoint != e.endpoint]
            if all(o.typing is None and o.queue == (Star(e.endpoint),) for o in others):
                ts = e.typing.targets
                names = tuple(sorted(o.endpoint for o in others))
                if _is_hole(ts):
                    if names:
                        yield Close(e.endpoint), {**store, ts[0]: _unrename(ren, names)}
                    return
                if ts and set(ts) == set(names):
                    yield Close(e.endpoint), store
                    return

    # Deterministic step: an entry whose head annotation is resolved and whose
    # rule is enabled can always be fired first (the rules are invertible).
    for e in entries:
        act = _resolved_action(e, g)
        if act is not None:
            yield from _fire(act, e, g, store, supply, failed, ren)
            return

    # Otherwise branch over lazy annotation choices, entry by entry.
    for e in entries:
        for choice in _hole_actions(e, g):
            hole, value, act = choice
            st = {**store, hole: _unrename(ren, value)}
            yield from _fire(act, e, g, st, supply, failed, ren)


def _resolved_action(e: Entry, g: Context):
    """An applicable rule at ``e`` whose head annotation carries no hole."""
    t = e.typing
    if t is None or isinstance(t, (Atom, DualAtom)):
        return None
    ts = _head_targets(t)
    if _is_hole(ts):
        return None
    match t:
        case Par():
            if g.has(ts[0]) and ts[0] != e.endpoint:
                return ("Par", ts)
        case Bot():
            if g.has(ts[0]) and ts[0] != e.endpoint:
                return ("Bot", ts)
        case With():
            if all(g.has(u) and u != e.endpoint for u in ts):
                return ("With", ts)
        case Tensor():
            for u in ts:
                if u == e.endpoint or not g.has(u):
                    return None
                q = g.get(u).queue
                if not q or not isinstance(q[0], MsgBox) or q[0].target != e.endpoint:
                    return None
            return ("Tensor", ts)
        case Plus():
            z = ts[0]
            if g.has(z) and g.get(z).queue:
                head = g.get(z).queue[0]
                if head == LeftTok(e.endpoint):
                    return ("PlusL", ts)
                if head == RightTok(e.endpoint):
                    return ("PlusR", ts)
            return None
        case WhyNot():
            z = ts[0]
            if g.has(z) and g.get(z).queue and g.get(z).queue[0] == Query(e.endpoint):
                return ("Quest", ts)
            return None
        case OfCourse():
            others = [o for o in g.entries if o.endpoint != e.endpoint]
            if (
                not e.queue
                and set(ts) == {o.endpoint for o in others}
                and all(isinstance(o.typing, WhyNot) and not o.queue for o in others)
            ):
                return ("Bang", ts)
            return None
    return None


def _hole_actions(e: Entry, g: Context):
    """Lazy annotation choices at ``e``: (hole, value, action) triples."""
    t = e.typing
    if t is None or isinstance(t, (Atom, DualAtom)):
        return
    ts = _head_targets(t)
    if not _is_hole(ts):
        return
    hole = ts[0]
    x = e.endpoint
    actives = sorted(o.endpoint for o in g.entries if o.endpoint != x and o.typing is not None)
    anyone = sorted(o.endpoint for o in g.entries if o.endpoint != x)
    match t:
        case Par() | Bot():
            tag = "Par" if isinstance(t, Par) else "Bot"
            for u in actives:
                yield hole, (u,), (tag, (u,))
        case Plus():
            for o in sorted(g.entries, key=lambda o: o.endpoint):
                if o.endpoint == x or not o.queue:
                    continue
                if o.queue[0] == LeftTok(x):
                    yield hole, (o.endpoint,), ("PlusL", (o.endpoint,))
                elif o.queue[0] == RightTok(x):
                    yield hole, (o.endpoint,), ("PlusR", (o.endpoint,))
        case WhyNot():
            for o in sorted(g.entries, key=lambda o: o.endpoint):
                if o.endpoint != x and o.queue and o.queue[0] == Query(x):
                    yield hole, (o.endpoint,), ("Quest", (o.endpoint,))
        case With():
            for sub in _subsets(actives):
                yield hole, sub, ("With", sub)
        case Tensor():
            eligible = [
                o.endpoint
                for o in g.entries
                if o.endpoint != x
                and o.queue
                and isinstance(o.queue[0], MsgBox)
                and o.queue[0].target == x
            ]
            for sub in _subsets(sorted(eligible)):
                yield hole, sub, ("Tensor", sub)
        case OfCourse():
            others = [o for o in g.entries if o.endpoint != x]
            if (
                not e.queue
                and others
                and all(isinstance(o.typing, WhyNot) and not o.queue for o in others)
            ):
                names = tuple(sorted(o.endpoint for o in others))
                yield hole, names, ("Bang", names)
        case One():
            return  # handled as a leaf
    return


def _subsets(names):
    """Nonempty subsets, smallest first, lexicographic within a size."""
    from itertools import combinations

    for k in range(1, len(names) + 1):
        for c in combinations(names, k):
            yield tuple(c)


def _fire(action, e: Entry, g: Context, store, supply, failed, ren):
    tag, ts = action
    x = e.endpoint
    t = _subst_holes_type(e.typing, {h: tuple(ren.get(u, u) for u in v)
                                     for h, v in store.items()})
    queue = e.queue
    if tag == "Bot":
        g2 = g.replace(x, Entry(x, queue + (Star(ts[0]),), None))
        for proc, st in _solutions(g2, store, supply, failed, ren):
            yield Wait(x, proc), st
    elif tag == "Par":
        for f in _binder_candidates("m", g, supply):
            g2 = g.replace(x, Entry(x, queue + (msgbox(ts[0], f, t.left),), t.right))
            for proc, st in _solutions(g2, store, supply, failed, ren):
                yield Recv(x, f, proc), st
    elif tag in ("PlusL", "PlusR"):
        z = ts[0]
        ez = g.get(z)
        keep = t.left if tag == "PlusL" else t.right
        g2 = g.replace(z, Entry(z, ez.queue[1:], ez.typing)).replace(x, Entry(x, queue, keep))
        mk = Inl if tag == "PlusL" else Inr
        for proc, st in _solutions(g2, store, supply, failed, ren):
            yield mk(x, proc), st
    elif tag == "With":
        gl = g.replace(x, Entry(x, queue + tuple(LeftTok(u) for u in ts), t.left))
        gr = g.replace(x, Entry(x, queue + tuple(RightTok(u) for u in ts), t.right))
        for pl, st1 in _solutions(gl, store, supply, failed, ren):
            for pr, st2 in _solutions(gr, st1, supply, failed, ren):
                yield Case(x, pl, pr), st2
    elif tag == "Tensor":
        gathered: list[tuple[str, Type]] = []
        g2 = g
        for u in ts:
            eu = g2.get(u)
            head = eu.queue[0]
            gathered.extend(head.payloads)
            g2 = g2.replace(u, Entry(u, eu.queue[1:], eu.typing))
        for f in _binder_candidates("w", g, supply):
            names = [n for n, _ in gathered] + [f]
            if len(set(names)) != len(names):
                continue
            left = Context(tuple(Entry(n, (), tt) for n, tt in gathered) + (Entry(f, (), t.left),))
            right = g2.replace(x, Entry(x, g2.get(x).queue, t.right))
            for pl, st1 in _solutions(left, store, supply, failed, ren):
                for pr, st2 in _solutions(right, st1, supply, failed, ren):
                    yield Send(x, f, pl, pr), st2
    elif tag == "Bang":
        orig = _unrename(ren, (x,))[0]
        for f in _binder_candidates(x, g, supply):
            g2 = g.replace(x, Entry(f, tuple(Query(u) for u in ts), t.body))
            g2 = rename_context_targets(g2, {x: f})
            for proc, st in _solutions(g2, store, supply, failed, {**ren, orig: f}):
                yield Server(x, f, proc), st
    elif tag == "Quest":
        z = ts[0]
        ez = g.get(z)
        orig = _unrename(ren, (x,))[0]
        for f in _binder_candidates(x, g, supply):
            g2 = g.replace(z, Entry(z, ez.queue[1:], ez.typing)).replace(x, Entry(f, queue, t.body))
            g2 = rename_context_targets(g2, {x: f})
            for proc, st in _solutions(g2, store, supply, failed, {**ren, orig: f}):
                yield Client(x, f, proc), st
    else:
        raise AssertionError(tag)


# ---------------------------------------------------------------------------
# Identity inhabitants of CP judgements (eta-expanded links)


def eta_link(z: str, x: str, t: Type) -> Process:
    """A cut-free CP process inhabiting ``z: dual(t), x: t``."""
    return _eta(z, x, erase(t), S.FreshNames(frozenset((z, x))))


def _eta(z: str, x: str, t: Type, supply: S.FreshNames) -> Process:
    match t:
        case Atom() | DualAtom():
            return Link(z, x)
        case One():
            return Wait(z, Close(x))
        case Bot():
            return Wait(x, Close(z))
        case Tensor(a, b, _):
            u, v = supply.fresh("u"), supply.fresh("v")
            return Recv(z, v, Send(x, u, _eta(v, u, a, supply), _eta(z, x, b, supply)))
        case Par(a, b, _):
            u, v = supply.fresh("u"), supply.fresh("v")
            return Recv(x, u, Send(z, v, _eta(u, v, dual(a), supply), _eta(x, z, dual(b), supply)))
        case Plus(a, b, _):
            return Case(z, Inl(x, _eta(z, x, a, supply)), Inr(x, _eta(z, x, b, supply)))
        case With(a, b, _):
            return Case(x, Inl(z, _eta(x, z, dual(a), supply)), Inr(z, _eta(x, z, dual(b), supply)))
        case OfCourse(a, _):
            u, v = supply.fresh("u"), supply.fresh("v")
            return Server(x, u, Client(z, v, _eta(v, u, a, supply)))
        case WhyNot(a, _):
            u, v = supply.fresh("u"), supply.fresh("v")
            return Server(z, v, Client(x, u, _eta(u, v, dual(a), supply)))
    raise TypeError(t)
