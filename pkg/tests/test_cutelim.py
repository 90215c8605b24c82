import random

import pytest

import genutil
from fwdcal import parsing as P
from fwdcal import syntax as S
from fwdcal.checker import check_forwarder, synth_with_annotations
from fwdcal.contexts import (
    Context, Entry, LeftTok, MsgBox, Star, ctx, msgbox, normalize_context,
)
from fwdcal.cutelim import (
    AnnotationMismatch, CutPair, CutSide, Done, Judged, beta_step, cut_conclusions,
    distr_enumerate, distr_step, finish_distribution, proc_size, rank, reduce_cut,
    subst_run, unit_redistribute,
)
from fwdcal.syntax import (
    Atom, Bot, Close, Cut, DualAtom, Link, One, Par, Plus, Recv, Send, Tensor, Wait,
    With, dual, erase, size,
)


# -- distribution -------------------------------------------------------------


def test_distr_moves_box_and_rewires_sender():
    # the displayed step: [d][b:B] leaves x's queue for c, and the tensor in
    # d's type that aimed at x now aims at c
    B = Atom("b")
    d_type = Tensor(DualAtom("b"), One(("c",)), ("x",))
    pair = CutPair(
        CutSide(ctx(Entry("d", (), d_type)), (msgbox("d", "bb", B),), "x", Atom("a")),
        CutSide(ctx(Entry("c", (), Bot("d"))), (), "y", DualAtom("a")),
    )
    stepped = distr_step(pair, "c")
    assert stepped.top.queue == ()
    assert stepped.top.ctx.get("d").typing == Tensor(DualAtom("b"), One(("c",)), ("c",))
    done = finish_distribution(stepped)
    assert done.bottom.ctx.get("c").queue == (msgbox("d", "bb", B),)
    assert done.phase == "substituting"


def test_distr_empty_queues_single_result():
    pair = CutPair(
        CutSide(ctx(Entry("u", (), Atom("b"))), (), "x", Atom("a")),
        CutSide(ctx(Entry("v", (), DualAtom("b"))), (), "y", DualAtom("a")),
    )
    assert len(distr_enumerate(pair)) == 1


def test_distr_two_receivers_two_results():
    B = Atom("b")
    d_type = Tensor(DualAtom("b"), One(("c1", "c2")), ("x",))
    pair = CutPair(
        CutSide(ctx(Entry("d", (), d_type)), (msgbox("d", "bb", B),), "x", Atom("a")),
        CutSide(ctx(Entry("c1", (), Bot("d")), Entry("c2", (), Bot("d"))), (), "y",
                DualAtom("a")),
    )
    assert len(distr_enumerate(pair)) == 2


def test_distr_additive_token():
    d_type = Plus(Atom("b"), Atom("b"), "x")
    pair = CutPair(
        CutSide(ctx(Entry("d", (), d_type)), (LeftTok("d"),), "x", Atom("a")),
        CutSide(ctx(Entry("c", (), Bot("d"))), (), "y", DualAtom("a")),
    )
    stepped = distr_step(pair, "c")
    assert stepped.top.ctx.get("d").typing == Plus(Atom("b"), Atom("b"), "c")


def test_distr_requires_pending_reference():
    pair = CutPair(
        CutSide(ctx(Entry("d", (), Atom("b"))), (msgbox("d", "bb", Atom("c")),), "x",
                Atom("a")),
        CutSide(ctx(Entry("c", (), Bot("d"))), (), "y", DualAtom("a")),
    )
    with pytest.raises(AnnotationMismatch):
        distr_step(pair, "c")


# -- substitution -------------------------------------------------------------


def test_subst_atoms_merges():
    pair = CutPair(
        CutSide(ctx(Entry("u", (), Atom("b"))), (), "x", Atom("a")),
        CutSide(ctx(Entry("v", (), DualAtom("b"))), (), "y", DualAtom("a")),
        "substituting",
    )
    g = subst_run(pair)
    assert set(g.endpoints()) == {"u", "v"}


def test_subst_units_rewrites_stars_and_gathering():
    left = ctx(Entry("u1", (Star("x"),), None), Entry("u2", (Star("x"),), None),
               Entry("x", (), One(("u1", "u2"))))
    right = ctx(Entry("v", (), One(("y",))), Entry("y", (), Bot("v")))
    concl = cut_conclusions(left, "x", right, "y")
    assert len(concl) == 1
    g = concl[0]
    assert g.get("u1").queue == (Star("v"),)
    assert g.get("u2").queue == (Star("v"),)
    assert g.get("v").typing == One(("u1", "u2"))


def test_subst_tensor_box_case():
    # [x][pp:~a] in b's queue becomes [c][pp:~a]; the tensor in c aiming at y
    # re-aims at b
    left = P.parse_context("b : bot{x} [to=x msg pp : ~a], x : a *{b} 1{b}")
    right = P.parse_context("c : a *{y} 1{y}, y : ~a |{c} bot{c}")
    check_forwarder(P.parse_process("x[w].(pp<->w | wait b; close x)"), left)
    check_forwarder(P.parse_process("y(m). wait y; c[w].(m<->w | close c)"), right)
    concl = cut_conclusions(left, "x", right, "y")
    assert len(concl) == 1
    g = concl[0]
    boxes = [it for it in g.get("b").queue if isinstance(it, MsgBox)]
    assert boxes and boxes[0].target == "c"
    assert g.get("b").typing == Bot("c")
    assert g.get("c").typing == P.parse_type("a *{b} 1{b}")


def test_criss_cross_halves_conclusions_stable():
    A = erase(P.parse_type("~name | ~cost * bot"))
    j1, x, j2, y = genutil.fresh_cut_sides(A)
    c1 = cut_conclusions(j1.ctx, x, j2.ctx, y)
    c2 = cut_conclusions(j1.ctx, x, j2.ctx, y)
    assert c1 == c2 and len(c1) == 1
    golden = P.parse_context(
        "v : ~name |{w} ~cost *{w} bot{w}, w : name *{v} cost |{v} 1{v}")
    assert normalize_context(c1[0]) == normalize_context(golden)


# -- rank ---------------------------------------------------------------------


def test_rank_cut_free():
    assert rank(P.parse_process("x(u). close y")) == 0


def test_rank_with_formula():
    c = Cut("x", "y", Close("x"), Wait("y", Close("z")))
    assert rank(c, lambda _: P.parse_type("a * 1")) == 2
    assert rank(c, lambda _: Atom("a")) == 0


# -- the reduction figure ------------------------------------------------------


def _judged(proc_txt, ctx_txt):
    p, g = P.parse_process(proc_txt), P.parse_context(ctx_txt)
    check_forwarder(p, g)
    return Judged(p, g)


def test_beta_B1():
    left = _judged("z<->x", "z : ~a, x : a")
    right = _judged("wait y; close w", "w : 1{y}, y : bot{w}")
    tag, term = beta_step(left, "x", right, "y")
    assert tag == "B1"
    assert term == P.parse_process("wait z; close w")


def test_beta_B2_matches_unit_redistribute():
    left = _judged("close x", "u1 : . [to=x *], u2 : . [to=x *], x : 1{u1,u2}")
    right = _judged("wait y; close v", "v : 1{y}, y : bot{v}")
    tag, term = beta_step(left, "x", right, "y")
    assert tag == "B2"
    cont = Judged(P.parse_process("close v"),
                  P.parse_context("v : 1{y}, y : . [to=v *]"))
    redis = unit_redistribute(cont, "y", ("u1", "u2"), {},
                              left.ctx.without("x"), "x")
    assert term == redis.term == P.parse_process("close v")
    check_forwarder(redis.term, redis.ctx)


def test_beta_C1():
    # the right head waits on a spectator: the cut slides under it
    left = _judged("close x", "u0 : . [to=x *], x : 1{u0}")
    right = _judged("wait u; wait y; close v",
                    "v : 1{u,y}, u : bot{v}, y : bot{v}")
    tag, term = beta_step(left, "x", right, "y")
    assert tag == "C1"
    assert term == Wait("u", Cut("x", "y", left.term, P.parse_process("wait y; close v")))


def test_beta_C2():
    left = _judged("x(n). e[w'].(n<->w' | wait x; close e)",
                   "e : a *{x} 1{x}, x : ~a |{e} bot{e}")
    right = _judged("u(m). y[w].(m<->w | wait u; close y)",
                    "u : ~a |{y} bot{y}, y : a *{u} 1{u}")
    tag, term = beta_step(left, "x", right, "y")
    assert tag == "C2"
    assert term == Recv("u", "m", Cut("x", "y", left.term,
                                      P.parse_process("y[w].(m<->w | wait u; close y)")))


def test_beta_C3():
    left = _judged("wait x; close e", "e : 1{x}, x : bot{e}")
    right = _judged("u[w].(m<->w | wait u; close y)",
                    "u : b *{y} bot{y}, y : 1{u} [to=u msg m : ~b]")
    tag, term = beta_step(left, "x", right, "y")
    assert tag == "C3"
    assert term == Send("u", "w", P.parse_process("m<->w"),
                        Cut("x", "y", left.term, P.parse_process("wait u; close y")))


def test_beta_K():
    # res xy (x[a].(P|Q) | y(c).R) steps to res xy (Q | res{a > c}(P|R)),
    # here with the inner composition spliced in place of the boxed payload
    left = _judged("x[a].(d<->a | wait u; close x)",
                   "u : bot{x} [to=x msg d : ~a], x : a *{u} 1{u}")
    right = _judged("y(c). wait y; v[w].(c<->w | close v)",
                    "y : ~a |{v} bot{v}, v : a *{y} 1{y}")
    tag, term = beta_step(left, "x", right, "y")
    assert tag == "K"
    assert term == Cut(
        "x", "y",
        P.parse_process("wait u; close x"),
        P.parse_process("wait y; v[a].(d<->a | close v)"),
    )


def test_reduce_cut_atoms():
    left = _judged("z<->x", "z : ~a, x : a")
    right = _judged("y<->w", "y : ~a, w : a")
    concl = cut_conclusions(left.ctx, "x", right.ctx, "y")
    assert [set(g.endpoints()) for g in concl] == [{"z", "w"}]
    term, trace = reduce_cut(left, "x", right, "y", concl[0])
    assert trace == ("B1",) and term == Link("z", "w")


def test_reduce_cut_units_single_step():
    left = _judged("close x", "u1 : . [to=x *], u2 : . [to=x *], x : 1{u1,u2}")
    right = _judged("wait y; close v", "v : 1{y}, y : bot{v}")
    concl = cut_conclusions(left.ctx, "x", right.ctx, "y")
    assert len(concl) == 1
    term, trace = reduce_cut(left, "x", right, "y", concl[0])
    assert trace == ("B2",) and term == Close("v")
    check_forwarder(term, concl[0])


def test_reduce_cut_crisscross_halves():
    A = erase(P.parse_type("~name | ~cost * bot"))
    j1, x, j2, y = genutil.fresh_cut_sides(A)
    for g in cut_conclusions(j1.ctx, x, j2.ctx, y):
        term, trace = reduce_cut(j1, x, j2, y, g)
        assert S.is_cut_free(term)
        check_forwarder(term, g)


def test_reduce_cut_all_gammas_random():
    rng = random.Random(77)
    pairs = genutil.sample_cut_pairs(rng, 12, max_formula=3)
    assert pairs
    realized = 0
    for p1, g1, x, p2, g2, y in pairs:
        for g in cut_conclusions(g1, x, g2, y):
            term, trace = reduce_cut(Judged(p1, g1), x, Judged(p2, g2), y, g)
            assert S.is_cut_free(term)
            check_forwarder(term, g)
            realized += 1
    assert realized > 0


def test_exchange_lemma_spot():
    # every conclusion of a multiplicative key redex is a conclusion of the
    # reduct with the box relocated
    rng = random.Random(31)
    checked = 0
    for p1, g1, x, p2, g2, y in genutil.sample_cut_pairs(rng, 60, max_formula=4):
        fx, fy = g1.get(x).typing, g2.get(y).typing
        if not isinstance(fx, Tensor) or not isinstance(fy, Par):
            continue
        if len(fx.targets) != 1:
            continue
        u = fx.targets[0]
        qu = g1.get(u).queue
        if not qu or not isinstance(qu[0], MsgBox) or qu[0].target != x:
            continue
        box = qu[0]
        redex = cut_conclusions(g1, x, g2, y)
        # reduct: pop the box, peel the formulas, re-box at the bottom queue
        g1b = g1.replace(u, Entry(u, qu[1:], g1.get(u).typing))
        g1b = g1b.replace(x, Entry(x, g1.get(x).queue, fx.right))
        ny = Entry(y, g2.get(y).queue + (MsgBox(fy.target, box.payloads),), fy.right)
        g2b = g2.replace(y, ny)
        reduct = cut_conclusions(g1b, x, g2b, y)
        rset = {normalize_context(g) for g in reduct}
        for g in redex:
            assert normalize_context(g) in rset
        checked += 1
        if checked >= 4:
            break
    assert checked > 0


def test_measure_decreases_along_traces():
    # rank is bounded by the cut formula and strictly drops at key steps
    A = erase(P.parse_type("(~a | bot) | ~b * (b * 1)"))
    j1, x, j2, y = genutil.fresh_cut_sides(A)
    g = cut_conclusions(j1.ctx, x, j2.ctx, y)[0]
    term, trace = reduce_cut(j1, x, j2, y, g)
    assert S.is_cut_free(term)
    assert trace.count("K") >= 1
