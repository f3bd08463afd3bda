import itertools
import random

import pytest

from inhabit import core, frontend, machine as M, oracle
from inhabit.machine import Clo, Hole, Machine, Subst
from conftest import NAT_SRC, problem


class StubMeta:
    ids = itertools.count(1)

    def __init__(self, arity=0):
        self.id = next(StubMeta.ids)
        self.arity = arity
        self.value_node = None
        self.hole = Hole(self)
        self.stuck_eqs = []
        self.rigid_count = 0


def tiny_machine():
    p = problem("axiom A : Sort\naxiom B : Sort\ngoal : B")
    return p, Machine(p.env)


def test_beta_extension_worked_example():
    """(lam x. f ?X) a  written as  <0 1, [<lam 1 ?X, [f]>, a]>: one beta
    extension exposes the head f with the stuck argument in its spine."""
    _, m = tiny_machine()
    f = m.fresh_rigid("f")
    a = m.fresh_rigid("a")
    meta = StubMeta()
    lam = core.Term(("x",), (), 1, (meta.hole,))       # lam x. f ?X
    node = core.Term((), (), 0, (core.Term((), (), 1, ()),))  # 0 applied to 1
    subst = Subst([Clo(lam, Subst([f], None)), a], None)

    allocs_before = core.TERM_ALLOCS
    w = m.whnf(Clo(node, subst))
    assert type(w) is M.Head
    assert w.head is f
    assert len(w.spine) == 1
    inner = w.spine[0]
    assert type(inner) is Clo and inner.node is meta.hole
    # beta never creates syntax, only closure/substitution records
    assert core.TERM_ALLOCS == allocs_before


def test_whnf_bare_metavariable_is_stuck():
    _, m = tiny_machine()
    meta = StubMeta()
    w = m.whnf(Clo(meta.hole, m.env_subst))
    assert type(w) is M.StuckMeta and w.meta is meta


def test_whnf_iota_chain_agrees_with_oracle(nat_problem):
    env = nat_problem.env
    m = Machine(env)
    t = frontend.parse_term(
        nat_problem,
        "Nat.rec (fun t => Nat) Nat.zero (fun k ih => Nat.succ ih)"
        " (Nat.succ Nat.zero)")
    got = m.reify((Clo(t, m.env_subst), ()), [])
    assert oracle.normal_form_equal(env, got, t)
    # one iota step lands on the successor rule's head
    w = m.whnf(Clo(t, m.env_subst))
    assert w.head.name == "Nat.succ"


def test_whnf_agrees_with_oracle_on_random_closed_terms(nat_problem):
    env = nat_problem.env
    m = Machine(env)
    rng = random.Random(7)

    def lit(n):
        t = core.Term((), (), env.slot_of["Nat.zero"], ())
        for _ in range(n):
            t = core.Term((), (), env.slot_of["Nat.succ"], (t,))
        return t

    def rand_term(depth):
        r = rng.random()
        if depth <= 0 or r < 0.3:
            return lit(rng.randrange(3))
        if r < 0.75:
            return core.Term((), (), env.slot_of["add"],
                             (rand_term(depth - 1), rand_term(depth - 1)))
        return core.Term((), (), env.slot_of["Nat.succ"],
                         (rand_term(depth - 1),))

    for _ in range(60):
        t = rand_term(3)
        got = m.reify((Clo(t, m.env_subst), ()), [])
        assert oracle.normal_form_equal(env, got, t)


def test_whnf_idempotent(nat_problem):
    env = nat_problem.env
    t = frontend.parse_term(nat_problem, "add 2 3")
    m = Machine(env)  # after parse: literal bindings are part of the env now
    w = m.whnf(Clo(t, m.env_subst))
    re = m.reify((Clo(t, m.env_subst), ()), [])
    w2 = m.whnf(Clo(re, m.env_subst))
    assert w.head is w2.head
    assert len(w.spine) == len(w2.spine)


def test_heads_equal_tri_state():
    _, m = tiny_machine()
    f = m.fresh_rigid("f")
    b = m.fresh_rigid("b")
    hf1 = M.Head(f, ())
    hf2 = M.Head(f, (b,))
    hb = M.Head(b, ())
    assert m.heads_equal(hf1, hf2) == M.EQUAL
    assert m.heads_equal(hf1, hb) == M.UNEQUAL
    meta = StubMeta()
    stuck = M.StuckRed(f, (), meta)
    assert m.heads_equal(stuck, hb, synthesis=True) == M.UNKNOWN
    assert m.heads_equal(stuck, hb, synthesis=False) == M.UNEQUAL
    with pytest.raises(M.StuckInput):
        m.heads_equal(M.StuckMeta(meta, None, ()), hb)


def test_enter_binders_alpha_equivalence():
    _, m = tiny_machine()
    ida = core.Term(("x",), (), 0, ())
    idb = core.Term(("y",), (), 0, ())
    a, b = m.enter_binders((Clo(ida, None), ()), (Clo(idb, None), ()), 1)
    wa, wb = m.whnf(*a), m.whnf(*b)
    assert wa.head is wb.head


def test_enter_binders_distinct_heads():
    _, m = tiny_machine()
    f = m.fresh_rigid("f")
    g = m.fresh_rigid("g")
    lf = core.Term(("x",), (), 1, (core.Term((), (), 0, ()),))
    lg = core.Term(("x",), (), 1, (core.Term((), (), 0, ()),))
    a, b = m.enter_binders((Clo(lf, Subst([f], None)), ()),
                           (Clo(lg, Subst([g], None)), ()), 1)
    assert m.heads_equal(m.whnf(*a), m.whnf(*b)) == M.UNEQUAL


def test_enter_binders_meta_side_suspends():
    _, m = tiny_machine()
    a_rig = m.fresh_rigid("a")
    meta = StubMeta(arity=1)
    lam_a = core.Term(("x",), (), 1, ())  # fun x => a
    lhs = (Clo(meta.hole, m.env_subst), ())
    rhs = (Clo(lam_a, Subst([a_rig], None)), ())
    l2, r2 = m.enter_binders(lhs, rhs, 1)
    wl = m.whnf(*l2)
    assert type(wl) is M.StuckMeta and wl.meta is meta
    assert m.whnf(*r2).head is a_rig


def test_enter_binders_count_mismatch():
    _, m = tiny_machine()
    two = core.Term(("x", "y"), (), 0, ())
    with pytest.raises(M.BinderCountMismatch):
        m.enter_binders((Clo(two, None), ()), (Clo(two, None), ()), 1)


def test_fuel_exhaustion_is_loud():
    src = NAT_SRC
    p = problem(src)
    t = frontend.parse_term(p, "add 3 3")
    m = Machine(p.env, fuel=4)
    with pytest.raises(M.FuelExhausted):
        m.whnf(Clo(t, m.env_subst))


def test_iota_rules_cover_constructors(corpus_paths):
    """For every corpus inductive and constructor, reducing the recursor at a
    constructor-headed major steps to the annotated rule's reduct."""
    checked = 0
    for path in corpus_paths:
        p = problem(path.read_text(), path.name)
        env = p.env
        m = Machine(env)
        for b in env.bindings:
            if not isinstance(b.reduction, core.Recursor):
                continue
            red = b.reduction
            rec_entry = m.env_subst.block[env.slot_of[b.name]]
            for ctor_slot, rule in red.rules.items():
                cb = env.bindings[ctor_slot]
                c_ar = core.arity_of(cb.typ)
                spine = [m.fresh_rigid(f"s{i}")
                         for i in range(red.n_prelude + red.n_indices)]
                cargs = [m.fresh_rigid(f"c{i}") for i in range(c_ar)]
                major = Clo(
                    core.Term((), (), c_ar + ctor_slot,
                              tuple(core.Term((), (), i, ())
                                    for i in range(c_ar))),
                    Subst(list(cargs), m.env_subst))
                w = m.whnf(rec_entry, spine + [major])
                expected = m.whnf(Clo(rule, Subst(spine + list(cargs),
                                                  m.env_subst)))
                assert type(w) is type(expected)
                if type(w) is M.Head:
                    assert w.head is expected.head
                checked += 1
    assert checked >= 6  # Nat, Vec, Eq, Or, Bool, Decidable rules run
