import itertools
import random

import pytest

from inhabit import core, equations, frontend, oracle, refine
from inhabit.machine import Clo, Subst
from conftest import problem, random_walk, unwind

TRUTH_SRC = """
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat

axiom T : Sort
axiom a : T
axiom b : T

axiom recv : (r : (t : Nat) -> T) -> T
goal : T
"""


def make_store(src, synthesis=False):
    p = problem(src)
    return p, refine.Store(p.env, p.goal, synthesis=synthesis)


def fresh_meta(store, typ_text=None, prob=None):
    """An unassigned meta over the environment (optionally typed)."""
    tn = None
    if typ_text is not None:
        decls, _ = frontend.parse(f"goal : {typ_text}")
        tn = prob._elab.translate_typ(decls[0].result, prob._elab.scope0())
    return store.new_meta(tn, store.env_subst, store.env_subst,
                          parent=store.root, path=())


def env_ref(store, name, *args):
    env = store.env
    depth = 0
    return core.Term((), (), env.slot_of[name],
                     tuple(core.Term((), (), env.slot_of[a], ()) for a in args))


def test_eq7_instance_is_violated():
    """(fun x => f ?X) a  =β  b  must be recognized as violated even though
    ?X is unresolved."""
    src = "axiom A : Sort\naxiom B : Sort\naxiom f : (x : A) -> B\naxiom b : B\naxiom a : A\ngoal : B"
    p, st = make_store(src)
    meta = fresh_meta(st)
    env = p.env
    lam = core.Term(("x",), (), 1, (meta.hole,))
    node = core.Term((), (), 0, (core.Term((), (), 1, ()),))
    sub = Subst([Clo(lam, Subst([st.env_subst.block[env.slot_of["f"]]], None)),
                 st.env_subst.block[env.slot_of["a"]]], None)
    st.trail.note_trunc(st.equations)
    eq = equations.new_equation(
        st, (Clo(node, sub), ()),
        (Clo(env_ref(st, "b"), st.env_subst), ()))
    ok = equations.process(st, eq)
    assert not ok
    assert eq.status == equations.VIOLATED
    names = tuple(r.name for r in eq.reason)
    assert names == ("f", "b")


def test_congruence_decomposition_child_count():
    src = ("axiom A : Sort\naxiom c : A\naxiom d : A\n"
           "axiom f : (x : A) -> (y : A) -> A\ngoal : A")
    p, st = make_store(src)
    ma = fresh_meta(st, "A", p)
    mb = fresh_meta(st, "A", p)
    lhs = core.Term((), (), p.env.slot_of["f"], (ma.hole, mb.hole))
    rhs = frontend.parse_term(p, "f c d", expected=p.goal)
    st.trail.note_trunc(st.equations)
    eq = equations.new_equation(st, (Clo(lhs, st.env_subst), ()),
                                (Clo(rhs, st.env_subst), ()))
    assert equations.process(st, eq)
    assert eq.status == equations.DECOMPOSED
    assert len(eq.children) == 2
    for child, m in zip(eq.children, (ma, mb)):
        assert child.status == equations.OPEN
        assert child.stuck_on == (m,)
        assert child.rigid


def nat_rec_sides(p, st, meta):
    lhs_spine = (
        Clo(frontend.parse_term(p, "fun n => T",
                                expected=_motive_typ(p)), st.env_subst),
        Clo(frontend.parse_term(p, "a", expected=None), st.env_subst),
        Clo(frontend.parse_term(p, "fun n h => b",
                                expected=_succ_typ(p)), st.env_subst),
        Clo(meta.hole, st.env_subst),
    )
    rec_entry = st.env_subst.block[p.env.slot_of["Nat.rec"]]
    lhs = (rec_entry, lhs_spine)
    rhs = (Clo(frontend.parse_term(p, "a", expected=None), st.env_subst), ())
    return lhs, rhs


def _motive_typ(p):
    decls, _ = frontend.parse("goal : (n : Nat) -> Sort")
    return p._elab.translate_typ(decls[0].result, p._elab.scope0())


def _succ_typ(p):
    decls, _ = frontend.parse("goal : (n : Nat) -> (h : T) -> T")
    return p._elab.translate_typ(decls[0].result, p._elab.scope0())


def test_recursor_stuck_policy_truth_table():
    """Nat.rec a (fun n h => b) ?t =β a: violated by default, suspended in
    synthesis mode; Eq. 7 is always violated (see test_eq7)."""
    p, st = make_store(TRUTH_SRC, synthesis=False)
    meta = fresh_meta(st, "Nat", p)
    lhs, rhs = nat_rec_sides(p, st, meta)
    st.trail.note_trunc(st.equations)
    eq = equations.new_equation(st, lhs, rhs)
    assert not equations.process(st, eq)
    assert eq.status == equations.VIOLATED

    p2, st2 = make_store(TRUTH_SRC, synthesis=True)
    meta2 = fresh_meta(st2, "Nat", p2)
    lhs2, rhs2 = nat_rec_sides(p2, st2, meta2)
    st2.trail.note_trunc(st2.equations)
    eq2 = equations.new_equation(st2, lhs2, rhs2)
    assert equations.process(st2, eq2)
    assert eq2.status == equations.OPEN
    assert eq2.stuck_on == (meta2,)
    assert meta2.stuck_eqs == [eq2]


def test_on_assign_satisfied_and_violated():
    src = "axiom A : Sort\naxiom c : A\naxiom d : A\ngoal : A"
    p, st = make_store(src)
    meta = fresh_meta(st, "A", p)
    st.trail.note_trunc(st.equations)
    eq = equations.new_equation(
        st, (Clo(meta.hole, st.env_subst), ()),
        (Clo(env_ref(st, "c"), st.env_subst), ()))
    assert equations.process(st, eq)
    assert eq.rigid and eq.stuck_on == (meta,)

    # assigning the matching head satisfies it
    mark = st.trail.mark()
    meta.value_node = core.Term((), (), p.env.slot_of["c"], ())
    st.trail.note_attr(meta, "value_node", None)
    assert equations.on_assign(st, meta)
    assert eq.status == equations.SATISFIED
    st.trail.undo(mark)
    meta.value_node = None

    # assigning the other head violates
    assert eq.status == equations.OPEN
    meta.value_node = core.Term((), (), p.env.slot_of["d"], ())
    assert not equations.on_assign(st, meta)
    assert eq.status == equations.VIOLATED


def test_unification_determines_argument_from_rigid_equation():
    """Refining the proof meta by refl forces the other argument through the
    equation, in the `?p : Eq Nat ?n 1000` style; oracle-checked."""
    src = """
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat
inductive Eq (A : Sort) (x : A) : (y : A) -> Sort where
| refl : Eq A x x
axiom Target : Sort
axiom use : (n : Nat) -> (p : Eq Nat n 1000) -> Target
goal : Target
"""
    from inhabit import search
    p = problem(src)
    terms, rs, s = search.solve(p, search.SearchConfig(timeout=20, count=1))
    assert len(terms) == 1
    rep = oracle.oracle_check(p.env, terms[0], p.goal)
    assert rep.accepted
    from inhabit import printer
    assert printer.print_term(p.env, terms[0]) == \
        "use 1000 (Eq.refl Nat 1000)"


def test_backtrack_restores_structural_hash(prop_problem):
    st = refine.Store(prop_problem.env, prop_problem.goal)
    h0 = st.structural_hash()
    root = st.root
    ch = None
    for cand in refine.candidates(st, root):
        ch = refine.refine(st, root, cand)
        if ch is not None:
            break
    assert ch is not None
    assert st.structural_hash() != h0
    refine.backtrack(st, root)
    assert st.structural_hash() == h0


def test_backtrack_restores_after_decomposition(prop_problem):
    st = refine.Store(prop_problem.env, prop_problem.goal)
    h0 = st.structural_hash()
    root = st.root
    target = [c for c in refine.candidates(st, root) if c.name == "False.rec"]
    ch = refine.refine(st, root, target[0])
    assert ch is not None
    n_eqs = len(st.equations)
    refine.backtrack(st, root)
    assert st.structural_hash() == h0
    assert len(st.equations) < n_eqs or not st.equations


@pytest.mark.parametrize("seed", [3, 11, 42])
def test_randomized_walks_restore_hash(prop_problem, seed):
    st = refine.Store(prop_problem.env, prop_problem.goal)
    h0 = st.structural_hash()
    rng = random.Random(seed)
    for _ in range(50):
        done = random_walk(st, rng)
        unwind(st, done)
        assert st.structural_hash() == h0


def test_rigid_equation_of_prefers_oldest_rigid():
    src = "axiom A : Sort\naxiom c : A\ngoal : A"
    p, st = make_store(src)
    meta = fresh_meta(st, "A", p)
    other = fresh_meta(st, "A", p)
    st.trail.note_trunc(st.equations)
    flex = equations.new_equation(
        st, (Clo(meta.hole, st.env_subst), ()),
        (Clo(other.hole, st.env_subst), ()))
    assert equations.process(st, flex)
    assert equations.rigid_equation_of(st, meta) is None  # flex-flex only
    rig1 = equations.new_equation(
        st, (Clo(meta.hole, st.env_subst), ()),
        (Clo(env_ref(st, "c"), st.env_subst), ()))
    assert equations.process(st, rig1)
    rig2 = equations.new_equation(
        st, (Clo(meta.hole, st.env_subst), ()),
        (Clo(env_ref(st, "c"), st.env_subst), ()))
    assert equations.process(st, rig2)
    assert equations.rigid_equation_of(st, meta) is rig1


def test_violation_soundness_by_enumeration():
    """When process says Violated, brute-force assignment of the remaining
    metas never makes the sides equal."""
    src = ("axiom A : Sort\naxiom c : A\naxiom d : A\n"
           "axiom f : (x : A) -> (y : A) -> A\naxiom g : (x : A) -> A\ngoal : A")
    p, st = make_store(src)
    env = p.env
    heads = ["c", "d"]

    def assignments(metas):
        for combo in itertools.product(heads, repeat=len(metas)):
            yield combo

    cases = [
        ("g", "c", "f"),   # g ?m vs f c c  (head clash)
    ]
    ma = fresh_meta(st, "A", p)
    lhs = core.Term((), (), env.slot_of["g"], (ma.hole,))
    rhs = frontend.parse_term(p, "f c c", expected=p.goal)
    st.trail.note_trunc(st.equations)
    eq = equations.new_equation(st, (Clo(lhs, st.env_subst), ()),
                                (Clo(rhs, st.env_subst), ()))
    assert not equations.process(st, eq)
    for (hd,) in assignments([ma]):
        la = core.Term((), (), env.slot_of["g"],
                       (core.Term((), (), env.slot_of[hd], ()),))
        assert not oracle.normal_form_equal(env, la, rhs)
