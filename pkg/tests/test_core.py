import pytest

from inhabit import core, frontend
from conftest import NAT_SRC, problem


def test_arity_of_single_binder(nat_problem):
    env = nat_problem.env
    succ = env.bindings[env.slot_of["Nat.succ"]]
    assert core.arity_of(succ.typ) == 1


def test_arity_of_empty_telescope(nat_problem):
    env = nat_problem.env
    nat = env.bindings[env.slot_of["Nat"]]
    assert core.arity_of(nat.typ) == 0


def test_arity_of_recursor_is_four(nat_problem):
    # motive, two minor premises, major argument
    env = nat_problem.env
    rec = env.bindings[env.slot_of["Nat.rec"]]
    assert core.arity_of(rec.typ) == 4


def test_environment_requires_sort():
    t = core.Term((), (), 0, ())
    with pytest.raises(core.CoreError):
        core.Environment((core.LetBinding("Zort", core.Typ((), (), t)),))


def test_environment_rejects_defined_sort():
    t = core.Term((), (), 0, ())
    b = core.LetBinding("Sort", core.Typ((), (), t), core.Term((), (), 0, ()))
    with pytest.raises(core.CoreError):
        core.Environment((b,))


def test_term_key_ignores_binder_names():
    a = core.Term(("x",), (), 0, ())
    b = core.Term(("y",), (), 0, ())
    assert core.term_key(a) == core.term_key(b)


def test_shift_term_respects_cutoff():
    # fun x => f x  with f one level out: shifting above the binder moves f only
    t = core.Term(("x",), (), 1, (core.Term((), (), 0, ()),))
    s = core.shift_term(t, 3, 0)
    assert s.head == 4
    assert s.args[0].head == 0


def test_proof_length_counts_every_reference(nat_problem):
    t = frontend.parse_term(nat_problem, "add (Nat.succ Nat.zero) Nat.zero")
    # heads: add, succ, zero, zero
    assert core.proof_length(t) == 4


def test_proof_length_includes_let_definitions():
    p = problem(NAT_SRC)
    t = frontend.parse_term(
        p, "let k : Nat := Nat.succ Nat.zero in add k k")
    assert core.proof_length(t) == 1 + 2 + 2  # add, k, k, succ, zero
