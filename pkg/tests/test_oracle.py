from inhabit import core, frontend, oracle, printer
from inhabit.wellformed import check_wellformed
from conftest import PROP_SRC, problem


def test_oracle_accepts_explosion_term(prop_problem):
    t = frontend.parse_term(
        prop_problem,
        "fun h => False.rec (fun t => B) "
        "(Pi.f A (fun a => False) (And.right A (Pi A (fun a => False)) h) "
        "(And.left A (Pi A (fun a => False)) h))")
    assert oracle.oracle_check(prop_problem.env, t, prop_problem.goal).accepted


def test_oracle_accepts_eq_trans_term():
    p = problem("""
inductive Eq (A : Sort) (x : A) : (y : A) -> Sort where
| refl : Eq A x x
axiom T : Sort
goal : (a : T) -> (b : T) -> (c : T) -> (h1 : Eq T a b) -> (h2 : Eq T b c) -> Eq T a c
""")
    t = frontend.parse_term(
        p, "fun a b c h1 h2 => Eq.rec T b (fun y t => Eq T a y) h1 c h2")
    assert oracle.oracle_check(p.env, t, p.goal).accepted


def test_oracle_rejects_wrong_codomain():
    p = problem("axiom A : Sort\naxiom B : Sort\ngoal : (a : A) -> B")
    bad = frontend.parse_term(p, "fun a => a")
    rep = oracle.oracle_check(p.env, bad, p.goal)
    assert not rep.accepted


def test_enumerate_bool_axioms():
    p = problem("axiom Bool : Sort\naxiom true : Bool\naxiom false : Bool\n"
                "goal : Bool")
    terms = oracle.enumerate_bnel(p.env, p.goal, 4)
    names = sorted(printer.print_term(p.env, t) for t in terms)
    assert names == ["false", "true"]


def test_enumerate_bool_fn_three():
    p = problem("axiom Bool : Sort\naxiom true : Bool\naxiom false : Bool\n"
                "goal : (b : Bool) -> Bool")
    terms = oracle.enumerate_bnel(p.env, p.goal, 4)
    assert len(terms) == 3


def test_enumerate_uninhabited_is_empty():
    p = problem("goal : (A : Sort) -> A")
    assert oracle.enumerate_bnel(p.env, p.goal, 4) == []


def test_enumerate_has_no_duplicates():
    p = problem("axiom Bool : Sort\naxiom true : Bool\naxiom false : Bool\n"
                "goal : (b : Bool) -> (c : Bool) -> Bool")
    terms = oracle.enumerate_bnel(p.env, p.goal, 4)
    keys = [core.term_key(t) for t in terms]
    assert len(keys) == len(set(keys))
    assert len(terms) == 4  # b, c, true, false


def test_oracle_agrees_with_checker(corpus_paths):
    """Two independent implementations of the typing relation agree on
    solver-shaped terms from across the corpus."""
    from inhabit import search
    checked = 0
    for path in corpus_paths:
        if path.stem in ("wide_env", "false_goal"):
            continue
        p = problem(path.read_text(), path.name)
        cfg = search.SearchConfig(timeout=15)
        cfg.count = min(p.config.get("count") or 1, 5)
        cfg.synthesis = bool(p.config.get("synth"))
        terms, _, _ = search.solve(p, cfg)
        for t in terms:
            a = oracle.oracle_check(p.env, t, p.goal).accepted
            b = check_wellformed(p.env, t, p.goal).ok
            assert a and b, path.name
            checked += 1
    assert checked >= 15


def test_oracle_rejection_has_a_path():
    p = problem("axiom A : Sort\naxiom B : Sort\n"
                "axiom f : (x : A) -> (y : A) -> B\naxiom a : A\naxiom b : B\n"
                "goal : B")
    bad = core.Term((), (), p.env.slot_of["f"],
                    (core.Term((), (), p.env.slot_of["a"], ()),
                     core.Term((), (), p.env.slot_of["b"], ())))
    rep = oracle.oracle_check(p.env, bad, p.goal)
    assert not rep.accepted
    assert rep.path == (1,)
