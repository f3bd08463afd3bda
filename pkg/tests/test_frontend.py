import pytest

from inhabit import core, frontend, oracle, printer
from inhabit.wellformed import check_wellformed
from conftest import problem


def test_parse_inductive_block():
    decls, _ = frontend.parse(
        "inductive Nat : Sort where\n| zero : Nat\n| succ : (n : Nat) -> Nat\n"
        "goal : Nat")
    assert decls[0].kind == "inductive"
    assert [c for c, _ in decls[0].members] == ["zero", "succ"]


def test_parse_def_and_goal():
    decls, _ = frontend.parse(
        "def id : (A : Sort) -> (a : A) -> A := fun A a => a\ngoal : Sort")
    assert decls[0].kind == "def" and decls[0].name == "id"


def test_parse_goal_with_alias():
    p = problem("""
structure And (a : Sort) (b : Sort) where
  left : a
  right : b
inductive False : Sort where
def Not : (a : Sort) -> Sort := fun a => (x : a) -> False
axiom A : Sort
axiom B : Sort
goal : (h : And A (Not A)) -> B
""")
    shown = printer.print_typ(p.env, p.goal)
    # Not unfolded pervasively; the arrow argument becomes a Pi instance
    assert "Not" not in shown
    assert "Pi A" in shown


def test_parse_errors_located():
    with pytest.raises(frontend.SyntaxErr):
        frontend.parse("goal : (x :")
    with pytest.raises(frontend.DuplicateName):
        frontend.build_problem("axiom A : Sort\naxiom A : Sort\ngoal : A")
    with pytest.raises(frontend.MissingGoal):
        frontend.build_problem("axiom A : Sort")


def test_pragmas():
    p = problem("axiom A : Sort\ngoal : A\n#count 5\n#timeout 9\n#synth")
    assert p.config == {"count": 5, "timeout": 9.0, "synth": True}
    p2 = problem("axiom A : Sort\ngoal : A\n#count inf")
    assert p2.config == {"count": None}


def test_nat_recursor_shape(nat_problem):
    env = nat_problem.env
    rec = env.bindings[env.slot_of["Nat.rec"]]
    assert core.arity_of(rec.typ) == 4
    red = rec.reduction
    assert isinstance(red, core.Recursor)
    assert red.n_prelude == 3 and red.n_indices == 0 and red.major == 3
    assert set(red.rules) == {env.slot_of["Nat.zero"], env.slot_of["Nat.succ"]}


def test_vec_recursor_motive_abstracts_index():
    p = problem("""
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat
axiom A : Sort
inductive Vec (T : Sort) : (n : Nat) -> Sort where
| vnil : Vec T Nat.zero
| vcons : (a : T) -> (n : Nat) -> (t : Vec T n) -> Vec T (Nat.succ n)
goal : Vec A Nat.zero
""")
    env = p.env
    rec = env.bindings[env.slot_of["Vec.rec"]]
    assert core.arity_of(rec.typ) == 6  # T, motive, 2 minors, index, major
    motive = rec.typ.params[1][1]
    assert core.arity_of(motive) == 2  # index and subject
    red = rec.reduction
    assert red.n_indices == 1 and red.major == 5


def test_structure_projections():
    p = problem("""
structure And (a : Sort) (b : Sort) where
  left : a
  right : b
axiom A : Sort
axiom B : Sort
goal : (h : And A B) -> A
""")
    env = p.env
    left = env.bindings[env.slot_of["And.left"]]
    right = env.bindings[env.slot_of["And.right"]]
    assert isinstance(left.reduction, core.Projection)
    assert left.reduction.field_index == 0
    assert right.reduction.field_index == 1
    t = frontend.parse_term(p, "fun h => And.left A B h")
    assert oracle.oracle_check(env, t, p.goal).accepted


def test_translate_id_over_application_matches_wrapper_form():
    p = problem("""
axiom A : Sort
axiom B : Sort
axiom f : (a : A) -> B
axiom a : A
def id : (T : Sort) -> (x : T) -> T := fun T x => x
goal : B
""")
    t = frontend.parse_term(p, "id (A -> B) f a")
    shown = printer.print_term(p.env, t)
    assert shown == ("Pi.f A (fun a_1 => B) (id (Pi A (fun a_1 => B)) "
                     "(Pi.mk A (fun a_1 => B) (fun a_2 => f a_2))) a")
    assert oracle.oracle_check(p.env, t, p.goal).accepted


def test_translate_beta_redex_to_let():
    p = problem("axiom A : Sort\ngoal : (y : (a : A) -> A) -> (a : A) -> A")
    t = frontend.parse_term(p, "fun y => (fun x => x) y")
    assert t.lets and t.lets[0].name == "x"
    assert oracle.oracle_check(p.env, t, p.goal).accepted


def test_translate_eta_expands_bare_constructor():
    p = problem("""
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat
axiom use : (f : (n : Nat) -> Nat) -> Nat
goal : Nat
""")
    t = frontend.parse_term(p, "use Nat.succ")
    shown = printer.print_term(p.env, t)
    assert shown == "use (fun n => Nat.succ n)"


def test_literal_policy():
    p = problem("""
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat
axiom P : (a : Nat) -> (b : Nat) -> Sort
axiom w : (a : Nat) -> (b : Nat) -> P a b
goal : P 3 1000
""")
    env = p.env
    small = env.bindings[env.slot_of["3"]]
    big = env.bindings[env.slot_of["1000"]]
    assert small.typ is None and small.definition is not None
    assert oracle.normal_form_equal(
        env, small.definition,
        frontend.parse_term(p, "Nat.succ (Nat.succ (Nat.succ Nat.zero))",
                            expected=_nat_typ(p)))
    assert big.typ is not None and big.definition is None


def _nat_typ(p):
    decls, _ = frontend.parse("goal : Nat")
    return p._elab.translate_typ(decls[0].result, p._elab.scope0())


def test_plain_definition_gets_no_type():
    p = problem("""
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat
def zero' : Nat := Nat.zero
def use : (n : Nat) -> Nat := fun n => zero'
goal : Nat
""")
    env = p.env
    assert env.bindings[env.slot_of["zero'"]].typ is None
    assert env.bindings[env.slot_of["use"]].typ is None


def test_recursor_bearing_definition_keeps_type(nat_problem):
    env = nat_problem.env
    add = env.bindings[env.slot_of["add"]]
    assert add.typ is not None


def test_cyclic_definition_rejected():
    with pytest.raises(frontend.CyclicDefinition):
        problem("""
axiom A : Sort
def x : A := y
def y : A := x
goal : A
""")


def test_non_positive_occurrence_rejected():
    with pytest.raises(frontend.NonPositiveOccurrence):
        problem("""
inductive Bad : Sort where
| mk : (f : (x : Bad) -> Bad) -> Bad
goal : Sort
""")


def test_pi_not_emitted_without_need():
    p = problem("axiom A : Sort\ngoal : (a : A) -> A")
    assert "Pi" not in p.env.slot_of


def test_environment_wellformed(corpus_paths):
    """Typed definitions check against their declared types."""
    for path in corpus_paths:
        p = problem(path.read_text(), path.name)
        for b in p.env.bindings:
            if b.typ is not None and b.definition is not None:
                rep = check_wellformed(p.env, b.definition, b.typ)
                assert rep.ok, (path.name, b.name, rep)


def test_roundtrip_corpus_problems(corpus_paths):
    """print(parse(x)) reparses to structurally identical core syntax."""
    for path in corpus_paths:
        p = problem(path.read_text(), path.name)
        for b in p.env.bindings:
            if b.definition is None or b.name.isdigit():
                continue
            shown = printer.print_term(p.env, b.definition)
            again = frontend.parse_term(p, shown, expected=b.typ) \
                if b.typ is not None else None
            if again is not None:
                assert core.term_key(again) == core.term_key(b.definition), \
                    (path.name, b.name, shown)


def test_translation_idempotence(nat_problem):
    t = frontend.parse_term(
        nat_problem, "add (Nat.succ Nat.zero) (add Nat.zero Nat.zero)")
    shown = printer.print_term(nat_problem.env, t)
    t2 = frontend.parse_term(nat_problem, shown)
    assert core.term_key(t) == core.term_key(t2)
