import pathlib
import random

import pytest

from inhabit import frontend, refine

CORPUS = pathlib.Path(__file__).resolve().parent.parent / "corpus"

NAT_SRC = """
inductive Nat : Sort where
| zero : Nat
| succ : (n : Nat) -> Nat

def add : (n : Nat) -> (m : Nat) -> Nat :=
  fun n m => Nat.rec (fun t => Nat) n (fun k ih => Nat.succ ih) m

goal : Nat
"""

BOOL_AX_SRC = """
axiom Bool : Sort
axiom true : Bool
axiom false : Bool
goal : (b : Bool) -> Bool
"""

PROP_SRC = """
structure And (a : Sort) (b : Sort) where
  left : a
  right : b

inductive False : Sort where

def Not : (a : Sort) -> Sort := fun a => (x : a) -> False

axiom A : Sort
axiom B : Sort

goal : (h : And A (Not A)) -> B
"""


def problem(src, name="<test>"):
    return frontend.build_problem(src, name)


@pytest.fixture
def nat_problem():
    return problem(NAT_SRC)


@pytest.fixture
def bool_ax_problem():
    return problem(BOOL_AX_SRC)


@pytest.fixture
def prop_problem():
    return problem(PROP_SRC)


@pytest.fixture
def corpus_paths():
    paths = sorted(CORPUS.glob("*.canon"))
    assert paths, "bundled corpus missing"
    return paths


def random_walk(store, rng, max_steps=6):
    """Random refine steps; returns the stack of refined metas (LIFO)."""
    done = []
    for _ in range(max_steps):
        if not store.unassigned:
            break
        mid = rng.choice(sorted(store.unassigned))
        meta = store.unassigned[mid]
        cands = refine.candidates(store, meta)
        if not cands:
            break
        cand = cands[rng.randrange(len(cands))]
        children = refine.refine(store, meta, cand)
        if children is not None:
            done.append(meta)
    return done


def unwind(store, done):
    for meta in reversed(done):
        refine.backtrack(store, meta)
