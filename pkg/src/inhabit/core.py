"""Single-constructor term and type syntax.

Every term is beta-normal and eta-long (BNEL): one node shape
``fun params => let lets := ... in head args`` where the head is a de Bruijn
reference and is applied to exactly as many arguments as its type demands.
Types are the same shape with annotated binders and a codomain spine.

Index convention: index 0 is the first slot of the innermost telescope; a
telescope contributes ``len(params) + len(lets)`` consecutive slots (params
first, in order, then lets), and larger indices continue into the enclosing
telescope.  The outermost telescope is the environment's let block.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

_uids = itertools.count(1)

# Incremented on every Term allocation; tests use it to verify that reduction
# shares structure instead of copying.
TERM_ALLOCS = 0


class CoreError(Exception):
    pass


class UnresolvedSymbol(CoreError):
    pass


class ArityError(CoreError):
    pass


@dataclass(eq=False)
class Term:
    params: tuple[str, ...]
    lets: tuple["LetBinding", ...]
    head: int
    args: tuple["Term", ...]  # may contain machine.Hole during search
    uid: int = field(default=0)

    def __post_init__(self):
        global TERM_ALLOCS
        TERM_ALLOCS += 1
        if not self.uid:
            self.uid = next(_uids)
        self.nb = len(self.params)
        self.tele = self.nb + len(self.lets)

    def __repr__(self):
        return f"<Term #{self.uid} head={self.head} |params|={len(self.params)} |args|={len(self.args)}>"


@dataclass(eq=False)
class Typ:
    params: tuple[tuple[str, Optional["Typ"]], ...]
    lets: tuple["LetBinding", ...]
    codomain: Term  # bare spine: codomain.params == () and codomain.lets == ()
    uid: int = field(default=0)

    def __post_init__(self):
        if not self.uid:
            self.uid = next(_uids)
        self.origin = -1  # stable serial, assigned when a problem is built
        assert not self.codomain.params and not self.codomain.lets

    def __repr__(self):
        return f"<Typ #{self.uid} arity={len(self.params)}>"


@dataclass(eq=False)
class LetBinding:
    name: str
    typ: Optional[Typ] = None          # absent: not usable as a head symbol
    definition: Optional[Term] = None  # absent: opaque constant
    reduction: Optional["ReductionInfo"] = None

    def __post_init__(self):
        if isinstance(self.reduction, Recursor):
            assert self.definition is None


@dataclass(eq=False)
class Recursor:
    n_prelude: int          # inductive params + motive + minor premises
    n_indices: int
    major: int              # spine position of the major argument
    owner: int              # environment slot of the inductive type former
    rules: dict[int, Term]  # constructor slot -> reduct, see frame note below
    # Rule frame: one telescope [recursor spine slots ++ constructor argument
    # slots] directly over the environment.


@dataclass(eq=False)
class Projection:
    n_params: int    # structure params preceding the subject argument
    field_index: int
    ctor: int        # environment slot of the structure constructor
    owner: int


@dataclass(eq=False)
class Constructor:
    owner: int  # environment slot of the inductive type former
    index: int
    n_params: int
    n_fields: int


ReductionInfo = Union[Recursor, Projection, Constructor]


class Environment:
    """The top-level let telescope; all constants live here."""

    def __init__(self, bindings: tuple[LetBinding, ...]):
        self.bindings = bindings
        self.slot_of = {b.name: i for i, b in enumerate(bindings)}
        if len(self.slot_of) != len(bindings):
            raise CoreError("duplicate environment binding")
        sorts = [i for i, b in enumerate(bindings) if b.name == "Sort"]
        if len(sorts) != 1:
            raise CoreError("environment must bind Sort exactly once")
        self.sort_slot = sorts[0]
        s = bindings[self.sort_slot]
        if s.definition is not None or s.typ is None:
            raise CoreError("Sort must be an opaque typed constant")
        if s.typ.params or s.typ.codomain.head != self.sort_slot:
            raise CoreError("Sort's type must be Sort itself")

    def __len__(self):
        return len(self.bindings)

    def name(self, slot: int) -> str:
        return self.bindings[slot].name


def arity_of(typ: Typ) -> int:
    """Number of arguments a head of this type receives (= binders a term of
    this type carries)."""
    return len(typ.params)


def telescope_len(node) -> int:
    if isinstance(node, Typ):
        return len(node.params) + len(node.lets)
    return len(node.params) + len(node.lets)


def shift_term(t: Term, by: int, cutoff: int = 0) -> Term:
    """Add `by` to every free index >= cutoff."""
    if by == 0:
        return t
    inner = cutoff + len(t.params) + len(t.lets)
    lets = tuple(
        LetBinding(
            l.name,
            shift_typ(l.typ, by, inner) if l.typ else None,
            shift_term(l.definition, by, inner) if l.definition else None,
            l.reduction,
        )
        for l in t.lets
    )
    head = t.head + by if t.head >= inner else t.head
    args = tuple(shift_term(a, by, inner) for a in t.args)
    return Term(t.params, lets, head, args)


def shift_typ(ty: Typ, by: int, cutoff: int = 0) -> Typ:
    if by == 0:
        return ty
    inner = cutoff + len(ty.params) + len(ty.lets)
    params = tuple(
        (n, shift_typ(p, by, inner) if p else None) for n, p in ty.params
    )
    lets = tuple(
        LetBinding(
            l.name,
            shift_typ(l.typ, by, inner) if l.typ else None,
            shift_term(l.definition, by, inner) if l.definition else None,
            l.reduction,
        )
        for l in ty.lets
    )
    return Typ(params, lets, shift_term(ty.codomain, by, inner))


def term_key(t: Term):
    """Structural identity; binder names are documentation only."""
    return (
        len(t.params),
        tuple(let_key(l) for l in t.lets),
        t.head,
        tuple(term_key(a) for a in t.args),
    )


def typ_key(ty: Optional[Typ]):
    if ty is None:
        return None
    return (
        tuple(typ_key(p) for _, p in ty.params),
        tuple(let_key(l) for l in ty.lets),
        term_key(ty.codomain),
    )


def let_key(l: LetBinding):
    return (
        typ_key(l.typ),
        term_key(l.definition) if l.definition else None,
        l.reduction is not None,
    )


def proof_length(t: Term) -> int:
    """Symbol-reference count: every head occurrence (constants, free and
    bound variables, sorts, literals, projections), excluding binder type
    annotations."""
    n = 1
    for a in t.args:
        n += proof_length(a)
    for l in t.lets:
        if l.definition is not None:
            n += proof_length(l.definition)
    return n


def iter_nodes(t: Term):
    yield t
    for a in t.args:
        if isinstance(a, Term):
            yield from iter_nodes(a)
    for l in t.lets:
        if l.definition is not None:
            yield from iter_nodes(l.definition)
