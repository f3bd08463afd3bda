"""Explicit-substitution reduction: closures, constant-time beta extension,
weak-head normal forms with delta/iota/projection rules, and head comparison.

A closure pairs a syntax node with a substitution chain mapping its free
indices to entries.  An entry is either a `Rigid` (a free variable: a binder
we have walked under, or an opaque environment constant) or another closure.
Beta reduction extends the chain with one new block and never copies syntax.
"""

from __future__ import annotations

from . import core
from .core import Recursor, Projection, Constructor


class MachineError(Exception):
    pass


class FuelExhausted(MachineError):
    """Head reduction did not terminate; the environment is ill-founded."""


class StuckInput(MachineError):
    pass


class BinderCountMismatch(MachineError):
    pass


class Subst:
    __slots__ = ("block", "tail")

    def __init__(self, block, tail):
        self.block = block  # list of entries; fixed once built
        self.tail = tail

    def lookup(self, index):
        s = self
        while s is not None:
            n = len(s.block)
            if index < n:
                e = s.block[index]
                if e is None:
                    raise core.UnresolvedSymbol("forward telescope reference")
                return e
            index -= n
            s = s.tail
        raise core.UnresolvedSymbol(f"dangling index (+{index})")

    def __repr__(self):
        depth = 0
        s = self
        while s is not None:
            depth += 1
            s = s.tail
        return f"<Subst {len(self.block)}@{depth}>"


class Rigid:
    __slots__ = ("level", "name", "typ", "reduction", "slot")

    def __init__(self, level, name, typ=None, reduction=None, slot=None):
        self.level = level
        self.name = name
        self.typ = typ            # Clo over a Typ, or None (not a head candidate)
        self.reduction = reduction
        self.slot = slot          # environment slot for constants, else None

    def __repr__(self):
        return f"!{self.name}.{self.level}"


class Clo:
    __slots__ = ("node", "subst")

    def __init__(self, node, subst):
        self.node = node  # core.Term | core.Typ | Hole
        self.subst = subst

    def __repr__(self):
        return f"<{self.node!r}{self.subst!r}>"


class Hole:
    """Occurrence of a metavariable inside syntax."""

    __slots__ = ("meta",)

    def __init__(self, meta):
        self.meta = meta

    def __repr__(self):
        return f"?{self.meta.id}"


# Weak-head forms ------------------------------------------------------------

class Head:
    __slots__ = ("head", "spine")

    def __init__(self, head, spine):
        self.head = head    # Rigid
        self.spine = spine  # tuple of entries (Rigid | Clo)

    def __repr__(self):
        return f"Head({self.head}, {len(self.spine)})"


class Abs:
    """An abstraction that was not given arguments."""

    __slots__ = ("n", "clo")

    def __init__(self, n, clo):
        self.n = n
        self.clo = clo


class StuckMeta:
    __slots__ = ("meta", "subst", "spine")

    def __init__(self, meta, subst, spine):
        self.meta = meta
        self.subst = subst
        self.spine = spine

    def __repr__(self):
        return f"StuckMeta(?{self.meta.id}, {len(self.spine)})"


class StuckRed:
    """A recursor or projection whose major argument is stuck on a meta."""

    __slots__ = ("head", "spine", "meta")

    def __init__(self, head, spine, meta):
        self.head = head
        self.spine = spine
        self.meta = meta

    def __repr__(self):
        return f"StuckRed({self.head}, ?{self.meta.id})"


EQUAL = "equal"
UNEQUAL = "unequal"
UNKNOWN = "unknown"

DEFAULT_FUEL = 100_000


def build_env_table(env: core.Environment):
    """Entry block for the environment telescope: opaque bindings become
    stable rigids (level = slot), defined bindings become closures over the
    same block."""
    block = []
    subst = Subst(block, None)
    for slot, b in enumerate(env.bindings):
        if b.definition is not None:
            block.append(Clo(b.definition, subst))
        else:
            typ = Clo(b.typ, subst) if b.typ is not None else None
            block.append(Rigid(slot, b.name, typ, b.reduction, slot))
    return subst


class Machine:
    """Reduction engine for one problem; shares the environment table."""

    def __init__(self, env: core.Environment, env_subst: Subst | None = None,
                 fuel: int = DEFAULT_FUEL):
        self.env = env
        self.env_subst = env_subst if env_subst is not None else build_env_table(env)
        self.fuel = fuel
        self._next_level = len(env.bindings)

    def fresh_rigid(self, name, typ=None, reduction=None):
        r = Rigid(self._next_level, name, typ, reduction)
        self._next_level += 1
        return r

    def extend(self, node, subst, param_entries):
        """Push one telescope block: the given entries for params, then let
        entries built from the node's own let bindings (defined lets close
        circularly over the new block)."""
        block = list(param_entries)
        new = Subst(block, subst)
        for l in node.lets:
            if l.definition is not None:
                block.append(Clo(l.definition, new))
            else:
                t = Clo(l.typ, new) if l.typ is not None else None
                block.append(Rigid(self._next_level, l.name, t, l.reduction))
                self._next_level += 1
        return new

    # -- reduction -----------------------------------------------------------

    def whnf(self, entry, spine=(), fuel=None):
        """Reduce to a weak-head form.  `spine` holds pending argument
        entries beyond those attached to the node itself."""
        budget = self.fuel if fuel is None else fuel
        spine = list(spine)
        while True:
            if budget <= 0:
                raise FuelExhausted("head reduction exceeded fuel")
            budget -= 1

            if type(entry) is Rigid:
                red = entry.reduction
                if red is not None and type(red) is not Constructor:
                    res = self._reduce_annotated(entry, red, spine, budget)
                    if type(res) is tuple:
                        entry, spine = res
                        continue
                    return res
                return Head(entry, tuple(spine))

            node, subst = entry.node, entry.subst

            if type(node) is Hole:
                meta = node.meta
                value = meta.value_node
                if value is None:
                    return StuckMeta(meta, subst, tuple(spine))
                node = value  # value syntax is read under the occurrence subst

            p = node.nb
            if node.tele:
                if len(spine) < p:
                    if spine:
                        raise MachineError("under-applied abstraction")
                    return Abs(p, Clo(node, subst))
                subst = self.extend(node, subst, spine[:p])
                spine = spine[p:]

            if node.args:
                spine = [Clo(a, subst) for a in node.args] + spine
            entry = subst.lookup(node.head)

    def _reduce_annotated(self, rigid, red, spine, budget):
        """Try an iota or projection step.  Returns a Whnf, or a pair
        (entry, spine) to continue reducing."""
        if type(red) is Recursor:
            arity = red.n_prelude + red.n_indices + 1
            if len(spine) < arity:
                return Head(rigid, tuple(spine))
            major = self.whnf(spine[red.major], (), budget)
            if type(major) is Head:
                h = major.head
                if h.slot is not None and h.slot in red.rules:
                    rule = red.rules[h.slot]
                    block = list(spine[:arity]) + list(major.spine)
                    return (Clo(rule, Subst(block, self.env_subst)), spine[arity:])
                return Head(rigid, tuple(spine))
            if type(major) is StuckMeta:
                return StuckRed(rigid, tuple(spine), major.meta)
            if type(major) is StuckRed:
                return StuckRed(rigid, tuple(spine), major.meta)
            raise MachineError("abstraction in major argument position")
        else:  # Projection
            pos = red.n_params
            if len(spine) < pos + 1:
                return Head(rigid, tuple(spine))
            subj = self.whnf(spine[pos], (), budget)
            if type(subj) is Head:
                h = subj.head
                if h.slot == red.ctor:
                    field = subj.spine[red.n_params + red.field_index]
                    return (field, spine[pos + 1:])
                return Head(rigid, tuple(spine))
            if type(subj) is StuckMeta:
                return StuckRed(rigid, tuple(spine), subj.meta)
            if type(subj) is StuckRed:
                return StuckRed(rigid, tuple(spine), subj.meta)
            raise MachineError("abstraction in subject position")

    # -- comparison ----------------------------------------------------------

    def heads_equal(self, a, b, synthesis=False):
        """Tri-state comparison of two weak-head forms that are not bare
        stuck metas."""
        if type(a) is StuckMeta or type(b) is StuckMeta:
            raise StuckInput("caller must suspend on stuck metas")
        if synthesis and (type(a) is StuckRed or type(b) is StuckRed):
            return UNKNOWN
        ha = a.head
        hb = b.head
        return EQUAL if ha is hb else UNEQUAL

    def enter_binders(self, a, b, n):
        """Apply both sides to the same n fresh rigids.

        A side is (entry, spine); bare metavariable occurrences simply gain
        the rigids as a pending spine.
        """
        for side in (a, b):
            entry, pending = side
            node = entry.node if type(entry) is Clo else None
            if (type(node) is core.Term and node.params and not pending
                    and len(node.params) != n):
                raise BinderCountMismatch(f"{len(node.params)} binders, expected {n}")
        rigids = [self.fresh_rigid(f"x{i}") for i in range(n)]
        ea, sa = a
        eb, sb = b
        return (ea, tuple(sa) + tuple(rigids)), (eb, tuple(sb) + tuple(rigids))

    def syntactic_binders(self, side):
        """Binder count a side will expose, judged without reduction: the
        node's own params, or the arity of a bare hole's typing telescope."""
        entry, spine = side
        if type(entry) is not Clo:
            return 0
        node = entry.node
        if type(node) is Hole:
            meta = node.meta
            if meta.value_node is not None:
                node = meta.value_node
            else:
                ar = meta.arity
                return ar - len(spine) if ar > len(spine) else 0
        if node.nb and not spine:
            return node.nb
        return 0

    def decide_equal(self, a, b, fuel=None):
        """Total beta-equality on metavariable-free sides."""
        na = self.syntactic_binders(a)
        nb = self.syntactic_binders(b)
        if na or nb:
            a, b = self.enter_binders(a, b, max(na, nb))
        wa = self.whnf(a[0], a[1], fuel)
        wb = self.whnf(b[0], b[1], fuel)
        if type(wa) is Abs or type(wb) is Abs:
            if type(wa) is not type(wb):
                return False  # no structure-eta
            if wa.n != wb.n:
                return False
            a2, b2 = self.enter_binders((wa.clo, ()), (wb.clo, ()), wa.n)
            return self.decide_equal(a2, b2, fuel)
        if type(wa) is StuckMeta or type(wb) is StuckMeta:
            raise StuckInput("decide_equal requires meta-free input")
        if wa.head is not wb.head:
            return False
        if len(wa.spine) != len(wb.spine):
            return False
        for x, y in zip(wa.spine, wb.spine):
            if not self.decide_equal((x, ()), (y, ())):
                return False
        return True

    # -- readback ------------------------------------------------------------

    def reify(self, side, ctx, fuel=None):
        """Read a metavariable-free side back into core syntax.

        `ctx` lists the levels of bound rigids, innermost first; environment
        constants map to indices past the end of it.
        """
        w = self.whnf(side[0], side[1], fuel)
        if type(w) is Abs:
            node = w.clo.node
            n = w.n
            rigids = [self.fresh_rigid(node.params[i]) for i in range(n)]
            body = self.whnf(w.clo, rigids, fuel)
            inner = [r.level for r in rigids] + ctx
            spine = self._reify_head(body, inner, fuel)
            return core.Term(tuple(node.params), (), spine.head, spine.args)
        if type(w) is StuckMeta:
            raise StuckInput("cannot reify a stuck metavariable")
        return self._reify_head(w, ctx, fuel)

    def _reify_head(self, w, ctx, fuel):
        r = w.head
        if r.slot is not None:
            head = len(ctx) + r.slot
        else:
            try:
                head = ctx.index(r.level)
            except ValueError:
                raise MachineError(f"rigid {r} escapes its scope")
        args = tuple(self.reify((e, ()), ctx, fuel) for e in w.spine)
        return core.Term((), (), head, args)
