"""Independent validation layer: a naive substitution-based type checker and
a depth-bounded brute-force term enumerator.

Nothing here touches the explicit-substitution machine.  Checking converts
terms into a fully named form (every binder becomes a globally unique atom),
normalizes by eager capture-avoiding substitution with delta, beta, iota and
projection steps, and compares normal forms up to binder pairing.
Deliberately slow; inputs stay small.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from itertools import product

from . import core
from .core import Constructor, LetBinding, Projection, Recursor, Term, Typ

NODE_BUDGET = 1_000_000
DEPTH_BUDGET = 64


class OracleFuelExhausted(Exception):
    pass


class BudgetExceeded(Exception):
    pass


@dataclass
class OracleReport:
    accepted: bool
    reason: str = ""
    path: tuple = ()

    def __bool__(self):
        return self.accepted


class _Budget:
    __slots__ = ("nodes",)

    def __init__(self, nodes=NODE_BUDGET):
        self.nodes = nodes

    def spend(self, n=1):
        self.nodes -= n
        if self.nodes <= 0:
            raise OracleFuelExhausted("oracle node budget exhausted")


# --- core-level pre-inlining ---------------------------------------------------
# Local lets and untyped environment definitions are definitional sugar; the
# checker wants them substituted away first.

def shift(t: Term, by: int, cutoff: int = 0) -> Term:
    if by == 0:
        return t
    inner = cutoff + len(t.params) + len(t.lets)
    head = t.head + by if t.head >= inner else t.head
    return Term(t.params,
                tuple(LetBinding(l.name, None,
                                 shift(l.definition, by, inner)
                                 if l.definition else None, l.reduction)
                      for l in t.lets),
                head,
                tuple(shift(a, by, inner) for a in t.args))


def inst(t: Term, values: list, depth: int = 0) -> Term:
    """Dissolve the frame just outside t: references [0, k) become the given
    terms (expressed at the dissolution site), higher references drop by k."""
    k = len(values)
    inner = depth + len(t.params) + len(t.lets)
    args = tuple(inst(a, values, inner) for a in t.args)
    lets = tuple(LetBinding(l.name, None,
                            inst(l.definition, values, inner)
                            if l.definition else None, l.reduction)
                 for l in t.lets)
    head = t.head
    if head >= inner:
        free = head - inner
        if free < k:
            repl = shift(values[free], inner)
            out = apply_core(repl, list(args))
            if t.params or lets:
                if out.params or out.lets:
                    raise OracleFuelExhausted("binders collide during inst")
                return Term(t.params, lets, out.head, out.args)
            return out
        head = head - k
    return Term(t.params, lets, head, args)


def apply_core(f: Term, args: list) -> Term:
    if not args:
        return f
    p = len(f.params)
    if p == 0:
        return Term((), f.lets, f.head, tuple(f.args) + tuple(args))
    if len(args) < p:
        raise OracleFuelExhausted("under-application")
    body = Term((), f.lets, f.head, f.args)
    out = inst(body, list(args[:p]))
    return apply_core(out, list(args[p:]))


def _refs_band(t, start, k, depth=0):
    inner = depth + len(t.params) + len(t.lets)
    if inner + start <= t.head < inner + start + k:
        return True
    if any(_refs_band(a, start, k, inner) for a in t.args if isinstance(a, Term)):
        return True
    return any(_refs_band(l.definition, start, k, inner)
               for l in t.lets if l.definition is not None)


def presimplify(env: core.Environment, t: Term, depth: int = 0,
                budget: _Budget | None = None) -> Term:
    """Expand local lets and inline untyped environment definitions."""
    budget = budget or _Budget()
    budget.spend()
    P, L = len(t.params), len(t.lets)
    if L:
        defs = [l.definition for l in t.lets]
        if any(d is None for d in defs):
            raise OracleFuelExhausted("opaque local let")
        while True:
            busy = [i for i, d in enumerate(defs) if _refs_band(d, P, L)]
            if not busy:
                break
            progress = False
            for i in busy:
                if _self_band(defs[i], P + i):
                    raise OracleFuelExhausted("unguarded recursive let")
                deps = _band_refs(defs[i], P, L)
                if all(not _refs_band(defs[j], P, L) for j in deps):
                    defs[i] = _subst_band(defs[i], P, defs, budget)
                    progress = True
            if not progress:
                raise OracleFuelExhausted("cyclic let cluster")
        body = Term((), (), t.head, t.args)
        body = _subst_band(body, P, defs, budget)
        t = Term(t.params, (), body.head, body.args)
    inner = depth + P
    args = tuple(presimplify(env, a, inner, budget) if isinstance(a, Term) else a
                 for a in t.args)
    head = t.head
    if head >= P:
        slot = head - P - depth
        if 0 <= slot < len(env.bindings):
            b = env.bindings[slot]
            if b.definition is not None and b.typ is None and b.reduction is None:
                f = shift(b.definition, P + depth)
                out = apply_core(f, list(args))
                if out.params or out.lets:
                    raise OracleFuelExhausted("definition did not saturate")
                return presimplify(env, Term(t.params, (), out.head, out.args),
                                   depth, budget)
    return Term(t.params, (), head, args)


def _self_band(t, slot, depth=0):
    inner = depth + len(t.params) + len(t.lets)
    if t.head == inner + slot:
        return True
    return any(_self_band(a, slot, inner) for a in t.args if isinstance(a, Term))


def _band_refs(t, start, k, depth=0):
    inner = depth + len(t.params) + len(t.lets)
    out = set()
    if inner + start <= t.head < inner + start + k:
        out.add(t.head - inner - start)
    for a in t.args:
        if isinstance(a, Term):
            out |= _band_refs(a, start, k, inner)
    return out


def _subst_band(t, start, defs, budget, depth=0):
    """Replace references into the let band [start, start+k) by the (band-free)
    definitions and renumber the rest down by k."""
    budget.spend()
    k = len(defs)
    inner = depth + len(t.params) + len(t.lets)
    args = [_subst_band(a, start, defs, budget, inner) if isinstance(a, Term) else a
            for a in t.args]
    lets = tuple(LetBinding(l.name, None,
                            _subst_band(l.definition, start, defs, budget, inner)
                            if l.definition else None, l.reduction)
                 for l in t.lets)
    head = t.head
    if head >= inner:
        free = head - inner
        if start <= free < start + k:
            d = _drop_band(defs[free - start], start, k)
            repl = shift(d, inner)
            out = apply_core(repl, args)
            if t.params or lets:
                if out.params or out.lets:
                    raise OracleFuelExhausted("binders collide during let inlining")
                return Term(t.params, lets, out.head, out.args)
            return out
        if free >= start + k:
            head -= k
    return Term(t.params, lets, head, tuple(args))


def _drop_band(t, start, k, depth=0):
    inner = depth + len(t.params) + len(t.lets)
    head = t.head
    if head >= inner:
        free = head - inner
        if start <= free < start + k:
            raise OracleFuelExhausted("definition still references its band")
        if free >= start + k:
            head -= k
    return Term(t.params, t.lets, head,
                tuple(_drop_band(a, start, k, inner) if isinstance(a, Term) else a
                      for a in t.args))


# --- named form -------------------------------------------------------------------

_atom_ids = itertools.count(1)


class Atom:
    __slots__ = ("name", "uid")

    def __init__(self, name):
        self.name = name
        self.uid = next(_atom_ids)

    def __repr__(self):
        return f"{self.name}#{self.uid}"


class N:
    """Named term: binder atoms, a head (Atom or env slot int), arguments."""

    __slots__ = ("binders", "head", "args")

    def __init__(self, binders, head, args):
        self.binders = binders
        self.head = head
        self.args = args

    def __repr__(self):
        b = " ".join(repr(x) for x in self.binders)
        a = " ".join(repr(x) for x in self.args)
        return f"(\\{b}. {self.head!r} {a})" if self.binders else \
            f"({self.head!r} {a})" if self.args else repr(self.head)


class NT:
    """Named type: (atom, NT|None) binders and a codomain spine."""

    __slots__ = ("binders", "cod")

    def __init__(self, binders, cod):
        self.binders = binders
        self.cod = cod


def _aref(atom):
    return N((), atom, ())


def convert(t: Term, stack: list, budget) -> N:
    """stack[i] is the named value of de Bruijn index i past t's own block."""
    budget.spend()
    P, L = len(t.params), len(t.lets)
    atoms = [Atom(n) for n in t.params]
    stack2 = [_aref(a) for a in atoms] + [None] * L + list(stack)
    for j, l in enumerate(t.lets):
        if l.definition is None:
            raise OracleFuelExhausted("opaque local let in conversion")
        stack2[P + j] = _convert_at(l.definition, stack2, budget)
    args = [convert(a, stack2, budget) for a in t.args]
    body = _resolve(t.head, stack2, args, budget)
    if body.binders:
        raise OracleFuelExhausted("under-applied head in conversion")
    return N(tuple(atoms), body.head, body.args)


def _convert_at(t, stack2, budget):
    budget.spend()
    P, L = len(t.params), len(t.lets)
    if P or L:
        return convert(t, stack2, budget)
    args = [convert(a, stack2, budget) for a in t.args]
    return _resolve(t.head, stack2, args, budget)


def _resolve(idx, stack2, args, budget):
    if idx < len(stack2):
        v = stack2[idx]
        if v is None:
            raise OracleFuelExhausted("forward reference in let block")
        return apply_n(v, args, budget)
    return N((), idx - len(stack2), tuple(args))


def convert_typ(ty: Typ, stack: list, budget) -> NT:
    budget.spend()
    if ty.lets:
        raise OracleFuelExhausted("type-level lets are not supported here")
    atoms = [Atom(n) for n, _ in ty.params]
    stack2 = [_aref(a) for a in atoms] + list(stack)
    binders = []
    for i, (n, p) in enumerate(ty.params):
        binders.append((atoms[i],
                        convert_typ(p, stack2, budget) if p is not None else None))
    cod = _convert_at(ty.codomain, stack2, budget)
    return NT(tuple(binders), cod)


def apply_n(v: N, args, budget) -> N:
    if not args:
        return v
    budget.spend()
    b = len(v.binders)
    if b == 0:
        return N((), v.head, tuple(v.args) + tuple(args))
    if len(args) < b:
        raise OracleFuelExhausted("under-application in named form")
    amap = dict(zip(v.binders, args[:b]))
    body = subst_n(N((), v.head, v.args), amap, budget)
    return apply_n(body, list(args[b:]), budget)


def subst_n(n: N, amap: dict, budget) -> N:
    budget.spend()
    if n.binders:
        amap = {k: v for k, v in amap.items() if k not in n.binders}
        if not amap:
            return n
    args = [subst_n(a, amap, budget) for a in n.args]
    if isinstance(n.head, Atom) and n.head in amap:
        out = apply_n(amap[n.head], args, budget)
        if n.binders:
            if out.binders:
                raise OracleFuelExhausted("binders collide in substitution")
            return N(n.binders, out.head, out.args)
        return out
    return N(n.binders, n.head, tuple(args))


def subst_nt(nt: NT, amap: dict, budget) -> NT:
    own = {a for a, _ in nt.binders}
    amap = {k: v for k, v in amap.items() if k not in own}
    if not amap:
        return nt
    binders = tuple((a, subst_nt(p, amap, budget) if p is not None else None)
                    for a, p in nt.binders)
    return NT(binders, subst_n(nt.cod, amap, budget))


class _Defs:
    """Per-check caches of converted environment material."""

    def __init__(self, env, budget):
        self.env = env
        self.budget = budget
        self.defs = {}
        self.typs = {}

    def definition(self, slot):
        if slot not in self.defs:
            self.defs[slot] = convert(self.env.bindings[slot].definition, [],
                                      self.budget)
        return self.defs[slot]

    def typ(self, slot):
        if slot not in self.typs:
            self.typs[slot] = convert_typ(self.env.bindings[slot].typ, [],
                                          self.budget)
        return self.typs[slot]


def nf(defs: _Defs, n: N, fuel: int = DEPTH_BUDGET) -> N:
    """Full normal form: delta, beta, iota and projection, everywhere."""
    budget = defs.budget
    env = defs.env
    binders = n.binders
    head, args = n.head, list(n.args)
    while True:
        budget.spend()
        if fuel <= 0:
            raise OracleFuelExhausted("oracle depth budget exhausted")
        if not isinstance(head, int):
            break
        b = env.bindings[head]
        red = b.reduction
        if b.definition is not None and red is None:
            out = apply_n(defs.definition(head), args, budget)
            if out.binders:
                raise OracleFuelExhausted("definition did not saturate")
            head, args = out.head, list(out.args)
            fuel -= 1
            continue
        if type(red) is Recursor:
            arity = red.n_prelude + red.n_indices + 1
            if len(args) != arity:
                break
            major = nf(defs, args[red.major], fuel - 1)
            args[red.major] = major
            if isinstance(major.head, int) and major.head in red.rules:
                stack = args[:arity] + list(major.args)
                out = _convert_at(red.rules[major.head], stack, budget)
                if out.binders:
                    raise OracleFuelExhausted("rule did not saturate")
                head, args = out.head, list(out.args)
                fuel -= 1
                continue
            break
        if type(red) is Projection:
            pos = red.n_params
            if len(args) < pos + 1:
                break
            subj = nf(defs, args[pos], fuel - 1)
            args[pos] = subj
            if isinstance(subj.head, int) and subj.head == red.ctor:
                field = subj.args[red.n_params + red.field_index]
                out = apply_n(field, args[pos + 1:], budget)
                if out.binders:
                    raise OracleFuelExhausted("projection did not saturate")
                head, args = out.head, list(out.args)
                fuel -= 1
                continue
            break
        break
    return N(binders, head, tuple(nf(defs, a, fuel - 1) for a in args))


def eq_n(a: N, b: N, amap: dict | None = None) -> bool:
    """Alpha equality: a's atoms map onto b's."""
    amap = amap or {}
    if len(a.binders) != len(b.binders) or len(a.args) != len(b.args):
        return False
    if a.binders:
        amap = dict(amap)
        for x, y in zip(a.binders, b.binders):
            amap[x] = y
    ha = amap.get(a.head, a.head) if isinstance(a.head, Atom) else a.head
    hb = b.head
    if isinstance(ha, Atom) or isinstance(hb, Atom):
        if ha is not hb:
            return False
    elif ha != hb:
        return False
    return all(eq_n(x, y, amap) for x, y in zip(a.args, b.args))


# --- the checker -------------------------------------------------------------------

def oracle_check(env: core.Environment, t: Term, goal: Typ) -> OracleReport:
    """Typing relation by direct substitution and full normalization."""
    budget = _Budget()
    defs = _Defs(env, budget)
    try:
        t2 = presimplify(env, t, 0, budget)
        goal_nt = convert_typ(goal, [], budget)
        return _chk(defs, t2, goal_nt, [], {}, ())
    except core.CoreError as e:
        return OracleReport(False, f"core error: {e}", ())


def _chk(defs: _Defs, t: Term, goal: NT, stack: list, types: dict,
         path) -> OracleReport:
    budget = defs.budget
    budget.spend()
    if not isinstance(t, Term):
        return OracleReport(False, "metavariable in term", path)
    if t.lets:
        return OracleReport(False, "unexpanded let survived presimplify", path)
    if len(t.params) != len(goal.binders):
        return OracleReport(False, "binder count mismatch", path)

    atoms = [a for a, _ in goal.binders]
    stack2 = [_aref(a) for a in atoms] + list(stack)
    types2 = dict(types)
    for a, p in goal.binders:
        types2[a] = p

    idx = t.head
    if idx < len(stack2):
        h = stack2[idx].head
        hty = types2.get(h)
        if hty is None:
            return OracleReport(False, f"binder {h!r} is untyped", path)
    else:
        slot = idx - len(stack2)
        if slot >= len(defs.env.bindings):
            return OracleReport(False, "dangling head reference", path)
        b = defs.env.bindings[slot]
        if b.typ is None:
            return OracleReport(False, f"head {b.name} has no type", path)
        hty = defs.typ(slot)

    if len(t.args) != len(hty.binders):
        return OracleReport(False, "arity mismatch", path)

    arg_ns = [convert(a, stack2, budget) for a in t.args]
    amap = {hb: v for (hb, _), v in zip(hty.binders, arg_ns)}
    lhs = nf(defs, subst_n(hty.cod, amap, budget))
    rhs = nf(defs, goal.cod)
    if not eq_n(lhs, rhs):
        return OracleReport(False, "codomain spines are not beta-equal", path)

    for i, a in enumerate(t.args):
        _, pty = hty.binders[i]
        if pty is None:
            continue
        r = _chk(defs, a, subst_nt(pty, amap, budget), stack2, types2,
                 path + (i,))
        if not r.accepted:
            return r
    return OracleReport(True)


def normal_form_equal(env: core.Environment, t1: Term, t2: Term) -> bool:
    """Naive-substitution normal forms of two closed terms compared up to
    binder pairing."""
    budget = _Budget()
    defs = _Defs(env, budget)
    n1 = nf(defs, convert(presimplify(env, t1, 0, budget), [], budget))
    n2 = nf(defs, convert(presimplify(env, t2, 0, budget), [], budget))
    return eq_n(n1, n2)


# --- brute-force enumeration ---------------------------------------------------------

def enumerate_bnel(env: core.Environment, goal: Typ,
                   max_refinements: int = 8) -> list:
    """All BNEL terms of the goal: blind arity-directed generation filtered
    through oracle_check.  Ground truth for exhaustiveness tests."""
    out = []
    seen = set()
    count = 0
    for t in _gen(env, goal, max_refinements):
        count += 1
        if count > 2_000_000:
            raise BudgetExceeded("enumeration out of budget")
        k = core.term_key(t)
        if k in seen:
            continue
        seen.add(k)
        try:
            if oracle_check(env, t, goal).accepted:
                out.append(t)
        except OracleFuelExhausted:
            pass
    return out


def _gen(env, goal: Typ, budget: int):
    def heads_at(ctx_typs):
        opts = []
        for i, ty in enumerate(ctx_typs):
            if ty is not None:
                opts.append((i, None, ty))
        for s, b in enumerate(env.bindings):
            if b.typ is not None:
                opts.append((None, s, b.typ))
        return opts

    def gen_term(ty: Typ, ctx_typs, budget):
        n = len(ty.params)
        inner_ctx = [p for _, p in ty.params] + ctx_typs
        names = tuple(nm for nm, _ in ty.params)
        for ctx_i, slot, hty in heads_at(inner_ctx):
            ar = len(hty.params)
            if budget < 1 + ar:
                continue
            idx = ctx_i if ctx_i is not None else len(inner_ctx) + slot
            if ar == 0:
                yield Term(names, (), idx, ())
                continue
            arg_typs = [hty.params[i][1] for i in range(ar)]
            if any(a is None for a in arg_typs):
                continue
            for split in _splits(budget - 1, ar):
                pools = [list(gen_term(arg_typs[i], inner_ctx, split[i]))
                         for i in range(ar)]
                for combo in product(*pools):
                    yield Term(names, (), idx, tuple(combo))

    yield from gen_term(goal, [], budget)


def _splits(total, k):
    if k == 1:
        for x in range(1, total + 1):
            yield (x,)
        return
    for first in range(1, total - k + 2):
        for rest in _splits(total - first, k - 1):
            yield (first,) + rest
