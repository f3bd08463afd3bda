"""Typing-relation checker over closures: a term against a type, delegating
beta-equality of spines to the reduction machine.

Every node must be fully applied (static arity), its binder count must match
the type's telescope, the head's codomain spine must be beta-equal to the
expected codomain, and each argument must check against the head's parameter
type.  Untyped *defined* heads (literals, plain definitions) are unfolded
once and rechecked.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import core
from .machine import Clo, Machine, Rigid


@dataclass
class Report:
    ok: bool
    code: str = ""
    path: tuple = ()
    message: str = ""

    def __bool__(self):
        return self.ok


def check_wellformed(env: core.Environment, term: core.Term,
                     against: core.Typ, machine: Machine | None = None) -> Report:
    """Check a closed term against a closed type over the environment."""
    m = machine if machine is not None else Machine(env)
    try:
        return _check(m, Clo(term, m.env_subst), Clo(against, m.env_subst),
                      (), 0)
    except core.UnresolvedSymbol as e:
        return Report(False, "UnresolvedSymbol", (), str(e))


def _check(m, tclo, tyclo, path, depth) -> Report:
    node = tclo.node
    tyn = tyclo.node
    if not isinstance(node, core.Term):
        return Report(False, "IncompleteTerm", path, "metavariable in term")
    if len(node.params) != len(tyn.params):
        return Report(False, "ArityMismatch", path,
                      f"{len(node.params)} binders for a telescope of "
                      f"{len(tyn.params)}")

    rigids = [m.fresh_rigid(n) for n in node.params]
    tyext = m.extend(tyn, tyclo.subst, rigids)
    for r, (_, pty) in zip(rigids, tyn.params):
        r.typ = Clo(pty, tyext) if pty is not None else None
    text = m.extend(node, tclo.subst, rigids)
    inner = depth + len(node.params) + len(node.lets)

    for i, l in enumerate(node.lets):
        if l.typ is not None and l.definition is not None:
            sub = _check(m, Clo(l.definition, text), Clo(l.typ, text),
                         path + ("let", i), inner)
            if not sub.ok:
                return sub

    for _ in range(32):
        entry = text.lookup(node.head)
        if type(entry) is Rigid:
            if entry.typ is None:
                return Report(False, "UnresolvedSymbol", path,
                              f"head {entry.name} has no type")
            headty = entry.typ
            break
        slot = _env_slot(m, text, node.head)
        if slot is None:
            return Report(False, "UnresolvedSymbol", path,
                          "head is an untyped local definition")
        b = m.env.bindings[slot]
        if b.typ is not None:
            headty = Clo(b.typ, m.env_subst)
            break
        unfolded = _delta(m.env, b, node, inner)
        if unfolded is None:
            return Report(False, "UnresolvedSymbol", path,
                          f"cannot unfold untyped head {b.name}")
        node = unfolded
    else:
        return Report(False, "UnresolvedSymbol", path,
                      "definition unfolding did not settle")

    ftyp = headty.node
    k = core.arity_of(ftyp)
    if len(node.args) != k:
        return Report(False, "ArityMismatch", path,
                      f"head expects {k} arguments, given {len(node.args)}")

    argclos = [Clo(a, text) for a in node.args]
    fext = m.extend(ftyp, headty.subst, argclos)
    lhs = (Clo(ftyp.codomain, fext), ())
    rhs = (Clo(tyn.codomain, tyext), ())
    if not m.decide_equal(lhs, rhs):
        return Report(False, "SpineMismatch", path,
                      "head codomain is not beta-equal to the expected type")

    for i, a in enumerate(node.args):
        pty = ftyp.params[i][1]
        if pty is None:
            continue
        sub = _check(m, Clo(a, text), Clo(pty, fext), path + (i,), inner)
        if not sub.ok:
            code = "ArgumentTypeMismatch" if sub.code == "SpineMismatch" \
                and len(sub.path) == len(path) + 1 else sub.code
            return Report(False, code, sub.path, sub.message)
    return Report(True)


def _env_slot(m, text, idx):
    s = text
    while s is not None and s is not m.env_subst:
        n = len(s.block)
        if idx < n:
            return None
        idx -= n
        s = s.tail
    if s is None or idx >= len(m.env.bindings):
        return None
    return idx


def _delta(env, binding, node, inner):
    """Replace an untyped defined head by its unfolding, in place in the
    node's frame.  Handles the saturated, let-free case; anything else is
    left for the oracle."""
    d = binding.definition
    if d is None or d.lets:
        return None
    f = core.shift_term(d, inner)
    p = len(f.params)
    if p != len(node.args):
        return None
    if p == 0:
        return core.Term(node.params, node.lets, f.head, f.args + node.args)
    body = _inst(core.Term((), (), f.head, f.args), list(node.args))
    return core.Term(node.params, node.lets, body.head, body.args)


def _inst(t: core.Term, values: list, depth: int = 0) -> core.Term:
    """Dissolve the binder block just outside t, substituting the values."""
    k = len(values)
    inner = depth + len(t.params) + len(t.lets)
    args = tuple(_inst(a, values, inner) if isinstance(a, core.Term) else a
                 for a in t.args)
    head = t.head
    if head >= inner:
        free = head - inner
        if free < k:
            repl = core.shift_term(values[free], inner)
            if repl.params or repl.lets:
                if len(repl.params) != len(args) or repl.lets:
                    raise core.UnresolvedSymbol("unfolding produced a redex")
                return _inst(core.Term((), (), repl.head, repl.args),
                             list(args))
            return core.Term(t.params, t.lets, repl.head,
                             tuple(repl.args) + args)
        head -= k
    return core.Term(t.params, t.lets, head, args)