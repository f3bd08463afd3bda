"""Canonical pretty-printer: core syntax back to the surface language.

Deterministic: binder names are freshened against everything in scope, so
printing the same term always yields the same text, and printed terms parse
back to structurally identical core syntax.
"""

from __future__ import annotations

from . import core


def _freshen(name, used):
    base = name if name and name != "_" else "x"
    if base not in used:
        used.add(base)
        return base
    i = 1
    while f"{base}_{i}" in used:
        i += 1
    fresh = f"{base}_{i}"
    used.add(fresh)
    return fresh


class Printer:
    def __init__(self, env: core.Environment):
        self.env = env
        self.env_names = [b.name for b in env.bindings]

    def term(self, t: core.Term, names=None) -> str:
        names = list(names) if names else []
        used = set(self.env_names) | set(names)
        return self._term(t, names, used, top=True)

    def typ(self, ty: core.Typ, names=None) -> str:
        names = list(names) if names else []
        used = set(self.env_names) | set(names)
        return self._typ(ty, names, used)

    def _ref(self, idx, names):
        if idx < len(names):
            return names[idx]
        slot = idx - len(names)
        if slot < len(self.env_names):
            return self.env_names[slot]
        return f"?!{idx}"

    def _term(self, t, names, used, top=False):
        if not isinstance(t, core.Term):
            return f"?{t.meta.id}"  # a hole, for diagnostics only
        fresh = [_freshen(n, used) for n in t.params]
        fresh += [_freshen(l.name, used) for l in t.lets]
        inner = fresh + names
        parts = []
        if t.params:
            parts.append("fun " + " ".join(fresh[:len(t.params)]) + " =>")
        for i, l in enumerate(t.lets):
            name = fresh[len(t.params) + i]
            ann = f" : {self._typ(l.typ, inner, set(used))}" if l.typ else ""
            if l.definition is not None:
                parts.append(f"let {name}{ann} := "
                             f"{self._term(l.definition, inner, set(used))} in")
            else:
                parts.append(f"let {name}{ann} in")
        head = self._ref(t.head, inner)
        if t.args:
            spine = " ".join(self._atom(a, inner, used) for a in t.args)
            body = f"{head} {spine}"
        else:
            body = head
        parts.append(body)
        out = " ".join(parts)
        return out

    def _atom(self, t, names, used):
        if not isinstance(t, core.Term):
            return f"?{t.meta.id}"
        if t.params or t.lets or t.args:
            return "(" + self._term(t, names, set(used)) + ")"
        return self._ref(t.head, names)

    def _typ(self, ty, names, used):
        if ty is None:
            return "_"
        fresh = [_freshen(n, used) for n, _ in ty.params]
        inner = fresh + names
        parts = []
        for i, (n, p) in enumerate(ty.params):
            parts.append(f"({fresh[i]} : {self._typ(p, inner, set(used))}) ->")
        parts.append(self._term(ty.codomain, inner, set(used)))
        return " ".join(parts)


def print_term(env, t, names=None) -> str:
    return Printer(env).term(t, names)


def print_typ(env, ty, names=None) -> str:
    return Printer(env).typ(ty, names)


def skeleton(env, t: core.Term) -> list:
    """Preorder list of constant head symbols (environment names); bound and
    free-variable heads print as '_'."""

    out = []

    def walk(x, depth):
        if not isinstance(x, core.Term):
            out.append("?")
            return
        inner = depth + len(x.params) + len(x.lets)
        if x.head >= inner:
            out.append(env.bindings[x.head - inner].name)
        else:
            out.append("_")
        for a in x.args:
            walk(a, inner)

    walk(t, 0)
    return out
