"""Surface language: parsing, inductive elaboration, and translation into
core syntax.

Problem files (`.canon`) declare inductives, structures, definitions, axioms
and one goal.  Translation enforces static arity: under-applied heads are
eta-expanded, over-application routes through the `Pi` wrapper structure,
beta-redexes become lets, arrow types in argument positions become `Pi`
instances, and aliases of arrow types (like `Not`) unfold pervasively.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import core
from .core import Constructor, LetBinding, Projection, Recursor, Term, Typ
from .machine import Clo, Machine, Rigid, Subst
from . import machine as M


class SourceError(Exception):
    def __init__(self, msg, line=0, col=0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.line = line
        self.col = col


class SyntaxErr(SourceError):
    pass


class DuplicateName(SourceError):
    pass


class MissingGoal(SourceError):
    pass


class UnknownSymbol(SourceError):
    pass


class ArityUnderflowUnfixable(SourceError):
    pass


class NonPositiveOccurrence(SourceError):
    pass


class CyclicDefinition(SourceError):
    pass


class PolicyConflict(SourceError):
    pass


# --- tokens -------------------------------------------------------------------

KEYWORDS = {"inductive", "structure", "def", "axiom", "goal", "where",
            "fun", "let", "in", "Sort"}

TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_.']*)
  | (?P<pragma>\#[a-z]+)
  | (?P<op>:=|->|=>|[():|_])
""", re.VERBOSE)


@dataclass
class Tok:
    kind: str
    val: str
    line: int
    col: int


def tokenize(text):
    toks = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if not m:
            raise SyntaxErr(f"stray character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        val = m.group()
        col = pos - start + 1
        if kind in ("ws", "comment"):
            if "\n" in val:
                line += val.count("\n")
                start = pos + val.rindex("\n") + 1
        elif kind == "ident":
            toks.append(Tok("kw" if val in KEYWORDS else "ident", val, line, col))
        elif kind == "op":
            toks.append(Tok(val, val, line, col))
        else:
            toks.append(Tok(kind, val, line, col))
        pos = m.end()
    toks.append(Tok("eof", "", line, 1))
    return toks


# --- surface expressions --------------------------------------------------------

@dataclass
class EName:
    name: str
    line: int = 0
    col: int = 0


@dataclass
class ENum:
    value: int
    line: int = 0
    col: int = 0


@dataclass
class ESort:
    line: int = 0
    col: int = 0


@dataclass
class EApp:
    fn: object
    arg: object


@dataclass
class EFun:
    binders: list  # (name, ann | None)
    body: object


@dataclass
class ELet:
    name: str
    ann: object
    val: object
    body: object


@dataclass
class EArrow:
    name: str  # "_" when unnamed
    dom: object
    cod: object


@dataclass
class Decl:
    kind: str
    name: str
    tele: list
    result: object
    body: object
    members: list
    line: int = 0


STOP = {"eof", ")", "|", ":", ":=", "->", "=>"}


class Parser:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind, what=None):
        t = self.next()
        if t.kind != kind:
            raise SyntaxErr(f"expected {what or kind}, found {t.val!r}", t.line, t.col)
        return t

    def expect_kw(self, word):
        t = self.next()
        if t.kind != "kw" or t.val != word:
            raise SyntaxErr(f"expected '{word}', found {t.val!r}", t.line, t.col)
        return t

    # expressions

    def expr(self):
        groups = self.try_binder_groups()
        if groups is not None:
            self.expect("->")
            cod = self.expr()
            for name, dom in reversed(groups):
                cod = EArrow(name, dom, cod)
            return cod
        lhs = self.app()
        if self.peek().kind == "->":
            self.next()
            return EArrow("_", lhs, self.expr())
        return lhs

    def try_binder_groups(self):
        save = self.i
        groups = []
        while self.peek().kind == "(":
            j = self.i + 1
            names = []
            while self.toks[j].kind in ("ident", "_"):
                names.append(self.toks[j].val)
                j += 1
            if not names or self.toks[j].kind != ":":
                break
            self.i = j + 1
            dom = self.expr()
            self.expect(")")
            groups.extend((n, dom) for n in names)
        if groups and self.peek().kind == "->":
            return groups
        self.i = save
        return None

    def app(self):
        t = self.peek()
        if t.kind == "kw" and t.val == "fun":
            return self.fun()
        if t.kind == "kw" and t.val == "let":
            return self.let()
        atoms = [self.atom()]
        while True:
            t = self.peek()
            if t.kind in STOP or t.kind == "pragma":
                break
            if t.kind == "kw":
                if t.val in ("fun", "let"):
                    atoms.append(self.app())
                    break
                if t.val == "Sort":
                    self.next()
                    atoms.append(ESort(t.line, t.col))
                    continue
                break
            atoms.append(self.atom())
        e = atoms[0]
        for a in atoms[1:]:
            e = EApp(e, a)
        return e

    def atom(self):
        t = self.next()
        if t.kind == "ident":
            return EName(t.val, t.line, t.col)
        if t.kind == "num":
            return ENum(int(t.val), t.line, t.col)
        if t.kind == "kw" and t.val == "Sort":
            return ESort(t.line, t.col)
        if t.kind == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise SyntaxErr(f"unexpected {t.val!r}", t.line, t.col)

    def fun(self):
        self.expect_kw("fun")
        binders = []
        while True:
            t = self.peek()
            if t.kind in ("ident", "_"):
                self.next()
                binders.append((t.val, None))
            elif t.kind == "(":
                self.next()
                names = []
                while self.peek().kind in ("ident", "_"):
                    names.append(self.next().val)
                self.expect(":")
                ann = self.expr()
                self.expect(")")
                binders.extend((n, ann) for n in names)
            else:
                break
        if not binders:
            t = self.peek()
            raise SyntaxErr("fun requires at least one binder", t.line, t.col)
        self.expect("=>")
        return EFun(binders, self.expr())

    def let(self):
        self.expect_kw("let")
        name = self.expect("ident").val
        ann = None
        if self.peek().kind == ":":
            self.next()
            ann = self.expr()
        self.expect(":=")
        val = self.expr()
        self.expect_kw("in")
        body = self.expr()
        return ELet(name, ann, val, body)

    # declarations

    def file(self):
        decls = []
        pragmas = []
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if t.kind == "pragma":
                pragmas.append(self.pragma())
                continue
            if t.kind != "kw":
                raise SyntaxErr(f"expected a declaration, found {t.val!r}",
                                t.line, t.col)
            if t.val == "inductive":
                decls.append(self.inductive())
            elif t.val == "structure":
                decls.append(self.structure())
            elif t.val == "def":
                decls.append(self.def_())
            elif t.val == "axiom":
                decls.append(self.axiom())
            elif t.val == "goal":
                decls.append(self.goal())
            else:
                raise SyntaxErr(f"unexpected keyword {t.val!r}", t.line, t.col)
        return decls, pragmas

    def pragma(self):
        t = self.next()
        if t.val == "#synth":
            return ("synth", True)
        if t.val == "#count":
            v = self.next()
            if v.kind == "num":
                return ("count", int(v.val))
            if v.val == "inf":
                return ("count", None)
            raise SyntaxErr("expected a number or 'inf' after #count", v.line, v.col)
        if t.val == "#timeout":
            v = self.expect("num", "a number of seconds")
            return ("timeout", float(v.val))
        raise SyntaxErr(f"unknown pragma {t.val}", t.line, t.col)

    def telescope(self):
        tele = []
        while self.peek().kind == "(":
            self.next()
            names = []
            while self.peek().kind in ("ident", "_"):
                names.append(self.next().val)
            self.expect(":")
            dom = self.expr()
            self.expect(")")
            tele.extend((n, dom) for n in names)
        return tele

    def inductive(self):
        t = self.expect_kw("inductive")
        name = self.expect("ident").val
        tele = self.telescope()
        self.expect(":")
        result = self.expr()
        self.expect_kw("where")
        members = []
        while self.peek().kind == "|":
            self.next()
            cname = self.expect("ident").val
            self.expect(":")
            members.append((cname, self.expr()))
        return Decl("inductive", name, tele, result, None, members, t.line)

    def structure(self):
        t = self.expect_kw("structure")
        name = self.expect("ident").val
        tele = self.telescope()
        result = None
        if self.peek().kind == ":":
            self.next()
            result = self.expr()
        self.expect_kw("where")
        members = []
        pending = None
        while pending is not None or self.peek().kind == "ident":
            fname = pending if pending is not None else self.next().val
            pending = None
            self.expect(":")
            ty = self.expr()
            if self.peek().kind == ":":
                # greedy application swallowed the next field's name
                ty, pending = _strip_trailing_name(ty, self.peek())
            members.append((fname, ty))
        return Decl("structure", name, tele, result, None, members, t.line)

    def def_(self):
        t = self.expect_kw("def")
        name = self.expect("ident").val
        tele = self.telescope()
        self.expect(":")
        typ = self.expr()
        self.expect(":=")
        body = self.expr()
        return Decl("def", name, tele, typ, body, [], t.line)

    def axiom(self):
        t = self.expect_kw("axiom")
        name = self.expect("ident").val
        self.expect(":")
        return Decl("axiom", name, [], self.expr(), None, [], t.line)

    def goal(self):
        t = self.expect_kw("goal")
        self.expect(":")
        return Decl("goal", "goal", [], self.expr(), None, [], t.line)


def _strip_trailing_name(ty, tok):
    if isinstance(ty, EApp) and isinstance(ty.arg, EName):
        return ty.fn, ty.arg.name
    raise SyntaxErr("could not split structure fields", tok.line, tok.col)


def _arrow_chain(tele, result):
    e = result
    for name, dom in reversed(tele):
        e = EArrow(name, dom, e)
    return e


# --- expression utilities -------------------------------------------------------

def _flatten(e):
    args = []
    while isinstance(e, EApp):
        args.append(e.arg)
        e = e.fn
    return e, list(reversed(args))


def _peel_funs(e):
    binders = []
    while isinstance(e, EFun):
        binders.extend(e.binders)
        e = e.body
    return binders, e


def _beta_letify(e):
    """Rewrite `(fun x .. => b) a ..` into lets, pairing each binder with the
    corresponding argument."""
    while isinstance(e, EApp):
        head, args = _flatten(e)
        if not isinstance(head, EFun) or not args:
            return e
        binders, body = head.binders, head.body
        n = min(len(binders), len(args))
        rebuilt = EFun(binders[n:], body) if len(binders) > n else body
        for (bname, ann), val in reversed(list(zip(binders[:n], args[:n]))):
            rebuilt = ELet(bname, ann, val, rebuilt)
        for a in args[n:]:
            rebuilt = EApp(rebuilt, a)
        e = rebuilt
        if not isinstance(e, EApp):
            return e
    return e


def _reapply_under_lets(e, args):
    if isinstance(e, ELet):
        return ELet(e.name, e.ann, e.val, _reapply_under_lets(e.body, args))
    for a in args:
        e = EApp(e, a)
    return e


def _subst_expr(e, mapping):
    if isinstance(e, EName):
        return mapping.get(e.name, e)
    if isinstance(e, (ENum, ESort)):
        return e
    if isinstance(e, EApp):
        return EApp(_subst_expr(e.fn, mapping), _subst_expr(e.arg, mapping))
    if isinstance(e, EFun):
        inner = {k: v for k, v in mapping.items()
                 if k not in [b for b, _ in e.binders]}
        return EFun([(b, _subst_expr(a, mapping) if a else None)
                     for b, a in e.binders], _subst_expr(e.body, inner))
    if isinstance(e, ELet):
        inner = {k: v for k, v in mapping.items() if k != e.name}
        return ELet(e.name, _subst_expr(e.ann, mapping) if e.ann else None,
                    _subst_expr(e.val, mapping), _subst_expr(e.body, inner))
    if isinstance(e, EArrow):
        inner = {k: v for k, v in mapping.items() if k != e.name}
        return EArrow(e.name, _subst_expr(e.dom, mapping),
                      _subst_expr(e.cod, inner))
    raise SyntaxErr("cannot substitute into this expression")


# --- core-syntax utilities ------------------------------------------------------

def _remap_term(t: Term, fn, depth=0) -> Term:
    inner = depth + len(t.params) + len(t.lets)
    head = t.head
    if head >= inner:
        head = fn(head - inner) + inner
    args = tuple(_remap_term(a, fn, inner) for a in t.args)
    lets = tuple(
        LetBinding(l.name,
                   _remap_typ(l.typ, fn, inner) if l.typ else None,
                   _remap_term(l.definition, fn, inner) if l.definition else None,
                   l.reduction)
        for l in t.lets)
    return Term(t.params, lets, head, args)


def _remap_typ(ty: Typ, fn, depth=0):
    if ty is None:
        return None
    inner = depth + len(ty.params) + len(ty.lets)
    params = tuple((n, _remap_typ(p, fn, inner) if p else None)
                   for n, p in ty.params)
    lets = tuple(
        LetBinding(l.name,
                   _remap_typ(l.typ, fn, inner) if l.typ else None,
                   _remap_term(l.definition, fn, inner) if l.definition else None,
                   l.reduction)
        for l in ty.lets)
    return Typ(params, lets, _remap_term(ty.codomain, fn, inner))


def _eta_ref(idx: int, typ) -> Term:
    """Eta-long reference to telescope slot `idx`."""
    ar = len(typ.params) if typ is not None else 0
    if ar == 0:
        return Term((), (), idx, ())
    names = tuple(n if n != "_" else f"x{i}"
                  for i, (n, _) in enumerate(typ.params))
    args = tuple(_eta_ref(i, typ.params[i][1]) for i in range(ar))
    return Term(names, (), idx + ar, args)


def _occurs_env(t: Term, slot: int, depth: int = 0) -> int:
    """Occurrences of outer-frame reference `slot` inside t (slot counted at
    depth 0 just outside t)."""
    inner = depth + len(t.params) + len(t.lets)
    n = 1 if t.head == inner + slot else 0
    for a in t.args:
        if isinstance(a, Term):
            n += _occurs_env(a, slot, inner)
    return n


def _count_typ(ty: Typ, slot: int, depth: int = 0) -> int:
    inner = depth + len(ty.params) + len(ty.lets)
    n = _occurs_env(ty.codomain, slot + 0, inner)
    for _, p in ty.params:
        if p is not None:
            n += _count_typ(p, slot, inner)
    return n


# --- elaboration ------------------------------------------------------------------

@dataclass
class Sym:
    name: str
    slot: int | None
    typ: Typ | None
    alias: tuple | None = None
    reduction: object = None


class Scope:
    """Translation context; one entry per telescope slot, innermost block
    first.  Each entry is [name, rigid|None, (Typ, Subst)|None]; `subst`
    mirrors the entries for machine queries."""

    def __init__(self, elab, entries=None, subst=None):
        self.elab = elab
        self.entries = entries if entries is not None else []
        self.subst = subst if subst is not None else elab.env_subst

    def push_block(self, triples):
        block = [t[1] for t in triples]
        sub = Subst(block, self.subst)
        return Scope(self.elab, [list(t) for t in triples] + self.entries, sub), sub

    def lookup(self, name):
        for i, ent in enumerate(self.entries):
            if ent[0] == name:
                return i, ent
        return None

    def depth(self):
        return len(self.entries)

    def levels(self):
        return [ent[1].level if ent[1] is not None else -1 - i
                for i, ent in enumerate(self.entries)]


class Elab:
    def __init__(self):
        self.bindings = []
        self.env_block = []
        self.env_subst = Subst(self.env_block, None)
        self.syms: dict[str, Sym] = {}
        self.mach = Machine.__new__(Machine)
        self.mach.env = None
        self.mach.env_subst = self.env_subst
        self.mach.fuel = M.DEFAULT_FUEL
        self.mach._next_level = 1_000_000
        self.goal_typ = None
        self.config = {}
        self.pi = None
        self.literals = {}
        self._auto = 0
        self.sort_slot = self.add_opaque("Sort", Typ((), (), Term((), (), 0, ())))

    # environment assembly

    def add_binding(self, b: LetBinding) -> int:
        if b.name in self.syms:
            raise DuplicateName(f"{b.name} is already declared")
        slot = len(self.bindings)
        self.bindings.append(b)
        if b.definition is not None:
            self.env_block.append(Clo(b.definition, self.env_subst))
        else:
            typ = Clo(b.typ, self.env_subst) if b.typ is not None else None
            self.env_block.append(Rigid(slot, b.name, typ, b.reduction, slot))
        self.syms[b.name] = Sym(b.name, slot, b.typ, None, b.reduction)
        return slot

    def add_opaque(self, name, typ, reduction=None):
        return self.add_binding(LetBinding(name, typ, None, reduction))

    def add_alias(self, name, params, body):
        if name in self.syms:
            raise DuplicateName(f"{name} is already declared")
        self.syms[name] = Sym(name, None, None, alias=(params, body))

    def auto_name(self, base="x"):
        self._auto += 1
        base = base if base and base != "_" else "x"
        return f"{base}_{self._auto}"

    def scope0(self):
        return Scope(self)

    # driver

    def run(self, decls, pragmas):
        for d in decls:
            if d.kind == "inductive":
                self.elab_inductive(d)
            elif d.kind == "structure":
                self.elab_structure(d)
            elif d.kind == "axiom":
                self.add_opaque(d.name, self.translate_typ(d.result, self.scope0()))
            elif d.kind == "def":
                self.elab_def(d)
            elif d.kind == "goal":
                if self.goal_typ is not None:
                    raise DuplicateName("goal declared twice", d.line)
                self.goal_typ = self.translate_typ(d.result, self.scope0())
        if self.goal_typ is None:
            raise MissingGoal("no goal declaration")
        for key, val in pragmas:
            self.config[key] = val
        self.check_cycles()
        env = core.Environment(tuple(self.bindings))
        self.number_origins()
        return env, self.goal_typ, dict(self.config)

    def number_origins(self):
        n = 0
        seen = set()

        def mark(ty):
            nonlocal n
            if ty is None or id(ty) in seen:
                return
            seen.add(id(ty))
            ty.origin = n
            n += 1
            for _, p in ty.params:
                mark(p)
            for l in ty.lets:
                mark(l.typ)

        for b in self.bindings:
            mark(b.typ)
        mark(self.goal_typ)

    def check_cycles(self):
        """Unguarded definition cycles make reduction diverge; reject them."""
        color = {}

        def refs(term, depth):
            out = []
            stack = [(term, depth)]
            while stack:
                t, d = stack.pop()
                inner = d + len(t.params) + len(t.lets)
                if t.head >= inner:
                    out.append(t.head - inner)
                for a in t.args:
                    if isinstance(a, Term):
                        stack.append((a, inner))
                for l in t.lets:
                    if l.definition is not None:
                        stack.append((l.definition, inner))
            return out

        def visit(slot):
            if color.get(slot) == 2:
                return
            if color.get(slot) == 1:
                raise CyclicDefinition(
                    f"definition cycle through {self.bindings[slot].name}")
            color[slot] = 1
            b = self.bindings[slot]
            if b.definition is not None and b.reduction is None:
                for s in refs(b.definition, 0):
                    sb = self.bindings[s]
                    if sb.definition is not None and sb.reduction is None:
                        visit(s)
            color[slot] = 2

        for i in range(len(self.bindings)):
            visit(i)

    # types

    def translate_typ(self, e, sc: Scope) -> Typ:
        e = self.unalias(e, sc)
        binders = []
        while isinstance(e, EArrow):
            binders.append((e.name, e.dom))
            e = self.unalias(e.cod, sc)
        if not binders:
            return Typ((), (), self.type_spine(e, sc))
        rigids = [self.mach.fresh_rigid(n) for n, _ in binders]
        sc2, sub = sc.push_block([[n, r, None] for (n, _), r in zip(binders, rigids)])
        params = []
        for i, (name, dom) in enumerate(binders):
            dt = self.translate_typ(dom, sc2)
            rigids[i].typ = Clo(dt, sub)
            sc2.entries[i][2] = (dt, sub)
            params.append((name, dt))
        return Typ(tuple(params), (), self.type_spine(e, sc2))

    def type_spine(self, e, sc) -> Term:
        t = self.term(e, sc, None)
        if t.params or t.lets:
            raise SyntaxErr("expected a type-valued spine")
        return t

    def unalias(self, e, sc):
        head, args = _flatten(e)
        if isinstance(head, EName) and sc.lookup(head.name) is None:
            sym = self.syms.get(head.name)
            if sym is not None and sym.alias is not None:
                params, body = sym.alias
                if len(args) < len(params):
                    raise PolicyConflict(
                        f"alias {head.name} must be fully applied",
                        head.line, head.col)
                mapping = dict(zip(params, args))
                expanded = _subst_expr(body, mapping)
                for a in args[len(params):]:
                    expanded = EApp(expanded, a)
                return self.unalias(expanded, sc)
        return e

    def pi_instance(self, e: EArrow, sc):
        """Encode an arrow expression as a `Pi` instance term expression."""
        self.ensure_pi()
        name = e.name if e.name != "_" else self.auto_name("a")
        return EApp(EApp(EName("Pi"), e.dom), EFun([(name, None)], e.cod))

    def ensure_pi(self):
        if self.pi is None:
            if "Pi" in self.syms:
                # a hand-declared wrapper with the right shape is adopted
                pi = self.syms["Pi"]
                mk = self.syms.get("Pi.mk")
                f = self.syms.get("Pi.f")
                if (mk is None or f is None or pi.slot is None
                        or len(pi.typ.params) != 2
                        or not isinstance(f.reduction, Projection)):
                    raise PolicyConflict(
                        "a declaration named Pi must be the two-parameter "
                        "wrapper structure with a single field f")
            else:
                d = Decl("structure", "Pi",
                         [("A", ESort()), ("B", EArrow("a", EName("A"), ESort()))],
                         ESort(), None,
                         [("f", EArrow("a", EName("A"),
                                       EApp(EName("B"), EName("a"))))], 0)
                self.elab_structure(d)
            self.pi = (self.syms["Pi"].slot, self.syms["Pi.mk"].slot,
                       self.syms["Pi.f"].slot)
        return self.pi

    # terms

    def term(self, e, sc: Scope, expected):
        """Translate a term expression; `expected` is (Typ, Subst) or None."""
        t, _ = self.term_syn(e, sc, expected)
        return t

    def term_syn(self, e, sc: Scope, expected):
        e = self.unalias(e, sc)
        e = _beta_letify(e)
        if isinstance(e, EArrow):
            return self.term_syn(self.pi_instance(e, sc), sc, expected)
        if isinstance(e, (EFun, ELet)):
            return self.fun_let_cluster(e, sc, expected), None
        if isinstance(e, EApp):
            head, args = _flatten(e)
            if isinstance(head, (EFun, ELet)):
                head = _beta_letify(head) if isinstance(head, EFun) else head
                if isinstance(head, ELet):
                    return self.term_syn(_reapply_under_lets(head, args), sc,
                                         expected)
                raise SyntaxErr("unreduced beta-redex survived translation")
        return self.app_spine(e, sc, expected)

    def fun_let_cluster(self, e, sc, expected):
        binders = []
        while isinstance(e, EFun):
            binders.extend(e.binders)
            e = _beta_letify(e.body)
        if expected is not None:
            tyn, tysub = expected
            p = len(tyn.params)
            if p == 0 and binders:
                return self.pimk_wrap(EFun(binders, e), sc, (tyn, tysub))
            if len(binders) > p:
                e = EFun(binders[p:], e)
                binders = binders[:p]
            pads = []
            while len(binders) + len(pads) < p:
                pads.append(self.auto_name(tyn.params[len(binders) + len(pads)][0]))
            binders = binders + [(n, None) for n in pads]
        else:
            tyn = tysub = None
            pads = []
            if any(ann is None for _, ann in binders):
                raise SyntaxErr("cannot infer the type of an unannotated fun")

        lets = []
        body = e
        while isinstance(body, ELet):
            lets.append((body.name, body.ann, body.val))
            body = _beta_letify(body.body)
        for n in pads:
            body = EApp(body, EName(n))

        names = [n for n, _ in binders] + [n for n, _, _ in lets]
        rigids = [self.mach.fresh_rigid(n) for n, _ in binders]
        triples = [[n, r, None] for (n, _), r in zip(binders, rigids)]
        triples += [[n, None, None] for n, _, _ in lets]
        sc2, sub = sc.push_block(triples)

        if expected is not None:
            tyext = self.mach.extend(tyn, tysub, rigids)
            for i, r in enumerate(rigids):
                pty = tyn.params[i][1]
                r.typ = Clo(pty, tyext) if pty is not None else None
                sc2.entries[i][2] = (pty, tyext) if pty is not None else None
            body_expected = (Typ((), (), tyn.codomain), tyext)
        else:
            for i, (n, ann) in enumerate(binders):
                dt = self.translate_typ(ann, sc2)
                rigids[i].typ = Clo(dt, sub)
                sc2.entries[i][2] = (dt, sub)
            body_expected = None

        let_bindings = []
        for j, (lname, lann, lval) in enumerate(lets):
            at = len(binders) + j
            if lann is not None:
                lty = self.translate_typ(lann, sc2)
                lterm = self.term(lval, sc2, (lty, sub))
            else:
                lterm, synth = self.term_syn(lval, sc2, None)
                lty = None
                if synth is not None:
                    sc2.entries[at][2] = synth
            if lty is not None:
                sc2.entries[at][2] = (lty, sub)
            let_bindings.append(LetBinding(lname, lty, lterm))
            sub.block[at] = Clo(lterm, sub)

        body_t = self.term(body, sc2, body_expected)
        if body_t.params:
            raise SyntaxErr("nested unapplied abstraction (arity drift)")
        return Term(tuple(n for n, _ in binders),
                    tuple(let_bindings) + body_t.lets, body_t.head, body_t.args)

    def pimk_wrap(self, efun, sc, expected):
        """A function given where a Pi instance is expected."""
        tyn, tysub = expected
        w = self.mach.whnf(Clo(tyn.codomain, tysub))
        pi = self.ensure_pi()
        if type(w) is not M.Head or w.head.slot != pi[0]:
            raise SyntaxErr("function supplied where no function type fits")
        dom_e, fam_e = w.spine
        arrow = self.reify_arrow(dom_e, fam_e, sc)
        fn = self.term(efun, sc, (arrow, sc.subst))
        a_t = self.reify_term(dom_e, sc)
        b_t = self.reify_term(fam_e, sc)
        return Term((), (), sc.depth() + pi[1], (a_t, b_t, fn))

    def app_spine(self, e, sc, expected):
        head, args = _flatten(e)
        if isinstance(head, ENum):
            slot = self.literal(head.value)
            nat = self.syms["Nat"]
            lit_typ = Typ((), (), Term((), (), nat.slot, ()))
            return self.spine_of(slot, None, lit_typ, self.env_subst, args, sc,
                                 expected, str(head.value))
        if isinstance(head, ESort):
            if args:
                raise SyntaxErr("Sort takes no arguments")
            sort_typ = Typ((), (), Term((), (), self.sort_slot, ()))
            return (Term((), (), sc.depth() + self.sort_slot, ()),
                    (sort_typ, self.env_subst))
        if not isinstance(head, EName):
            raise SyntaxErr("cannot translate this application head")

        local = sc.lookup(head.name)
        if local is not None:
            idx, ent = local
            tclo = ent[2]
            if tclo is None and ent[1] is not None and ent[1].typ is not None:
                tclo = (ent[1].typ.node, ent[1].typ.subst)
            if tclo is None:
                if args:
                    raise UnknownSymbol(
                        f"{head.name} has no known type to apply",
                        head.line, head.col)
                return Term((), (), idx, ()), None
            return self.spine_of(None, idx, tclo[0], tclo[1], args, sc,
                                 expected, head.name)

        sym = self.syms.get(head.name)
        if sym is None:
            raise UnknownSymbol(f"unknown symbol {head.name}",
                                head.line, head.col)
        if sym.typ is None:
            raise UnknownSymbol(
                f"{head.name} cannot head a term (no type provided)",
                head.line, head.col)
        return self.spine_of(sym.slot, None, sym.typ, self.env_subst, args, sc,
                             expected, head.name)

    def spine_of(self, slot, local_idx, tyn, tysub, args, sc, expected, name):
        arity = len(tyn.params)
        extra = args[arity:]
        args = args[:arity]
        need = arity - len(args)

        if need:
            autos = [self.auto_name(tyn.params[len(args) + i][0])
                     for i in range(need)]
            rigids = [self.mach.fresh_rigid(a) for a in autos]
            sc2, _ = sc.push_block([[a, r, None] for a, r in zip(autos, rigids)])
        else:
            autos, rigids = [], []
            sc2 = sc

        block = [None] * (arity + len(tyn.lets))
        cur = Subst(block, tysub)
        targs = []
        for i in range(arity):
            pty = tyn.params[i][1]
            if i < len(args):
                at = self.check_arg(args[i], sc2,
                                    (pty, cur) if pty is not None else None)
            else:
                j = i - len(args)
                at = _eta_ref(j, pty)
                if pty is not None:
                    rigids[j].typ = Clo(pty, cur)
                    sc2.entries[j][2] = (pty, cur)
            targs.append(at)
            block[i] = Clo(at, sc2.subst)

        head_idx = (sc2.depth() + slot) if slot is not None \
            else (local_idx + len(autos))
        t = Term(tuple(autos), (), head_idx, tuple(targs))
        res_side = (Clo(tyn.codomain, cur), ())

        for x in extra:
            w = self.mach.whnf(*res_side)
            pi = self.ensure_pi()
            if type(w) is not M.Head or w.head.slot != pi[0]:
                raise ArityUnderflowUnfixable(
                    f"{name} is over-applied and its type is not a Pi instance")
            dom_e, fam_e = w.spine
            dom_typ = self.reify_typ(dom_e, sc2.levels())
            xt = self.check_arg(x, sc2, (dom_typ, sc2.subst))
            a_t = self.reify_term(dom_e, sc2)
            b_t = self.reify_term(fam_e, sc2)
            if t.params:
                raise SyntaxErr("over-application of an eta-expanded head")
            t = Term((), (), sc2.depth() + pi[2], (a_t, b_t, t, xt))
            res_side = (fam_e, (Clo(xt, sc2.subst),))

        if extra:
            result = (self.reify_typ_applied(res_side[0], list(res_side[1]),
                                             sc2.levels()), sc2.subst)
        elif need:
            # the eta-expanded term's type keeps the unconsumed telescope
            k = len(args)

            def fslice(j, k=k, ar=arity, need=need):
                return j - k if k <= j < ar else j + need

            rest = tuple((n, _remap_whole_typ(p, fslice) if p else None)
                         for n, p in tyn.params[k:])
            result = (Typ(rest, (), _remap_whole_term(tyn.codomain, fslice)),
                      cur)
        else:
            result = (Typ((), (), tyn.codomain), cur)
        return t, result

    def check_arg(self, e, sc, expected):
        """Argument position: apply the eta/Pi fixes the position demands."""
        if expected is None:
            return self.term(e, sc, None)
        tyn, tysub = expected
        p = len(tyn.params)
        e = self.unalias(e, sc)
        if p == 0:
            w = self.mach.whnf(Clo(tyn.codomain, tysub))
            if type(w) is M.Head and w.head.slot == self.sort_slot:
                if isinstance(e, EArrow):
                    return self.term(self.pi_instance(e, sc), sc, expected)
                return self.term(e, sc, expected)
            t = self.term(e, sc, expected)
            if t.params:
                return self.pimk_wrap_term(t, sc, expected)
            return t
        t = self.term(e, sc, expected)
        if len(t.params) != p:
            # instance/arrow mismatch: eta-expand at the surface and let the
            # over-application route through Pi.f
            autos = [self.auto_name(tyn.params[i][0]) for i in range(p)]
            body = e
            for a in autos:
                body = EApp(body, EName(a))
            t = self.term(EFun([(a, None) for a in autos], body), sc, expected)
        return t

    def pimk_wrap_term(self, t, sc, expected):
        tyn, tysub = expected
        w = self.mach.whnf(Clo(tyn.codomain, tysub))
        pi = self.ensure_pi()
        if type(w) is not M.Head or w.head.slot != pi[0]:
            raise SyntaxErr("function supplied where no function type fits")
        dom_e, fam_e = w.spine
        a_t = self.reify_term(dom_e, sc)
        b_t = self.reify_term(fam_e, sc)
        return Term((), (), sc.depth() + pi[1], (a_t, b_t, t))

    # readback helpers

    def reify_term(self, entry, sc) -> Term:
        return self.mach.reify((entry, ()), sc.levels())

    def reify_arrow(self, dom_e, fam_e, sc) -> Typ:
        """Real arrow Typ from a Pi instance's pieces, in the current scope."""
        levels = sc.levels()
        r = self.mach.fresh_rigid("a")
        dom = self.reify_typ(dom_e, [r.level] + levels)
        inner = self.reify_typ_applied(fam_e, [r], [r.level] + levels)
        if inner.params:
            raise SyntaxErr("dependent Pi readback is not supported")
        return Typ((("a", dom),), (), inner.codomain)

    def reify_typ(self, entry, levels) -> Typ:
        return self.reify_typ_applied(entry, [], levels)

    def reify_typ_applied(self, entry, spine, levels) -> Typ:
        w = self.mach.whnf(entry, spine)
        if self.pi is not None and type(w) is M.Head and w.head.slot == self.pi[0]:
            r = self.mach.fresh_rigid("a")
            lv = [r.level] + levels
            dom = self.reify_typ(w.spine[0], lv)
            inner = self.reify_typ_applied(w.spine[1], [r], lv)
            if inner.params:
                raise SyntaxErr("nested Pi readback is not supported")
            return Typ((("a", dom),), (), inner.codomain)
        if type(w) is not M.Head:
            raise SyntaxErr("cannot read back this type")
        return Typ((), (), self.mach._reify_head(w, levels, None))

    # literals

    def literal(self, value):
        if value in self.literals:
            return self.literals[value]
        nat = self.syms.get("Nat")
        if nat is None or nat.slot is None:
            raise UnknownSymbol("numeric literals need an inductive Nat")
        zero = self.syms.get("Nat.zero")
        succ = self.syms.get("Nat.succ")
        name = str(value)
        if value <= 5 and zero is not None and succ is not None:
            t = Term((), (), zero.slot, ())
            for _ in range(value):
                t = Term((), (), succ.slot, (t,))
            slot = self.add_binding(LetBinding(name, None, t))
        else:
            slot = self.add_binding(
                LetBinding(name, Typ((), (), Term((), (), nat.slot, ())), None))
        self.literals[value] = slot
        return slot

    # inductives

    def elab_inductive(self, d: Decl):
        sc0 = self.scope0()
        former_typ = self.translate_typ(_arrow_chain(d.tele, d.result), sc0)
        P = len(d.tele)
        total = len(former_typ.params)
        X = total - P
        if former_typ.codomain.head != total + self.sort_slot or former_typ.codomain.args:
            raise SyntaxErr(f"inductive {d.name} must land in Sort", d.line)
        former_slot = self.add_opaque(d.name, former_typ)

        ctors = []
        for j, (cname, cexpr) in enumerate(d.members):
            ctyp = self.translate_typ(_arrow_chain(d.tele, cexpr), sc0)
            self.check_constructor(d.name, former_slot, P, ctyp, d.line)
            nf = len(ctyp.params) - P
            slot = self.add_opaque(f"{d.name}.{cname}", ctyp,
                                   Constructor(former_slot, j, P, nf))
            ctors.append((slot, ctyp))
        self.build_recursor(d.name, former_slot, former_typ, P, X, ctors)

    def check_constructor(self, iname, former_slot, P, ctyp, line):
        tele = len(ctyp.params)
        cod = ctyp.codomain
        if cod.head != tele + former_slot:
            raise SyntaxErr(f"a constructor of {iname} must construct {iname}",
                            line)
        for k in range(P):
            a = cod.args[k]
            if not (isinstance(a, Term) and a.head == k and not a.args):
                raise NonPositiveOccurrence(
                    f"constructor of {iname} must keep parameters uniform", line)
        for a in cod.args[P:]:
            if _occurs_env(a, tele + former_slot):
                raise NonPositiveOccurrence(
                    f"{iname} occurs in its own indices", line)
        for m in range(P, tele):
            ft = ctyp.params[m][1]
            if ft is None:
                continue
            if _is_recursive_field(ft, tele, former_slot):
                for a in ft.codomain.args:
                    if _occurs_env(a, tele + former_slot):
                        raise NonPositiveOccurrence(
                            f"{iname}: recursive occurrence inside arguments",
                            line)
            elif _count_typ(ft, tele + former_slot):
                raise NonPositiveOccurrence(
                    f"{iname} occurs non-positively in a field", line)

    def build_recursor(self, iname, former_slot, former_typ, P, X, ctors):
        J = len(ctors)
        S = P + 1 + J + X + 1

        def fn_rec(k):
            if k < P:
                return k
            if k < P + X:
                return P + 1 + J + (k - P)
            return S + (k - (P + X))

        params = []
        for j in range(P):
            name, pt = former_typ.params[j]
            params.append((name, _remap_typ(pt, fn_rec)))

        def fn_motive(k):
            if k < P:
                return (X + 1) + k
            if k < P + X:
                return k - P
            return (X + 1) + S + (k - (P + X))

        m_params = []
        for x in range(X):
            name, pt = former_typ.params[P + x]
            m_params.append((name if name != "_" else f"i{x}",
                             _remap_typ(pt, fn_motive)))
        subject = Typ((), (), Term(
            (), (), (X + 1) + S + former_slot,
            tuple(_eta_ref((X + 1) + k, params[k][1]) for k in range(P))
            + tuple(_eta_ref(x, m_params[x][1]) for x in range(X))))
        m_params.append(("t", subject))
        motive_typ = Typ(tuple(m_params), (),
                         Term((), (), (X + 1) + S + self.sort_slot, ()))
        params.append(("motive", motive_typ))

        minor_typs = [self.minor_typ(former_slot, P, X, S, cslot, ctyp, params)
                      for cslot, ctyp in ctors]
        for j, mt in enumerate(minor_typs):
            cname = self.bindings[ctors[j][0]].name.split(".")[-1]
            params.append((f"case_{cname}", mt))

        for x in range(X):
            name, pt = former_typ.params[P + x]
            params.append((name if name != "_" else f"i{x}",
                           _remap_typ(pt, fn_rec)))
        major_typ = Typ((), (), Term(
            (), (), S + former_slot,
            tuple(_eta_ref(k, params[k][1]) for k in range(P))
            + tuple(Term((), (), P + 1 + J + x, ()) for x in range(X))))
        params.append(("t", major_typ))

        codomain = Term(
            (), (), P,
            tuple(Term((), (), P + 1 + J + x, ()) for x in range(X))
            + (Term((), (), P + 1 + J + X, ()),))
        rec_typ = Typ(tuple(params), (), codomain)
        red = Recursor(P + 1 + J, X, P + 1 + J + X, former_slot, {})
        rec_slot = self.add_binding(LetBinding(f"{iname}.rec", rec_typ, None, red))
        for j, (cslot, ctyp) in enumerate(ctors):
            red.rules[cslot] = self.iota_rule(former_slot, rec_slot, rec_typ,
                                              P, X, J, S, j, ctyp)

    def minor_typ(self, former_slot, P, X, S, cslot, ctyp, rec_params):
        tele = len(ctyp.params)
        Fc = tele - P
        recs = [m for m in range(Fc)
                if _is_recursive_field(ctyp.params[P + m][1], tele, former_slot)]
        L = Fc + len(recs)

        def fn_f(k):
            if k < P:
                return L + k
            if k < tele:
                return k - P
            return L + S + (k - tele)

        mp = []
        for m in range(Fc):
            name, ft = ctyp.params[P + m]
            mp.append((name if name != "_" else f"a{m}", _remap_typ(ft, fn_f)))
        for m in recs:
            ft = ctyp.params[P + m][1]
            idxs = tuple(_remap_term(a, fn_f) for a in ft.codomain.args[P:])
            ih = Typ((), (), Term((), (), L + P, idxs + (Term((), (), m, ()),)))
            mp.append((f"{mp[m][0]}_ih", ih))

        cod_idxs = tuple(_remap_term(a, fn_f) for a in ctyp.codomain.args[P:])
        capp = Term(
            (), (), L + S + cslot,
            tuple(_eta_ref(L + k, rec_params[k][1]) for k in range(P))
            + tuple(_eta_ref(m, mp[m][1]) for m in range(Fc)))
        return Typ(tuple(mp), (), Term((), (), L + P, cod_idxs + (capp,)))

    def iota_rule(self, former_slot, rec_slot, rec_typ, P, X, J, S, j, ctyp):
        tele = len(ctyp.params)
        Fc = tele - P
        shift = lambda k: S + k  # ctor frame sits S deeper in the rule frame

        args = []
        for m in range(Fc):
            ft = ctyp.params[P + m][1]
            args.append(_eta_ref(S + P + m, ft))
        for m in range(Fc):
            ft = ctyp.params[P + m][1]
            if not _is_recursive_field(ft, tele, former_slot):
                continue
            idxs = tuple(_remap_term(a, shift) for a in ft.codomain.args[P:])
            rec_args = tuple(_eta_ref(q, rec_typ.params[q][1])
                             for q in range(P + 1 + J)) \
                + idxs + (Term((), (), S + P + m, ()),)
            args.append(Term((), (), (S + tele) + rec_slot, rec_args))
        return Term((), (), P + 1 + j, tuple(args))

    # structures

    def elab_structure(self, d: Decl):
        sc0 = self.scope0()
        if d.result is not None and not isinstance(d.result, ESort):
            raise SyntaxErr(f"structure {d.name} must land in Sort", d.line)
        former_typ = self.translate_typ(_arrow_chain(d.tele, ESort()), sc0)
        P = len(d.tele)
        former_slot = self.add_opaque(d.name, former_typ)

        rigids = [self.mach.fresh_rigid(n) for n, _ in d.tele]
        scp, sub = sc0.push_block([[n, r, None] for (n, _), r in zip(d.tele, rigids)])
        for i in range(P):
            dt = former_typ.params[i][1]
            rigids[i].typ = Clo(dt, sub) if dt is not None else None
            scp.entries[i][2] = (dt, sub)
        fields = [(fname, self.translate_typ(fexpr, scp))
                  for fname, fexpr in d.members]
        F = len(fields)

        mk_params = [(n, _remap_typ(pt, lambda k: k if k < P else k + F))
                     for (n, pt) in former_typ.params]
        mk_params += [(fn_, core.shift_typ(ft, F, P)) for fn_, ft in fields]
        mk_cod = Term((), (), (P + F) + former_slot,
                      tuple(_eta_ref(k, mk_params[k][1]) for k in range(P)))
        mk_typ = Typ(tuple(mk_params), (), mk_cod)
        mk_slot = self.add_opaque(f"{d.name}.mk", mk_typ,
                                  Constructor(former_slot, 0, P, F))

        for m, (fname, ft) in enumerate(fields):
            pp = [(n, _remap_typ(pt, lambda k: k if k < P else k + 1))
                  for (n, pt) in former_typ.params]
            subj = Typ((), (), Term(
                (), (), (P + 1) + former_slot,
                tuple(_eta_ref(k, pp[k][1]) for k in range(P))))
            pp.append(("s", subj))
            fshift = core.shift_typ(ft, 1, P)
            proj_typ = _merge_proj_typ(pp, fshift)
            self.add_opaque(f"{d.name}.{fname}", proj_typ,
                            Projection(P, m, mk_slot, former_slot))

    # defs

    def elab_def(self, d: Decl):
        typ_expr = _arrow_chain(d.tele, d.result)
        body_expr = EFun([(n, None) for n, _ in d.tele], d.body) if d.tele \
            else d.body
        peeled, bbody = _peel_funs(body_expr)
        core_body = self.unalias(bbody, self.scope0())
        if isinstance(core_body, (EArrow, ESort)):
            self.add_alias(d.name, [n for n, _ in peeled], bbody)
            return
        sc0 = self.scope0()
        typ = self.translate_typ(typ_expr, sc0)
        body = self.term(body_expr, sc0, (typ, self.env_subst))
        keep_typ = self.mentions_recursor(body)
        self.add_binding(LetBinding(d.name, typ if keep_typ else None, body))
        # the declared type stays visible to translation either way; only the
        # binding's (search-facing) type follows the inclusion policy
        self.syms[d.name].typ = typ

    def mentions_recursor(self, t: Term, depth=0) -> bool:
        inner = depth + len(t.params) + len(t.lets)
        if t.head >= inner and t.head - inner < len(self.bindings):
            b = self.bindings[t.head - inner]
            if isinstance(b.reduction, (Recursor, Projection)):
                return True
        for a in t.args:
            if isinstance(a, Term) and self.mentions_recursor(a, inner):
                return True
        for l in t.lets:
            if l.definition is not None and self.mentions_recursor(l.definition, inner):
                return True
        return False


def _is_recursive_field(ft, ctor_tele, former_slot):
    """Directly recursive field: no binders, headed by the inductive."""
    if ft is None or ft.params or ft.lets:
        return False
    return ft.codomain.head == ctor_tele + former_slot


def _merge_proj_typ(pp, fshift):
    """Projection type: structure params, the subject, then the field's own
    binders (arrow fields join the projection's telescope)."""
    base = len(pp)
    ftele = len(fshift.params)
    if not ftele:
        return Typ(tuple(pp), (), fshift.codomain)

    def fn(k):
        # fshift frame: [ftele] ++ [base] ++ env  ->  [base+ftele] ++ env
        if k < ftele:
            return base + k
        if k < ftele + base:
            return k - ftele
        return k

    def fn_pp(k):
        # pp frame: [base] ++ env  ->  [base+ftele] ++ env
        return k if k < base else k + ftele

    pp2 = [(n, _remap_whole_typ(pt, fn_pp) if pt is not None else None)
           for n, pt in pp]
    extra = [(n, _remap_whole_typ(pt, fn) if pt is not None else None)
             for n, pt in fshift.params]
    cod = _remap_whole_term(fshift.codomain, fn)
    return Typ(tuple(pp2) + tuple(extra), (), cod)


def _remap_whole_term(t: Term, fn, depth=0) -> Term:
    """Like _remap_term but over pieces lifted out of a dissolved telescope:
    depth counts only binders introduced inside the moved pieces."""
    inner = depth + len(t.params) + len(t.lets)
    head = t.head
    if head >= inner:
        head = fn(t.head - inner) + inner
    args = tuple(_remap_whole_term(a, fn, inner) for a in t.args)
    return Term(t.params, t.lets, head, args)


def _remap_whole_typ(ty: Typ, fn, depth=0) -> Typ:
    inner = depth + len(ty.params) + len(ty.lets)
    params = tuple((n, _remap_whole_typ(p, fn, inner) if p else None)
                   for n, p in ty.params)
    return Typ(params, ty.lets, _remap_whole_term(ty.codomain, fn, inner))


# --- public API -------------------------------------------------------------------

class Problem:
    def __init__(self, env, goal, config, name, source, elab):
        self.env = env
        self.goal = goal
        self.config = config
        self.name = name
        self.source = source
        self._elab = elab


def parse(text: str):
    """Parse surface text into located declarations and pragmas."""
    return Parser(tokenize(text)).file()


def build_problem(text: str, name: str = "<string>") -> Problem:
    decls, pragmas = parse(text)
    names = [d.name for d in decls if d.kind != "goal"]
    if len(set(names)) != len(names):
        dup = sorted(n for n in names if names.count(n) > 1)[0]
        raise DuplicateName(f"{dup} is declared twice")
    elab = Elab()
    env, goal, config = elab.run(decls, pragmas)
    return Problem(env, goal, config, name, text, elab)


def parse_term(problem: Problem, text: str, expected: Typ | None = None) -> Term:
    """Translate a standalone surface term against the problem's environment,
    checked against `expected` (default: the goal)."""
    p = Parser(tokenize(text))
    e = p.expr()
    if p.peek().kind != "eof":
        t = p.peek()
        raise SyntaxErr(f"trailing input {t.val!r}", t.line, t.col)
    elab = problem._elab
    exp = expected if expected is not None else problem.goal
    t = elab.term(e, elab.scope0(), (exp, elab.env_subst))
    if len(elab.bindings) != len(problem.env.bindings):
        # the term introduced new literals; grow the environment in place so
        # existing references stay valid
        fresh = core.Environment(tuple(elab.bindings))
        problem.env.bindings = fresh.bindings
        problem.env.slot_of = fresh.slot_of
        elab.number_origins()
    return t
