"""Metavariable store, candidate enumeration, refinement, and the trail.

A metavariable's value is syntax written against its frame: the telescope of
its own type extended over its home substitution.  Occurrence substitutions
are built block-aligned with that frame, so a value reads back correctly at
every occurrence.  All mutation is logged on the trail and reverses exactly.
"""

from __future__ import annotations

from . import core, equations
from .core import Constructor, Projection, Recursor
from .machine import Clo, Hole, Machine, Rigid, Subst
from . import machine as M


class RefineError(Exception):
    pass


class IncompleteTerm(RefineError):
    pass


class NotTopOfTrail(RefineError):
    pass


class TrailCorruption(RefineError):
    pass


class Trail:
    """Append-only log of reversible store mutations."""

    __slots__ = ("entries",)

    ATTR, POP, INSERT, DICT_DEL, ASSIGN, SUSPEND, RELEASE, TRUNC, KIDS = range(9)

    def __init__(self):
        self.entries = []

    def mark(self):
        return len(self.entries)

    def note_attr(self, obj, name, old):
        self.entries.append((Trail.ATTR, obj, (name, old)))

    def note_pop(self, lst):
        self.entries.append((Trail.POP, lst, None))

    def note_insert(self, lst, idx, item):
        self.entries.append((Trail.INSERT, lst, (idx, item)))

    def note_dict_del(self, d, key):
        self.entries.append((Trail.DICT_DEL, d, key))

    def note_assign(self, store, meta):
        self.entries.append((Trail.ASSIGN, store, meta))

    def note_suspend(self, eq, metas, rigid):
        self.entries.append((Trail.SUSPEND, eq, (metas, rigid)))

    def note_release(self, eq, saved):
        self.entries.append((Trail.RELEASE, eq, saved))

    def note_trunc(self, lst):
        self.entries.append((Trail.TRUNC, lst, len(lst)))

    def note_kids(self, store, kids):
        self.entries.append((Trail.KIDS, store, kids))

    def undo(self, mark):
        entries = self.entries
        if mark > len(entries):
            raise TrailCorruption("mark beyond trail head")
        while len(entries) > mark:
            kind, a, b = entries.pop()
            if kind == Trail.ATTR:
                setattr(a, b[0], b[1])
            elif kind == Trail.POP:
                a.pop()
            elif kind == Trail.INSERT:
                a.insert(b[0], b[1])
            elif kind == Trail.DICT_DEL:
                del a[b]
            elif kind == Trail.ASSIGN:
                meta = b
                meta.value_node = None
                meta.refinement = None
                meta.typing_active = True
                a.unassigned[meta.id] = meta
                a.refine_stack.pop()
            elif kind == Trail.SUSPEND:
                metas, rigid = b
                for m in metas:
                    m.stuck_eqs.pop()
                    if rigid:
                        m.rigid_count -= 1
                a.stuck_on = ()
                a.rigid = False
                a.rigid_head = None
            elif kind == Trail.RELEASE:
                positions, stuck_on, rigid, head = b
                for m, idx in positions:
                    m.stuck_eqs.insert(idx, a)
                    if rigid:
                        m.rigid_count += 1
                a.stuck_on = stuck_on
                a.rigid = rigid
                a.rigid_head = head
            elif kind == Trail.TRUNC:
                del a[b:]
            elif kind == Trail.KIDS:
                for m in b:
                    del a.unassigned[m.id]


class Meta:
    __slots__ = ("id", "typ_node", "typ_subst", "home", "hole", "arity",
                 "frame", "tyframe", "value_node", "refinement", "stuck_eqs",
                 "rigid_count", "typing_active", "is_major", "origin",
                 "cands", "parent", "path", "depth")

    def __init__(self, mid, typ_node, typ_subst, home, parent=None, path=()):
        self.id = mid
        self.typ_node = typ_node          # core.Typ or None (untyped slot)
        self.typ_subst = typ_subst
        self.home = home
        self.hole = Hole(self)
        self.arity = len(typ_node.params) if typ_node is not None else 0
        self.frame = None
        self.tyframe = None
        self.value_node = None
        self.refinement = None
        self.stuck_eqs = []
        self.rigid_count = 0
        self.typing_active = True
        self.is_major = False
        self.origin = typ_node.origin if typ_node is not None else -1
        self.cands = None
        self.parent = parent
        self.path = path                  # stable identity across orderings
        self.depth = parent.depth + 1 if parent else 0

    def __repr__(self):
        return f"<meta ?{self.id}{' := ' + str(self.refinement.name) if self.refinement else ''}>"


class Refinement:
    __slots__ = ("head_pos", "name", "cand", "children", "equation", "mark")

    def __init__(self, head_pos, name, cand, children, equation, mark):
        self.head_pos = head_pos
        self.name = name
        self.cand = cand
        self.children = children
        self.equation = equation
        self.mark = mark


class Candidate:
    __slots__ = ("pos", "name", "typ_node", "typ_subst", "codo_rigid",
                 "reduction", "irreducible", "local")

    def __init__(self, pos, name, typ_node, typ_subst, codo_rigid, reduction,
                 irreducible, local):
        self.pos = pos
        self.name = name
        self.typ_node = typ_node
        self.typ_subst = typ_subst
        self.codo_rigid = codo_rigid    # statically known whnf head, or None
        self.reduction = reduction
        self.irreducible = irreducible  # head survives whnf as itself
        self.local = local

    def __repr__(self):
        return f"cand({self.name}@{self.pos})"


class Store:
    """Mutable per-branch search state: metas, equations, trail."""

    def __init__(self, env, goal, synthesis=False, machine=None):
        self.env = env
        self.goal = goal
        self.machine = machine if machine is not None else Machine(env)
        self.env_subst = self.machine.env_subst
        self.synthesis = synthesis
        self.trail = Trail()
        self.equations = []
        self.unassigned = {}
        self.refine_stack = []
        self._meta_ids = 0
        self._eq_serials = 0
        self.env_cands = _env_candidates(self.machine)
        self.root = self.new_meta(goal, self.env_subst, self.env_subst,
                                  parent=None, path=())

    def next_serial(self):
        self._eq_serials += 1
        return self._eq_serials

    def new_meta(self, typ_node, typ_subst, home, parent, path, register=True):
        # Child types never carry telescope lets (the environment is the one
        # let block, and it is the substitution tail); value frames rely on it.
        assert parent is None or typ_node is None or not typ_node.lets
        self._meta_ids += 1
        m = Meta(self._meta_ids, typ_node, typ_subst, home, parent, path)
        self.unassigned[m.id] = m
        if register:
            self.trail.note_dict_del(self.unassigned, m.id)
        return m

    def structural_hash(self):
        """Hash of the semantic store (statistics excluded); exact trail
        restoration is checked against it."""
        parts = []
        for m in self.iter_live():
            r = m.refinement
            parts.append((
                m.id,
                r.head_pos if r else None,
                tuple(c.id for c in r.children) if r else None,
                m.typing_active,
                m.rigid_count,
                tuple(e.serial for e in m.stuck_eqs),
            ))
        for eq in self.equations:
            parts.append((eq.serial, eq.status, eq.rigid,
                          tuple(m.id for m in eq.stuck_on),
                          tuple(c.serial for c in eq.children)))
        parts.append(tuple(sorted(self.unassigned)))
        return hash(tuple(parts))

    def iter_live(self):
        stack = [self.root]
        while stack:
            m = stack.pop()
            yield m
            if m.refinement:
                stack.extend(reversed(m.refinement.children))


def _codomain_rigid(mach, typ_node, typ_subst):
    """Head the candidate's codomain is guaranteed to expose, or None."""
    tele = len(typ_node.params) + len(typ_node.lets)
    head = typ_node.codomain.head
    node_args = bool(typ_node.codomain.args)
    subst = typ_subst
    for _ in range(16):
        if head < tele:
            return None  # depends on the telescope: flexible
        entry = subst.lookup(head - tele)
        if type(entry) is Rigid:
            red = entry.reduction
            if red is None or type(red) is Constructor:
                return entry
            return None  # recursor/projection-headed: may reduce
        node = entry.node
        if type(node) is not core.Term:
            return None
        if node.params or node.args or node_args:
            return None  # unfolds into an application: give up statically
        tele = len(node.lets)
        head = node.head
        subst = entry.subst
    return None


def _env_candidates(mach):
    out = []
    env = mach.env
    subst = mach.env_subst
    for slot, b in enumerate(env.bindings):
        if b.typ is None:
            continue
        entry = subst.block[slot]
        irr = type(entry) is Rigid and (
            entry.reduction is None or type(entry.reduction) is Constructor)
        out.append(Candidate(
            slot, b.name, b.typ, subst,
            _codomain_rigid(mach, b.typ, subst),
            b.reduction, irr, False))
    return out


def ensure_frames(store, meta):
    if meta.frame is not None:
        return
    mach = store.machine
    tyn = meta.typ_node
    rigids = [mach.fresh_rigid(name) for name, _ in tyn.params]
    tyframe = mach.extend(tyn, meta.typ_subst, rigids)
    for r, (_, pty) in zip(rigids, tyn.params):
        r.typ = Clo(pty, tyframe) if pty is not None else None
    meta.tyframe = tyframe
    meta.frame = Subst(tyframe.block, meta.home)


def candidates(store, meta, prefilter=False, expected=None):
    """Heads the meta may be refined with, innermost context first, then the
    environment in declaration order."""
    ensure_frames(store, meta)
    if meta.cands is None:
        out = []
        base = 0
        s = meta.frame
        while s is not store.env_subst:
            # most recently bound first within the block, innermost block first
            for i in range(len(s.block) - 1, -1, -1):
                entry = s.block[i]
                if type(entry) is Rigid and entry.typ is not None:
                    red = entry.reduction
                    if not (meta.is_major and type(red) is Constructor):
                        tclo = entry.typ
                        irr = red is None or type(red) is Constructor
                        out.append(Candidate(
                            base + i, entry.name, tclo.node, tclo.subst,
                            _codomain_rigid(store.machine, tclo.node, tclo.subst),
                            red, irr, True))
            base += len(s.block)
            s = s.tail
        for c in store.env_cands:
            if meta.is_major and type(c.reduction) is Constructor:
                continue
            out.append(Candidate(base + c.pos, c.name, c.typ_node, c.typ_subst,
                                 c.codo_rigid, c.reduction, c.irreducible,
                                 False))
        meta.cands = out
    if not prefilter:
        return meta.cands
    if expected is None:
        expected = expected_head(store, meta)
    return [c for c in meta.cands if not quick_reject(store, meta, c, expected)]


def expected_head(store, meta):
    """Whnf of the meta's expected codomain, for the pre-unification filter."""
    ensure_frames(store, meta)
    return store.machine.whnf(Clo(meta.typ_node.codomain, meta.tyframe))


def quick_reject(store, meta, cand, expected):
    """True iff the refinement is doomed on head comparison alone: either the
    spine equation's heads cannot match, or a rigid equation already pins the
    meta's value to a different irreducible head.  Mirrors the equation
    policy, so it never rejects anything process() would keep."""
    if expected is not None:
        te = type(expected)
        comparable = te is M.Head or (te is M.StuckRed and not store.synthesis)
        if (comparable and cand.codo_rigid is not None
                and cand.codo_rigid is not expected.head):
            return True
    if cand.irreducible and not cand.local and meta.rigid_count:
        # Environment heads survive every occurrence substitution, so the
        # value's whnf head is the candidate itself.
        env_entry = store.env_subst.block[cand.pos - _above_env(meta)]
        if type(env_entry) is Rigid:
            for eq in meta.stuck_eqs:
                if eq.status is equations.OPEN and eq.rigid \
                        and eq.rigid_head is not None \
                        and eq.rigid_head is not env_entry:
                    return True
    return False


def _above_env(meta):
    """Total block length of the meta's frame chain above the environment."""
    n = 0
    s = meta.frame
    env = None
    while s is not None:
        if s.tail is None:
            env = s
            break
        n += len(s.block)
        s = s.tail
    return n


def refine(store, meta, cand):
    """Assign `cand` as the meta's head.  Creates the argument metas, the
    spine equation, and the children's typing constraints; wakes suspended
    equations.  Returns the children, or None after auto-backtracking on a
    violation."""
    assert meta.value_node is None and meta.typing_active
    ensure_frames(store, meta)
    mach = store.machine
    trail = store.trail
    mark = trail.mark()
    trail.note_trunc(store.equations)

    ftyp = cand.typ_node
    children = []
    occ = []
    for i, (pname, pty) in enumerate(ftyp.params):
        c = store.new_meta(pty, None, meta.frame, parent=meta,
                           path=meta.path + (i,), register=False)
        children.append(c)
        occ.append(Clo(c.hole, meta.frame))
    if children:
        trail.note_kids(store, tuple(children))
    tau = mach.extend(ftyp, cand.typ_subst, occ)
    for c in children:
        c.typ_subst = tau
    red = cand.reduction
    if type(red) is Recursor:
        children[red.major].is_major = True
    elif type(red) is Projection:
        children[red.n_params].is_major = True

    value = core.Term(
        tuple(n for n, _ in meta.typ_node.params), (), cand.pos,
        tuple(c.hole for c in children))
    eq = equations.new_equation(
        store, (Clo(ftyp.codomain, tau), ()),
        (Clo(meta.typ_node.codomain, meta.tyframe), ()))

    meta.value_node = value
    meta.refinement = Refinement(cand.pos, cand.name, cand, tuple(children),
                                 eq, mark)
    meta.typing_active = False
    del store.unassigned[meta.id]
    store.refine_stack.append(meta)
    trail.note_assign(store, meta)

    ok = equations.process(store, eq)
    if ok:
        ok = equations.on_assign(store, meta)
    if not ok:
        trail.undo(mark)
        return None
    return children


def backtrack(store, meta):
    """Undo the most recent refinement; typing constraints reactivate and all
    equation state rolls back to the refinement's mark."""
    if not store.refine_stack or store.refine_stack[-1] is not meta:
        raise NotTopOfTrail(f"{meta} is not the most recent refinement")
    r = meta.refinement
    store.trail.undo(r.mark)
    if meta.refinement is not None or not meta.typing_active:
        raise TrailCorruption("refinement survived its own undo")


def extract_term(meta):
    """Read the assignment tree back into a pure core term."""
    node = meta.value_node
    if node is None:
        raise IncompleteTerm(f"?{meta.id} is unassigned")
    args = tuple(extract_term(h.meta) for h in node.args)
    return core.Term(node.params, (), node.head, args)
