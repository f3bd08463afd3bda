"""Equational constraints: processing, decomposition, violation detection,
suspension on metavariables, and the recursor/projection stuckness policy.

An equation's sides are (entry, spine) pairs; both sides are required
beta-equal.  Reduction that ends on a metavariable head suspends the
equation on that meta; refining the meta re-processes it, and the trail
restores everything on backtrack.
"""

from __future__ import annotations

from . import machine as M

OPEN = "open"
SATISFIED = "satisfied"
VIOLATED = "violated"
DECOMPOSED = "decomposed"


class Equation:
    __slots__ = ("serial", "lhs", "rhs", "status", "reason", "stuck_on",
                 "rigid", "children", "rigid_head")

    def __init__(self, serial, lhs, rhs):
        self.serial = serial
        self.lhs = lhs
        self.rhs = rhs
        self.status = OPEN
        self.reason = None
        self.stuck_on = ()
        self.rigid = False
        self.children = ()
        self.rigid_head = None  # cached rigid-side head while suspended

    def __repr__(self):
        return f"<eq {self.serial} {self.status}>"


def new_equation(state, lhs, rhs):
    # the equations list is append-only between trail marks; refine() notes
    # one truncation entry per step instead of one per equation
    eq = Equation(state.next_serial(), lhs, rhs)
    state.equations.append(eq)
    return eq


def process(state, eq, depth=0):
    """Reduce both sides and settle the equation's status.  Returns False iff
    this equation or a descendant became Violated."""
    m = state.machine
    synth = state.synthesis
    lhs, rhs = eq.lhs, eq.rhs

    # Expose binders before reducing so bound variables compare rigidly.
    while True:
        na = m.syntactic_binders(lhs)
        nb = m.syntactic_binders(rhs)
        n = max(na, nb)
        if n == 0:
            break
        lhs, rhs = m.enter_binders(lhs, rhs, n)

    wa = m.whnf(*lhs)
    wb = m.whnf(*rhs)
    while type(wa) is M.Abs or type(wb) is M.Abs:
        n = wa.n if type(wa) is M.Abs else wb.n
        lhs, rhs = m.enter_binders(_as_side(wa, lhs), _as_side(wb, rhs), n)
        wa = m.whnf(*lhs)
        wb = m.whnf(*rhs)

    stuck_a = _stuck_meta(wa, synth)
    stuck_b = _stuck_meta(wb, synth)
    if stuck_a or stuck_b:
        metas = []
        if stuck_a:
            metas.append(stuck_a)
        if stuck_b and stuck_b is not stuck_a:
            metas.append(stuck_b)
        rigid = not (stuck_a and stuck_b)
        head = None
        if rigid:
            head = (wb if stuck_a else wa).head
        _suspend(state, eq, tuple(metas), rigid, head)
        return True

    verdict = m.heads_equal(wa, wb, synth)
    if verdict == M.UNEQUAL:
        _set(state, eq, VIOLATED)
        eq.reason = (wa.head, wb.head)
        state.trail.note_attr(eq, "reason", None)
        return False
    # Equal heads: propagate into the spines.
    if len(wa.spine) != len(wb.spine):
        raise M.MachineError("spine length mismatch under equal heads")
    if not wa.spine:
        _set(state, eq, SATISFIED)
        return True
    children = []
    ok = True
    for x, y in zip(wa.spine, wb.spine):
        if x is y:
            continue  # shared entry: trivially equal
        child = new_equation(state, (x, ()), (y, ()))
        children.append(child)
        if not process(state, child, depth + 1):
            ok = False
            break
    _set(state, eq, DECOMPOSED)
    state.trail.note_attr(eq, "children", eq.children)
    eq.children = tuple(children)
    return ok


def _as_side(w, side):
    if type(w) is M.Abs:
        return (w.clo, ())
    if type(w) is M.StuckMeta:
        return (M.Clo(w.meta.hole, w.subst), w.spine)
    raise M.MachineError("cannot re-enter a rigid application")


def _stuck_meta(w, synth):
    if type(w) is M.StuckMeta:
        return w.meta
    if synth and type(w) is M.StuckRed:
        return w.meta
    return None


def _suspend(state, eq, metas, rigid, head):
    eq.stuck_on = metas
    eq.rigid = rigid
    eq.rigid_head = head
    for meta in metas:
        meta.stuck_eqs.append(eq)
        if rigid:
            meta.rigid_count += 1
    state.trail.note_suspend(eq, metas, rigid)


def _release(state, eq):
    """Detach a suspended equation from its metas before re-processing."""
    positions = []
    for meta in eq.stuck_on:
        idx = meta.stuck_eqs.index(eq)
        positions.append((meta, idx))
        del meta.stuck_eqs[idx]
        if eq.rigid:
            meta.rigid_count -= 1
    state.trail.note_release(eq, (tuple(positions), eq.stuck_on, eq.rigid,
                                  eq.rigid_head))
    eq.stuck_on = ()
    eq.rigid = False
    eq.rigid_head = None


def _set(state, eq, status):
    state.trail.note_attr(eq, "status", eq.status)
    eq.status = status


def on_assign(state, meta):
    """Re-process every equation suspended on a freshly assigned meta.
    Returns False on any violation (caller backtracks)."""
    wake = list(meta.stuck_eqs)
    for eq in wake:
        if eq.status is not OPEN:
            continue
        _release(state, eq)
        if not process(state, eq):
            return False
    return True


def rigid_equation_of(state, meta):
    """Oldest open rigid equation suspended on the meta, if any."""
    for eq in meta.stuck_eqs:
        if eq.status is OPEN and eq.rigid:
            return eq
    return None
