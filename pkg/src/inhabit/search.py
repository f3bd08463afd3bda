"""Entropy-guided iterative-deepening DFS over refinements.

Entropy multiplies per-metavariable difficulty factors: a refined meta
contributes the branching factor observed at its refinement (plus a penalty
while its bin rarely completes), an unrefined one a statistics-driven
estimate of the refinements it will take, and a meta with a rigid equation
counts 1.  Iterations raise the threshold so each searches about twice the
nodes of the previous one; statistics merge between iterations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from . import core, equations, printer, refine


class Timeout(Exception):
    def __init__(self, partial):
        super().__init__("search timed out")
        self.partial = partial


class _NodeBudget(Exception):
    """An iteration hit its node ceiling; the frontier counts as pruned and
    the next iteration resumes above the same threshold."""


@dataclass
class BinStats:
    seen_count: int = 0
    gained_rigid_count: int = 0
    refinements_attempted: int = 0
    refinements_in_subtree: int = 0
    completions: int = 0
    violations_all_branches: int = 0

    def merge(self, other: "BinStats") -> "BinStats":
        return BinStats(
            self.seen_count + other.seen_count,
            self.gained_rigid_count + other.gained_rigid_count,
            self.refinements_attempted + other.refinements_attempted,
            self.refinements_in_subtree + other.refinements_in_subtree,
            self.completions + other.completions,
            self.violations_all_branches + other.violations_all_branches,
        )


def merge_stats(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out[k].merge(v) if k in out else v
    return out


@dataclass
class SearchConfig:
    timeout: float = 15.0
    count: int | None = 1          # None: enumerate exhaustively
    synthesis: bool = False
    workers: int = 1
    entropy_cap: float = 1000.0
    deterministic: bool = False
    prefilter: bool = True
    cold_avg: float = 8.0
    cold_p: float = 0.5
    min_seen: int = 16
    entropy_override: float = 4.0
    deadend_threshold: float = 0.9
    # >1 activates the low-completion penalty; off by default, since the
    # multiplicative surcharge prices deep-but-valid paths out of reach at
    # this implementation's search rates
    penalty_cap: float = 1.0
    grain: float = 64.0
    fork_depth: int = 2
    first_threshold_factor: float = 32.0
    # every refinement costs at least this factor, so forced chains still
    # deepen finitely within one iteration
    min_refined_factor: float = 1.05


@dataclass
class RunStats:
    refinements_total: int = 0
    nonviolating: int = 0
    recursive_calls: int = 0
    iterations: int = 0
    threshold_final: float = 0.0
    wall: float = 0.0
    final_iteration_wall: float = 0.0
    branching_sum: int = 0
    branching_n: int = 0
    nodes_per_iteration: list = field(default_factory=list)
    timed_out: bool = False

    @property
    def branching_factor(self):
        return self.branching_sum / self.branching_n if self.branching_n else 0.0

    def as_dict(self, deterministic=False):
        out = {
            "refinements_total": self.refinements_total,
            "nonviolating": self.nonviolating,
            "recursive_calls": self.recursive_calls,
            "branching_factor": round(self.branching_factor, 3),
            "iterations": self.iterations,
            "threshold_final": round(self.threshold_final, 3),
        }
        if not deterministic:
            wall = max(self.wall, 1e-9)
            out["refinements_per_sec"] = round(self.refinements_total / wall, 1)
            out["nonviolating_per_sec"] = round(self.nonviolating / wall, 1)
            out["recursive_calls_per_sec"] = round(self.recursive_calls / wall, 1)
            out["final_iteration_fraction"] = round(
                self.final_iteration_wall / wall, 3)
        return out


class EntropyModel:
    """Per-bin difficulty estimates derived from merged statistics.  The bin
    snapshot is read-only during an iteration, so estimates memoize per
    origin until `refresh`."""

    def __init__(self, bins: dict, cfg: SearchConfig):
        self.bins = bins
        self.cfg = cfg
        self._memo = {}

    def refresh(self, bins):
        self.bins = bins
        self._memo = {}

    def _bin(self, key):
        return self.bins.get(key)

    def rigid_probability(self, origin):
        w = self._bin((True, origin))
        wo = self._bin((False, origin))
        seen_r = w.seen_count if w else 0
        seen_n = wo.seen_count if wo else 0
        if seen_r + seen_n < self.cfg.min_seen:
            return self.cfg.cold_p
        return seen_r / (seen_r + seen_n)

    def avg_refinements(self, key):
        b = self._bin(key)
        if b is None or b.seen_count < self.cfg.min_seen:
            return self.cfg.cold_avg
        if b.completions == 0:
            # never completed so far: estimate grows with the evidence, so
            # uninhabitable-looking bins price their branches out (up to the
            # entropy cap)
            return max(self.cfg.cold_avg,
                       b.refinements_in_subtree / b.seen_count)
        return max(b.refinements_in_subtree / b.completions, 1.0)

    def unrefined(self, meta) -> float:
        if meta.rigid_count:
            return 1.0
        e = self._memo.get(meta.origin)
        if e is None:
            p = self.rigid_probability(meta.origin)
            avg = self.avg_refinements((False, meta.origin))
            e = min(max(p * 1.0 + (1.0 - p) * avg, 1.0), self.cfg.entropy_cap)
            self._memo[meta.origin] = e
        return e

    def penalty(self, key) -> float:
        """Extra factor for bins that infrequently lead to completions;
        healthy bins pay nothing, and the dfs lifts it per node once a
        completion shows up underneath."""
        b = self._bin(key)
        if b is None or b.seen_count < self.cfg.min_seen:
            return 1.0
        rate = b.completions / b.seen_count
        if rate >= 0.25:
            return 1.0
        if rate == 0.0:
            return self.cfg.penalty_cap
        return min(max(0.25 / rate, 1.0), self.cfg.penalty_cap)

    def deadend_ratio(self, meta):
        key = (meta.rigid_count > 0, meta.origin)
        b = self._bin(key)
        if b is None or b.seen_count < self.cfg.min_seen:
            return 0.0
        return b.violations_all_branches / b.seen_count


class Searcher:
    def __init__(self, problem, config: SearchConfig | None = None):
        self.problem = problem
        cfg = config or SearchConfig()
        self.cfg = cfg
        over = problem.config
        if over.get("synth") and config is None:
            cfg.synthesis = True
        self.store = refine.Store(problem.env, problem.goal,
                                  synthesis=cfg.synthesis)
        self.bins: dict = {}
        self.rs = RunStats()
        self.model = EntropyModel(self.bins, cfg)
        self._iter_bins: dict = {}
        self._deadline = None
        self._tick = 0
        self._log_refined = 0.0
        self._refined_stack = []
        self._min_pruned = None
        self._pruned_any = False
        self._log_threshold = 0.0
        self._node_ceiling = None

    # -- entropy bookkeeping --

    def _log_unrefined_sum(self):
        total = 0.0
        for m in self.store.unassigned.values():
            total += math.log(self.model.unrefined(m))
        return total

    def state_log_entropy(self):
        return self._log_refined + self._log_unrefined_sum()

    # -- statistics --

    def _observe(self, key, **deltas):
        b = self._iter_bins.get(key)
        if b is None:
            b = self._iter_bins[key] = BinStats()
        for k, v in deltas.items():
            setattr(b, k, getattr(b, k) + v)

    # -- metavariable ordering --

    def pick_metavariable(self):
        """Rigid equations first (oldest), then likely dead ends, then the
        latest metavariable unless an earlier one has much higher entropy."""
        st = self.store
        un = st.unassigned
        # ids are creation-ordered; the dict itself is not (undo re-inserts)
        ids = sorted(un)
        for i in ids:
            if un[i].rigid_count:
                return un[i]
        best = None
        best_ratio = self.cfg.deadend_threshold
        for i in ids:
            r = self.model.deadend_ratio(un[i])
            if r >= best_ratio:
                best, best_ratio = un[i], r
        if best is not None:
            return best
        last = un[ids[-1]]
        e_last = self.model.unrefined(last)
        choice, e_choice = last, e_last
        for i in ids[:-1]:
            e = self.model.unrefined(un[i])
            if e >= self.cfg.entropy_override * e_last and e > e_choice:
                choice, e_choice = un[i], e
        return choice

    # -- DFS --

    def _check_time(self):
        self._tick += 1
        if self._deadline is not None and (self._tick & 1023) == 0:
            if time.monotonic() > self._deadline:
                raise Timeout(None)

    def dfs(self):
        """Depth-first over refinements below the entropy threshold; yields
        extracted terms."""
        st = self.store
        if not st.unassigned:
            for rec in self._refined_stack:
                if not rec["completed"]:
                    # low-completion penalties lift once a completion is seen
                    rec["completed"] = True
                    self._log_refined -= rec["penalty_log"]
                    rec["log"] -= rec["penalty_log"]
            yield refine.extract_term(st.root)
            return
        self._check_time()
        meta = self.pick_metavariable()
        cands = refine.candidates(st, meta)
        expected = refine.expected_head(st, meta)
        had_rigid = meta.rigid_count > 0
        key = (had_rigid, meta.origin)
        if self.cfg.prefilter:
            survivors = []
            rejected = 0
            for cand in cands:
                if refine.quick_reject(st, meta, cand, expected):
                    # a refinement attempt resolved by head comparison alone
                    rejected += 1
                else:
                    survivors.append(cand)
            self.rs.refinements_total += rejected
        else:
            survivors = cands
            rejected = 0
        branching = len(survivors)
        self.rs.branching_sum += branching
        self.rs.branching_n += 1
        self._observe(key, seen_count=1,
                      gained_rigid_count=1 if had_rigid else 0,
                      refinements_attempted=rejected + branching)
        all_violated = True

        for cand in survivors:
            self.rs.refinements_total += 1
            children = refine.refine(st, meta, cand)
            if children is None:
                continue
            all_violated = False
            self.rs.nonviolating += 1

            plog = math.log(self.model.penalty(key))
            blog = max(math.log(max(branching, 1)),
                       math.log(self.cfg.min_refined_factor))
            rec = {"meta": meta, "key": key, "completed": False,
                   "refs_before": self.rs.refinements_total,
                   "log": blog + plog, "penalty_log": plog}
            self._log_refined += rec["log"]
            self._refined_stack.append(rec)

            log_e = self.state_log_entropy()
            if log_e > self._log_threshold:
                self._pruned_any = True
                if self._min_pruned is None or log_e < self._min_pruned:
                    self._min_pruned = log_e
            else:
                self.rs.recursive_calls += 1
                if self._node_ceiling is not None and \
                        self.rs.recursive_calls >= self._node_ceiling:
                    self._pruned_any = True
                    raise _NodeBudget()
                yield from self.dfs()

            self._refined_stack.pop()
            self._log_refined -= rec["log"]
            self._observe(key, refinements_in_subtree=(
                self.rs.refinements_total - rec["refs_before"]))
            if rec["completed"]:
                self._observe(key, completions=1)
            refine.backtrack(st, meta)

        if all_violated:
            self._observe(key, violations_all_branches=1)

    # -- iterative deepening --

    def solve(self):
        """Run the schedule; returns (terms, RunStats).

        Each iteration targets twice the nodes of the previous one.  An
        undershooting walk extends the iteration at a raised threshold; a
        walk that reaches three times the previous count stops early with
        its frontier marked pruned.  Terminal iterations (solution quota,
        exhaustion, timeout) stop wherever they stop.
        """
        cfg = self.cfg
        started = time.monotonic()
        self._deadline = started + cfg.timeout if cfg.timeout else None
        count = cfg.count
        found: dict = {}
        thresholds = []
        nodes_hist = []
        log_t = self.state_log_entropy() + math.log(cfg.first_threshold_factor)
        exhausted = False
        terminal = False
        prev_nodes = None

        while True:
            self.rs.iterations += 1
            iter_started = time.monotonic()
            self._iter_bins = {}
            iter_nodes = 0
            mark0 = self.store.trail.mark()

            while True:  # extension walks within one schedule step
                self._log_threshold = log_t
                self._min_pruned = None
                self._pruned_any = False
                self._node_ceiling = None
                if prev_nodes is not None and cfg.workers == 1:
                    self._node_ceiling = (self.rs.recursive_calls
                                          + int(3 * prev_nodes) - iter_nodes)
                nodes_before = self.rs.recursive_calls
                budget_stop = False
                try:
                    if cfg.workers > 1:
                        self._parallel_iteration(found, count, log_t)
                    else:
                        for term in self.dfs():
                            k = core.term_key(term)
                            if k not in found:
                                found[k] = term
                            if count is not None and len(found) >= count:
                                raise _Done()
                except _Done:
                    terminal = True
                except Timeout:
                    self.rs.timed_out = True
                    terminal = True
                except _NodeBudget:
                    budget_stop = True
                    self.store.trail.undo(mark0)
                    self._refined_stack.clear()
                    self._log_refined = 0.0
                iter_nodes += self.rs.recursive_calls - nodes_before
                if not terminal and not self._pruned_any:
                    exhausted = True
                    terminal = True
                if terminal or budget_stop or prev_nodes is None \
                        or iter_nodes >= 1.5 * prev_nodes:
                    break
                # undershoot: raise the threshold and walk again
                log_t = self._next_threshold(thresholds + [log_t],
                                             nodes_hist + [max(iter_nodes, 1)])

            self.bins = merge_stats(self.bins, self._iter_bins)
            self.model.refresh(self.bins)
            self.rs.final_iteration_wall = time.monotonic() - iter_started
            thresholds.append(log_t)
            nodes_hist.append(max(iter_nodes, 1))
            self.rs.nodes_per_iteration.append(iter_nodes)
            self.rs.threshold_final = math.exp(min(log_t, 700.0))
            prev_nodes = max(iter_nodes, 1)

            if terminal:
                break
            if budget_stop:
                log_t = log_t + 1e-9  # same frontier, thresholds stay increasing
            else:
                log_t = self._next_threshold(thresholds, nodes_hist)

        self.rs.wall = time.monotonic() - started
        self.exhausted = exhausted
        return list(found.values()), self.rs

    def _next_threshold(self, thresholds, nodes):
        """Aim the next iteration at twice the nodes of the last one, fitting
        the node-vs-threshold slope from the last two iterations."""
        log_t = thresholds[-1]
        if len(nodes) >= 2 and nodes[-1] > nodes[-2]:
            dt = thresholds[-1] - thresholds[-2]
            dn = math.log(nodes[-1]) - math.log(nodes[-2])
            step = dt * (math.log(2.0) / dn) if dn > 0 else dt
            step = min(max(step, math.log(1.3)), math.log(4.0))
        else:
            step = math.log(2.0)
        nxt = log_t + step
        if self._min_pruned is not None and nxt <= self._min_pruned:
            nxt = self._min_pruned + 1e-9
        return nxt

    # -- fork-join parallelism --

    def frontier_jobs(self, max_jobs):
        """Candidate-index prefixes that partition the tree at a shallow
        depth; replayed by workers on cloned state."""
        jobs = []

        def explore(prefix, depth):
            st = self.store
            if not st.unassigned or depth >= self.cfg.fork_depth or \
                    len(jobs) + 1 >= max_jobs:
                jobs.append(tuple(prefix))
                return
            est = math.exp(min(self.state_log_entropy(), 60.0))
            if est < self.cfg.grain:
                jobs.append(tuple(prefix))
                return
            meta = self.pick_metavariable()
            survivors = self._survivors(meta)
            for i, cand in enumerate(survivors):
                children = refine.refine(st, meta, cand)
                if children is None:
                    continue
                explore(prefix + [i], depth + 1)
                refine.backtrack(st, meta)

        explore([], 0)
        return jobs

    def _survivors(self, meta):
        cands = refine.candidates(self.store, meta)
        if not self.cfg.prefilter:
            return cands
        expected = refine.expected_head(self.store, meta)
        return [c for c in cands
                if not refine.quick_reject(self.store, meta, c, expected)]

    def replay(self, prefix):
        """Re-apply a decision prefix; mirrors dfs bookkeeping so pruning in
        the subtree matches the sequential run.  Returns False if the prefix
        no longer applies."""
        st = self.store
        for i in prefix:
            meta = self.pick_metavariable()
            survivors = self._survivors(meta)
            if i >= len(survivors):
                return False
            key = (meta.rigid_count > 0, meta.origin)
            self.rs.refinements_total += 1
            children = refine.refine(st, meta, survivors[i])
            if children is None:
                return False
            plog = math.log(self.model.penalty(key))
            blog = max(math.log(max(len(survivors), 1)),
                       math.log(self.cfg.min_refined_factor))
            rec = {"meta": meta, "key": key, "completed": False,
                   "refs_before": self.rs.refinements_total,
                   "log": blog + plog, "penalty_log": plog}
            self._log_refined += rec["log"]
            self._refined_stack.append(rec)
        return True

    def _parallel_iteration(self, found, count, log_t):
        from . import parallel
        jobs = self.frontier_jobs(4 * self.cfg.workers)
        if len(jobs) <= 1:
            for term in self.dfs():
                k = core.term_key(term)
                if k not in found:
                    found[k] = term
                if count is not None and len(found) >= count:
                    raise _Done()
            return
        results = parallel.run_jobs(self.problem, self.cfg, self.bins,
                                    log_t, jobs)
        for sols, bins, pruned_any, min_pruned, rstats in results:
            self._iter_bins = merge_stats(self._iter_bins, bins)
            self._pruned_any = self._pruned_any or pruned_any
            if min_pruned is not None and (self._min_pruned is None
                                           or min_pruned < self._min_pruned):
                self._min_pruned = min_pruned
            self.rs.refinements_total += rstats[0]
            self.rs.nonviolating += rstats[1]
            self.rs.recursive_calls += rstats[2]
            for text in sols:
                term = _reparse_solution(self.problem, text)
                k = core.term_key(term)
                if k not in found:
                    found[k] = term
        if count is not None and len(found) >= count:
            raise _Done()


class _Done(Exception):
    pass


def _reparse_solution(problem, text):
    from . import frontend
    return frontend.parse_term(problem, text)


def run_prefix_job(problem, cfg, bins, log_threshold, prefix):
    """Worker entry: replay a prefix, search its subtree, report printed
    solutions and statistics deltas."""
    s = Searcher(problem, cfg)
    s.bins = bins
    s.model.refresh(bins)
    s._log_threshold = log_threshold
    sols = []
    if s.replay(list(prefix)):
        pr = printer.Printer(problem.env)
        try:
            for term in s.dfs():
                sols.append(pr.term(term))
        except Timeout:
            pass
    return (sols, s._iter_bins, s._pruned_any, s._min_pruned,
            (s.rs.refinements_total, s.rs.nonviolating, s.rs.recursive_calls))


def solve(problem, config: SearchConfig | None = None):
    """Solve a problem; returns (terms, RunStats, Searcher)."""
    if config is None:
        config = SearchConfig()
        if problem.config.get("synth"):
            config.synthesis = True
        if "count" in problem.config:
            config.count = problem.config["count"]
        if "timeout" in problem.config:
            config.timeout = problem.config["timeout"]
    s = Searcher(problem, config)
    terms, rs = s.solve()
    return terms, rs, s
