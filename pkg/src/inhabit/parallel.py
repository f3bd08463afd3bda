"""Fork-join worker pool: jobs are candidate-index prefixes replayed on a
fresh store built from the problem source, so nothing mutable crosses the
process boundary."""

from __future__ import annotations

import concurrent.futures

_worker_problem = None


def _init(source, name):
    global _worker_problem
    from . import frontend
    _worker_problem = frontend.build_problem(source, name)


def _run(args):
    cfg, bins, log_t, prefix = args
    from . import search
    return search.run_prefix_job(_worker_problem, cfg, bins, log_t, prefix)


def run_jobs(problem, cfg, bins, log_t, jobs):
    payload = [(cfg, bins, log_t, j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(
            max_workers=cfg.workers, initializer=_init,
            initargs=(problem.source, problem.name)) as ex:
        return list(ex.map(_run, payload))
