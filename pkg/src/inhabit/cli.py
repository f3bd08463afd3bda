"""Command-line entry point: solve problem files, run the benchmark corpus,
emit result tables and figures."""

from __future__ import annotations

import os
import sys
import time
from pathlib import Path

import click

from . import core, frontend, oracle, printer, search
from .wellformed import check_wellformed

CSV_HEADER = ("problem,outcome,solutions,wall_s,proof_len,refinements_total,"
              "refinements_per_sec,nonviolating_per_sec,recursive_calls_per_sec,"
              "branching_factor,final_iteration_fraction,iterations,"
              "threshold_final")


def _config(problem, timeout, count, synth, workers, deterministic, no_prefilter):
    cfg = search.SearchConfig()
    cfg.timeout = problem.config.get("timeout", 15.0)
    cfg.count = problem.config.get("count", 1)
    cfg.synthesis = bool(problem.config.get("synth", False))
    if timeout is not None:
        cfg.timeout = timeout
    if count is not None:
        cfg.count = None if count == 0 else count
    if synth:
        cfg.synthesis = True
    env_workers = os.environ.get("CANON_WORKERS")
    cfg.workers = workers if workers is not None else (
        int(env_workers) if env_workers else 1)
    cfg.deterministic = deterministic
    if deterministic:
        cfg.workers = 1
    cfg.prefilter = not no_prefilter
    return cfg


@click.group()
def main():
    """Exhaustive type-inhabitation search over problem files (.canon)."""
    sys.setrecursionlimit(200_000)


@main.command(name="solve")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--timeout", type=float, default=None, help="seconds (default 15 or pragma)")
@click.option("--count", type=int, default=None, help="inhabitants to find (0 = all)")
@click.option("--synth", is_flag=True, help="program synthesis mode")
@click.option("--workers", type=int, default=None)
@click.option("--stats", "show_stats", is_flag=True, help="print run statistics")
@click.option("--check", "check", is_flag=True, help="oracle-check every solution")
@click.option("--deterministic", is_flag=True, help="byte-reproducible output")
@click.option("--no-prefilter", is_flag=True, help="disable the candidate pre-filter")
def cmd_solve(path, timeout, count, synth, workers, show_stats, check,
              deterministic, no_prefilter):
    """Solve one problem file; prints each solution as a surface term."""
    try:
        problem = frontend.build_problem(Path(path).read_text(), Path(path).name)
    except frontend.SourceError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    cfg = _config(problem, timeout, count, synth, workers, deterministic,
                  no_prefilter)
    try:
        terms, rs, _ = search.solve(problem, cfg)
    except core.CoreError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    pr = printer.Printer(problem.env)
    for t in terms:
        click.echo(pr.term(t))
        if check:
            rep = oracle.oracle_check(problem.env, t, problem.goal)
            if not rep.accepted:
                click.echo(f"error: oracle rejected a solution: {rep.reason}",
                           err=True)
                sys.exit(1)
            wf = check_wellformed(problem.env, t, problem.goal)
            if not wf.ok:
                click.echo(f"error: checker rejected a solution: {wf.code}",
                           err=True)
                sys.exit(1)
    if show_stats:
        for k, v in rs.as_dict(cfg.deterministic).items():
            click.echo(f"# {k} = {v}")
    sys.exit(0 if terms else 2)


def run_record(path: Path, timeout, workers, check, deterministic):
    """Solve one corpus file under its pragmas; returns a result row dict."""
    name = path.stem
    try:
        problem = frontend.build_problem(path.read_text(), path.name)
    except frontend.SourceError as e:
        return {"problem": name, "outcome": f"error:{type(e).__name__}",
                "solutions": 0, "wall": 0.0, "proof_len": "", "stats": None}
    cfg = _config(problem, timeout, None, False, workers, deterministic, False)
    t0 = time.monotonic()
    try:
        terms, rs, _ = search.solve(problem, cfg)
    except core.CoreError as e:
        return {"problem": name, "outcome": f"error:{type(e).__name__}",
                "solutions": 0, "wall": 0.0, "proof_len": "", "stats": None}
    wall = time.monotonic() - t0
    if check:
        for t in terms:
            if not oracle.oracle_check(problem.env, t, problem.goal).accepted:
                return {"problem": name, "outcome": "error:OracleRejected",
                        "solutions": len(terms), "wall": wall,
                        "proof_len": "", "stats": rs}
    outcome = "solved" if terms else ("timeout" if rs.timed_out else "exhausted")
    plen = core.proof_length(terms[0]) if terms else ""
    return {"problem": name, "outcome": outcome, "solutions": len(terms),
            "wall": wall, "proof_len": plen, "stats": rs}


def record_row(r, deterministic=False):
    rs = r["stats"]
    if rs is None:
        tail = ["", "", "", "", "", "", "", ""]
    else:
        d = rs.as_dict(deterministic)
        tail = [d.get("refinements_total", ""),
                d.get("refinements_per_sec", ""),
                d.get("nonviolating_per_sec", ""),
                d.get("recursive_calls_per_sec", ""),
                d.get("branching_factor", ""),
                d.get("final_iteration_fraction", ""),
                d.get("iterations", ""),
                d.get("threshold_final", "")]
    cells = [r["problem"], r["outcome"], r["solutions"],
             "" if deterministic else round(r["wall"], 3),
             r["proof_len"]] + tail
    return ",".join(str(c) for c in cells)


@main.command(name="bench")
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@click.option("--timeout", type=float, default=None, help="override per-problem timeout")
@click.option("--workers", type=int, default=None)
@click.option("--check", is_flag=True, help="oracle-check every solution")
@click.option("--deterministic", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="directory for results.csv and figures")
def cmd_bench(corpus, timeout, workers, check, deterministic, out):
    """Run every .canon file in a directory; problems run sequentially for
    timing fidelity."""
    paths = sorted(Path(corpus).glob("*.canon"))
    records = []
    click.echo(CSV_HEADER)
    for path in paths:
        r = run_record(path, timeout, workers, check, deterministic)
        records.append(r)
        click.echo(record_row(r, deterministic))
    solved = [r for r in records if r["outcome"] == "solved"]
    lens = [r["proof_len"] for r in solved if r["proof_len"] != ""]
    if deterministic:
        summary = f"# solved {len(solved)}/{len(records)}"
    else:
        total_wall = sum(r["wall"] for r in records)
        slow = sum(1 for r in records if r["wall"] > 1.0)
        summary = (f"# solved {len(solved)}/{len(records)} in "
                   f"{total_wall:.1f}s total; {slow} problems over 1s")
    if lens:
        summary += f"; mean proof length {sum(lens) / len(lens):.1f}"
    click.echo(summary)
    if out:
        from . import report
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "results.csv").write_text(
            "\n".join([CSV_HEADER] + [record_row(r, deterministic)
                                      for r in records]) + "\n")
        figures = report.render_figures(records, outdir)
        for f in figures:
            click.echo(f"# wrote {f}")
        click.echo(f"# wrote {outdir / 'results.csv'}")
    sys.exit(0)


if __name__ == "__main__":
    main()
