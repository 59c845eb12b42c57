"""Experiment runner CLI.

Commands: ``run`` (execute an algorithm on a problem over a network and dump
plot-ready CSVs), ``validate`` (check a mixing matrix against the exchange
assumptions), ``reference`` (centralized optimum), ``pev-gen`` (write a
charging benchmark instance). Log level comes from the ``TADMM_LOG``
environment variable only.
"""

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import baselines, certify, engine, network, pev, problem as problem_mod, qp
from .problem import PrimalDualPair

logging.basicConfig(level=os.environ.get("TADMM_LOG", "WARNING").upper(),
                    format="%(levelname)s %(name)s: %(message)s")


@click.group()
def main():
    """Distributed coupled-optimization experiment runner."""


def _load_problem(problem_file, pev_preset, pev_config):
    if sum(x is not None for x in (problem_file, pev_preset, pev_config)) != 1:
        raise click.UsageError("provide exactly one of --problem, --pev-preset, --pev-config")
    if problem_file is not None:
        return problem_mod.load_problem(problem_file), None
    if pev_config is not None:
        return pev.generate(pev.load_config(pev_config)), None
    config, engine_defaults = _pev_preset(pev_preset)
    return pev.generate(config), engine_defaults


def _pev_preset(name):
    if name == "paper":
        return pev.preset_paper_scale()
    if name == "desk":
        return pev.preset_desk_scale()
    raise click.UsageError(f"unknown preset {name!r} (choose 'paper' or 'desk')")


def _load_weights(graph_file, random_graph, graph_seed, density, n_agents, square):
    if graph_file is not None:
        W = network.load_graph_or_matrix(graph_file)
    elif random_graph:
        g = network.random_connected_graph(n_agents, density=density, seed=graph_seed)
        W = network.metropolis_weights(g)
    else:
        raise click.UsageError("provide --graph or --random-graph")
    if W.n != n_agents:
        raise click.UsageError(f"network has {W.n} nodes but the problem has {n_agents} agents")
    if square:
        W = network.square_weights(W)
    return W


@main.command()
@click.option("--problem", "problem_file", type=click.Path(exists=True), default=None,
              help="Problem JSON file.")
@click.option("--pev-preset", type=str, default=None, help="Built-in benchmark: paper or desk.")
@click.option("--pev-config", type=click.Path(exists=True), default=None,
              help="Charging benchmark config JSON.")
@click.option("--graph", "graph_file", type=click.Path(exists=True), default=None,
              help="Graph/weights JSON file.")
@click.option("--random-graph", is_flag=True, help="Seeded random connected graph.")
@click.option("--graph-seed", type=int, default=0, show_default=True)
@click.option("--density", type=float, default=0.3, show_default=True)
@click.option("--square", is_flag=True, help="Square the weights (two communication rounds).")
@click.option("--algorithm", type=click.Choice(["tracking-admm", "parallel-admm", "both"]),
              default="tracking-admm", show_default=True)
@click.option("--c", type=float, default=None, help="Penalty parameter (required unless a preset provides it).")
@click.option("--max-iters", type=int, default=None)
@click.option("--feas-tol", type=float, default=None)
@click.option("--cons-tol", type=float, default=None)
@click.option("--dual-tol", type=float, default=None)
@click.option("--subproblem-tol", type=float, default=None)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the benchmark config seed.")
@click.option("--out", type=click.Path(), default="out", show_default=True)
@click.option("--certify", "do_certify", is_flag=True, help="Build the convergence certificate and run the monitors.")
@click.option("--reference/--no-reference", default=True, show_default=True,
              help="Compute the centralized optimum for cost-gap columns.")
def run(problem_file, pev_preset, pev_config, graph_file, random_graph, graph_seed,
        density, square, algorithm, c, max_iters, feas_tol, cons_tol, dual_tol,
        subproblem_tol, threads, seed, out, do_certify, reference):
    """Run tracking-admm and/or the parallel baseline; write CSV + JSON outputs."""
    try:
        if seed is not None and pev_preset is not None:
            config, engine_defaults = _pev_preset(pev_preset)
            config = pev.PevConfig(**{**pev.config_to_dict(config), "seed": seed})
            prob = pev.generate(config)
        else:
            prob, engine_defaults = _load_problem(problem_file, pev_preset, pev_config)

        params = dict(engine_defaults or {})
        for key, val in (("c", c), ("max_iters", max_iters), ("feas_tol", feas_tol),
                         ("cons_tol", cons_tol), ("dual_tol", dual_tol),
                         ("subproblem_tol", subproblem_tol)):
            if val is not None:
                params[key] = val
        if "c" not in params:
            raise click.UsageError("--c is required (no default penalty; any positive value converges)")
        params.setdefault("max_iters", 1000)

        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)

        ref = None
        if reference:
            ref = qp.solve_centralized(prob, tol=1e-10 if prob.total_dim <= 400 else 1e-8)
            _write_reference(out_dir / "reference.json", ref)

        results = {}
        if algorithm in ("tracking-admm", "both"):
            W = _load_weights(graph_file, random_graph, graph_seed, density,
                              prob.n_agents, square)
            est = engine.TrackingAdmm(n_threads=threads, **params).fit(prob, W)
            _write_outputs(out_dir, "tracking-admm", est.trajectory_, ref)
            results["tracking-admm"] = est
            if do_certify:
                cert = certify.build_certificate(W, prob.p)
                reports = []
                if ref is not None:
                    reports.append(certify.check_descent(est.trajectory_, prob, ref, cert, params["c"]))
                    reports.append(certify.check_prop1(est.trajectory_, prob, ref, params["c"], cert=cert))
                certify.write_reports(out_dir / "certificate.json", cert, reports)
        if algorithm in ("parallel-admm", "both"):
            pparams = {k: v for k, v in params.items() if k != "cons_tol"}
            est = baselines.ParallelAdmm(n_threads=threads, **pparams).fit(prob)
            _write_outputs(out_dir, "parallel-admm", est.trajectory_, ref)
            results["parallel-admm"] = est

        for name, est in results.items():
            click.echo(f"{name}: {est.stop_reason_} after {est.n_rounds_} rounds "
                       f"(final couplingInf {est.trajectory_.final.coupling_inf:.3e})")
    except (ValueError, RuntimeError, OSError, click.UsageError) as exc:
        if isinstance(exc, click.UsageError):
            raise
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _write_outputs(out_dir, tag, traj, ref):
    traj.write_csv(out_dir / f"trajectory_{tag}.csv", reference=ref)
    traj.write_lambdas_csv(out_dir / f"lambdas_{tag}.csv")
    traj.write_summary(out_dir / f"summary_{tag}.json", reference=ref)


def _write_reference(path, ref):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"x": ref.x.tolist(), "lambda": ref.lam.tolist(), "cost": ref.cost}, fh, indent=2)


@main.command()
@click.argument("graph_file", type=click.Path(exists=True))
@click.option("--square", is_flag=True, help="Square the weights before validating.")
def validate(graph_file, square):
    """Validate a mixing matrix / graph file against the exchange assumptions."""
    try:
        W = network.load_graph_or_matrix(graph_file)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot load {graph_file}: {exc}", err=True)
        sys.exit(2)
    if square:
        W = network.square_weights(W)
    report = network.validate(W)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if not report.passes:
        if not report.psd and report.symmetric and report.doubly_stochastic and report.entry_range:
            click.echo("hint: matrix fails only positive semidefiniteness; use --square", err=True)
        sys.exit(1)


@main.command()
@click.argument("problem_file", type=click.Path(exists=True))
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--out", type=click.Path(), default="reference.json", show_default=True)
def reference(problem_file, tol, out):
    """Solve the problem centrally and write the optimal pair JSON."""
    try:
        prob = problem_mod.load_problem(problem_file)
        ref = qp.solve_centralized(prob, tol=tol)
    except (ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    _write_reference(out, ref)
    click.echo(f"cost {ref.cost!r} written to {out}")


@main.command(name="pev-gen")
@click.option("--preset", type=str, default=None, help="paper or desk.")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(), default="pev_problem.json", show_default=True)
def pev_gen(preset, config_file, seed, out):
    """Generate a charging benchmark instance and write it as problem JSON."""
    try:
        if (preset is None) == (config_file is None):
            raise click.UsageError("provide exactly one of --preset or --config")
        config = _pev_preset(preset)[0] if preset else pev.load_config(config_file)
        if seed is not None:
            config = pev.PevConfig(**{**pev.config_to_dict(config), "seed": seed})
        prob = pev.generate(config)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        if isinstance(exc, click.UsageError):
            raise
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    problem_mod.save_problem(prob, out)
    meta = pev.describe(config)
    click.echo(json.dumps(meta, indent=2))
    click.echo(f"problem written to {out}")


def load_reference(path):
    """Read a reference JSON produced by the ``reference`` command."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return PrimalDualPair(np.asarray(data["x"], dtype=float),
                          np.asarray(data["lambda"], dtype=float),
                          float(data["cost"]))


if __name__ == "__main__":
    main()
