"""Synchronous simulator for the distributed tracking-ADMM iteration.

Each round every agent mixes its neighbors' tracker and dual vectors, solves
a local box-QP built from the mixed signals, then updates its tracker (a
dynamic average consensus step on the coupling violation) and its dual.
All reductions run in ascending agent index so trajectories are
bit-reproducible regardless of the worker thread count.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import network, qp
from .problem import sequential_sum
from .trajectory import IterationMetrics, Trajectory

logger = logging.getLogger(__name__)


class EngineError(RuntimeError):
    """A round failed (subproblem solver error or non-finite state)."""


@dataclass(frozen=True)
class AgentState:
    """One agent's iterates: primal x, tracker d, dual lambda, last mixed values."""

    x: np.ndarray
    d: np.ndarray
    lam: np.ndarray
    delta_last: np.ndarray
    ell_last: np.ndarray


def initialize_states(problem, subproblem_tol=1e-8, init_mode="costmin", x0=None):
    """Initial states: local cost minimizers (or a supplied feasible point),
    trackers set to the local coupling share ``A_i x_i0 - b_i``, duals zero.

    The tracker initialization is what makes the average of the trackers
    equal the true mean coupling violation at every round, so it is not
    configurable.

    Returns ``(states, qp_iterations)``.
    """
    states = []
    total_iters = 0
    if init_mode == "custom":
        if x0 is None:
            raise ValueError("init_mode='custom' requires x0")
        parts = problem.split(x0)
    elif init_mode != "costmin":
        raise ValueError(f"unknown init_mode {init_mode!r}")
    for i in range(problem.n_agents):
        obj, poly, coupling = problem.agents[i]
        if init_mode == "costmin":
            sol = qp.solve_raw(obj.quad, obj.lin, poly.ineqA, poly.ineqB,
                               poly.lower, poly.upper, tol=subproblem_tol)
            if sol.status != "optimal":
                raise EngineError(f"initialization failed for agent {i} (status {sol.status!r})")
            x_i = sol.x
            total_iters += sol.iterations
        else:
            x_i = np.asarray(parts[i], dtype=float)
            if not poly.contains(x_i, tol=1e-8):
                raise ValueError(f"custom x0 for agent {i} is not locally feasible")
        d_i = coupling.A @ x_i - coupling.b_share
        p = coupling.p
        states.append(AgentState(x_i, d_i, np.zeros(p), np.zeros(p), np.zeros(p)))
    return states, total_iters


def mixing_rows(w):
    """Per-row neighbor indices (ascending) and weights of a mixing matrix."""
    w = np.asarray(w, dtype=float)
    rows = []
    for i in range(w.shape[0]):
        idx = np.flatnonzero(w[i] != 0.0)
        rows.append((idx, w[i, idx].copy()))
    return rows


def _mix(rows, vectors, p):
    """Apply the mixing matrix row by row, accumulating in ascending index."""
    mixed = []
    for idx, weights in rows:
        acc = np.zeros(p)
        for j, w_ij in zip(idx, weights):
            acc += w_ij * vectors[j]
        mixed.append(acc)
    return mixed


def build_workspaces(problem, c):
    """One reusable QP workspace per agent; curvature and region are fixed
    across rounds, only the linear term changes."""
    spaces = []
    for i in range(problem.n_agents):
        obj, poly, coupling = problem.agents[i]
        spaces.append(qp.BoxQpWorkspace(qp.step8_quadratic(obj, coupling, c),
                                        poly.ineqA, poly.ineqB, poly.lower, poly.upper))
    return spaces


def tracking_round(states, W, problem, c, subproblem_tol=1e-8,
                   workspaces=None, warm=None, executor=None, rows=None):
    """One synchronous round from a consistent snapshot of all agents.

    Returns ``(new_states, warm, qp_iterations)``. Any subproblem failure
    raises before states are replaced, so a failed round leaves no partial
    update behind.
    """
    w = W.w if isinstance(W, network.ConsensusMatrix) else np.asarray(W, dtype=float)
    n_agents = problem.n_agents
    p = problem.p
    if w.shape != (n_agents, n_agents):
        raise ValueError("mixing matrix size does not match the number of agents")
    if rows is None:
        rows = mixing_rows(w)
    if workspaces is None:
        workspaces = build_workspaces(problem, c)

    delta = _mix(rows, [s.d for s in states], p)
    ell = _mix(rows, [s.lam for s in states], p)

    def solve_agent(i):
        obj, _, coupling = problem.agents[i]
        q0 = qp.step8_linear(obj, coupling, ell[i], delta[i], states[i].x, c)
        w0 = warm[i] if warm is not None else None
        return workspaces[i].solve(q0, tol=subproblem_tol, warm=w0)

    if executor is not None:
        solutions = list(executor.map(solve_agent, range(n_agents)))
    else:
        solutions = [solve_agent(i) for i in range(n_agents)]

    new_states = []
    new_warm = []
    total_iters = 0
    for i, sol in enumerate(solutions):
        if sol.status != "optimal":
            raise EngineError(f"round subproblem failed for agent {i} (status {sol.status!r})")
        coupling = problem.coupling(i)
        x_new = sol.x
        d_new = delta[i] + coupling.A @ x_new - coupling.A @ states[i].x
        lam_new = ell[i] + c * d_new
        new_states.append(AgentState(x_new, d_new, lam_new, delta[i], ell[i]))
        new_warm.append((sol.x, sol.multipliers))
        total_iters += sol.iterations
    return new_states, new_warm, total_iters


def compute_metrics(states, problem, k):
    """Network-level diagnostics of a state snapshot (ascending-index sums)."""
    n_agents = problem.n_agents
    cost = 0.0
    ax = []
    for i in range(n_agents):
        x_i = states[i].x
        cost += problem.objective(i).value(x_i)
        ax.append(problem.coupling(i).A @ x_i)
    residual = sequential_sum(ax) - problem.b
    d_bar = sequential_sum([s.d for s in states]) / n_agents
    lambda_bar = sequential_sum([s.lam for s in states]) / n_agents
    d_dev = np.concatenate([s.d - d_bar for s in states])
    lam_dev = np.concatenate([s.lam - lambda_bar for s in states])
    z = np.concatenate([a - d_bar for a in ax])
    return IterationMetrics(
        k=k, cost=cost,
        coupling_inf=float(np.max(np.abs(residual), initial=0.0)),
        residual=residual,
        d_bar=d_bar, lambda_bar=lambda_bar,
        e_d=float(np.linalg.norm(d_dev)), e_l=float(np.linalg.norm(lam_dev)),
        z=z, d_dev=d_dev, lam_dev=lam_dev,
        lambdas=np.stack([s.lam for s in states]),
    )


def _check_finite(m, k):
    if not (np.isfinite(m.cost) and np.isfinite(m.coupling_inf)
            and np.isfinite(m.d_bar).all() and np.isfinite(m.lambda_bar).all()):
        raise EngineError(f"non-finite state at round {k} "
                          f"(cost={m.cost}, couplingInf={m.coupling_inf})")


class TrackingAdmm(BaseEstimator):
    """Distributed ADMM with dynamic-average tracking of the coupling violation.

    Parameters
    ----------
    c : float
        Penalty parameter; any positive constant is admissible, there is no
        tuning requirement. It scales both the proximal term of the local
        subproblems and the dual step.
    max_iters : int
        Round budget.
    feas_tol, cons_tol, dual_tol : float
        Simulator-level stopping test: stop once ``||d_bar||_inf <= feas_tol``,
        ``max_i ||d_i - d_bar||_inf <= cons_tol`` and
        ``||lambda_bar_k - lambda_bar_{k-1}||_inf <= dual_tol``. This is a
        harness-level rule; agents cannot evaluate it locally.
    subproblem_tol : float
        KKT tolerance of every local QP solve.
    init_mode : {"costmin", "custom"}
        Start from local cost minimizers, or from ``x0``.
    x0 : ndarray, optional
        Stacked feasible starting point for ``init_mode="custom"``.
    n_threads : int
        Worker threads for the per-round subproblem solves. The trajectory is
        bit-identical for any value.

    Attributes
    ----------
    states_ : list of AgentState
    trajectory_ : Trajectory
    x_ : ndarray, stacked final primal iterate
    lambda_ : ndarray of shape (N, p), per-agent duals
    stop_reason_ : str
    n_rounds_ : int
    """

    def __init__(self, c, max_iters=1000, feas_tol=1e-6, cons_tol=1e-6,
                 dual_tol=1e-6, subproblem_tol=1e-8, init_mode="costmin",
                 x0=None, n_threads=1):
        self.c = c
        self.max_iters = max_iters
        self.feas_tol = feas_tol
        self.cons_tol = cons_tol
        self.dual_tol = dual_tol
        self.subproblem_tol = subproblem_tol
        self.init_mode = init_mode
        self.x0 = x0
        self.n_threads = n_threads

    def _validate(self, problem, W):
        if self.c <= 0:
            raise ValueError("penalty c must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        for name in ("feas_tol", "cons_tol", "dual_tol", "subproblem_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if W.n != problem.n_agents:
            raise ValueError("mixing matrix size does not match the problem")
        report = network.validate(W)
        if not (report.symmetric and report.doubly_stochastic
                and report.entry_range and report.spectral_gap > 0.0):
            raise ValueError(f"mixing matrix violates the exchange assumptions: {report.to_dict()}")
        if not report.psd:
            logger.warning("mixing matrix is not PSD; convergence is not certified "
                           "(consider squaring the weights)")

    def fit(self, problem, W):
        """Run the algorithm on ``problem`` over mixing matrix ``W``."""
        self._validate(problem, W)
        t0 = time.perf_counter()
        traj = Trajectory(algorithm="tracking-admm", config=self.get_params())
        states, qp_total = initialize_states(problem, self.subproblem_tol,
                                             self.init_mode, self.x0)
        metrics = compute_metrics(states, problem, 0)
        _check_finite(metrics, 0)
        traj.metrics.append(metrics)

        rows = mixing_rows(W.w)
        workspaces = build_workspaces(problem, self.c)
        warm = None
        executor = ThreadPoolExecutor(self.n_threads) if self.n_threads > 1 else None
        stop_reason = "max_iters"
        try:
            prev_lambda_bar = metrics.lambda_bar
            for k in range(1, self.max_iters + 1):
                states, warm, iters = tracking_round(
                    states, W, problem, self.c, self.subproblem_tol,
                    workspaces=workspaces, warm=warm, executor=executor, rows=rows)
                qp_total += iters
                metrics = compute_metrics(states, problem, k)
                _check_finite(metrics, k)
                traj.metrics.append(metrics)
                if (np.max(np.abs(metrics.d_bar), initial=0.0) <= self.feas_tol
                        and np.max(np.abs(metrics.d_dev), initial=0.0) <= self.cons_tol
                        and np.max(np.abs(metrics.lambda_bar - prev_lambda_bar), initial=0.0) <= self.dual_tol):
                    stop_reason = "converged"
                    break
                prev_lambda_bar = metrics.lambda_bar
        finally:
            if executor is not None:
                executor.shutdown()

        traj.stop_reason = stop_reason
        traj.wall_time = time.perf_counter() - t0
        traj.qp_iterations = qp_total
        self.states_ = states
        self.trajectory_ = traj
        self.x_ = np.concatenate([s.x for s in states])
        self.lambda_ = np.stack([s.lam for s in states])
        self.stop_reason_ = stop_reason
        self.n_rounds_ = traj.n_rounds
        return self


def run(problem, W, **params):
    """Functional wrapper: fit a :class:`TrackingAdmm` and return its trajectory."""
    est = TrackingAdmm(**params).fit(problem, W)
    return est.trajectory_
