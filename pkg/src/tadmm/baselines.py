"""Master-coordinated parallel ADMM baseline.

Each round the agents solve the same local QP family as the distributed
engine but against a single master dual ``lambda`` and master average
violation ``d`` that a central unit recomputes exactly; with complete
uniform mixing the distributed trajectories collapse onto this one.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import qp
from .engine import EngineError, _check_finite, build_workspaces, initialize_states
from .problem import sequential_sum
from .trajectory import IterationMetrics, Trajectory


@dataclass(frozen=True)
class ParallelState:
    """Stacked primal iterate plus the master average violation and dual."""

    x: list
    d: np.ndarray
    lam: np.ndarray


def initialize_parallel(problem, subproblem_tol=1e-8, init_mode="costmin", x0=None):
    """Local cost minimizers, master ``d0 = (1/N)(sum_i A_i x_i0 - b)``, zero dual."""
    agent_states, iters = initialize_states(problem, subproblem_tol, init_mode, x0)
    xs = [s.x for s in agent_states]
    d0 = _master_average(problem, xs)
    return ParallelState(xs, d0, np.zeros(problem.p)), iters


def _master_average(problem, xs):
    ax = [problem.coupling(i).A @ xs[i] for i in range(problem.n_agents)]
    return (sequential_sum(ax) - problem.b) / problem.n_agents


def parallel_round(state, problem, c, subproblem_tol=1e-8,
                   workspaces=None, warm=None, executor=None):
    """One master-coordinated round. Returns ``(state, warm, qp_iterations)``."""
    if c <= 0:
        raise ValueError("penalty c must be positive")
    if workspaces is None:
        workspaces = build_workspaces(problem, c)

    def solve_agent(i):
        obj, _, coupling = problem.agents[i]
        q0 = qp.step8_linear(obj, coupling, state.lam, state.d, state.x[i], c)
        w0 = warm[i] if warm is not None else None
        return workspaces[i].solve(q0, tol=subproblem_tol, warm=w0)

    n_agents = problem.n_agents
    if executor is not None:
        solutions = list(executor.map(solve_agent, range(n_agents)))
    else:
        solutions = [solve_agent(i) for i in range(n_agents)]

    xs, new_warm, total_iters = [], [], 0
    for i, sol in enumerate(solutions):
        if sol.status != "optimal":
            raise EngineError(f"parallel subproblem failed for agent {i} (status {sol.status!r})")
        xs.append(sol.x)
        new_warm.append((sol.x, sol.multipliers))
        total_iters += sol.iterations
    d_new = _master_average(problem, xs)
    lam_new = state.lam + c * d_new
    return ParallelState(xs, d_new, lam_new), new_warm, total_iters


def parallel_metrics(state, problem, k):
    """Same metric layout as the distributed engine; consensus errors are zero
    by construction and the per-agent dual columns all carry the master dual."""
    n_agents = problem.n_agents
    cost = 0.0
    ax = []
    for i in range(n_agents):
        cost += problem.objective(i).value(state.x[i])
        ax.append(problem.coupling(i).A @ state.x[i])
    residual = sequential_sum(ax) - problem.b
    zeros = np.zeros(n_agents * problem.p)
    return IterationMetrics(
        k=k, cost=cost,
        coupling_inf=float(np.max(np.abs(residual), initial=0.0)),
        residual=residual,
        d_bar=state.d, lambda_bar=state.lam,
        e_d=0.0, e_l=0.0,
        z=np.concatenate([a - state.d for a in ax]),
        d_dev=zeros, lam_dev=zeros,
        lambdas=np.tile(state.lam, (n_agents, 1)),
    )


class ParallelAdmm(BaseEstimator):
    """Parallel (master-coordinated) ADMM for coupled problems.

    Same parameters as :class:`~tadmm.engine.TrackingAdmm` minus the
    consensus tolerance; ``fit`` takes only the problem since no
    communication graph is involved.
    """

    def __init__(self, c, max_iters=1000, feas_tol=1e-6, dual_tol=1e-6,
                 subproblem_tol=1e-8, init_mode="costmin", x0=None, n_threads=1):
        self.c = c
        self.max_iters = max_iters
        self.feas_tol = feas_tol
        self.dual_tol = dual_tol
        self.subproblem_tol = subproblem_tol
        self.init_mode = init_mode
        self.x0 = x0
        self.n_threads = n_threads

    def fit(self, problem):
        if self.c <= 0:
            raise ValueError("penalty c must be positive")
        t0 = time.perf_counter()
        traj = Trajectory(algorithm="parallel-admm", config=self.get_params())
        state, qp_total = initialize_parallel(problem, self.subproblem_tol,
                                              self.init_mode, self.x0)
        metrics = parallel_metrics(state, problem, 0)
        _check_finite(metrics, 0)
        traj.metrics.append(metrics)

        workspaces = build_workspaces(problem, self.c)
        warm = None
        executor = ThreadPoolExecutor(self.n_threads) if self.n_threads > 1 else None
        stop_reason = "max_iters"
        try:
            prev_lam = state.lam
            for k in range(1, self.max_iters + 1):
                state, warm, iters = parallel_round(
                    state, problem, self.c, self.subproblem_tol,
                    workspaces=workspaces, warm=warm, executor=executor)
                qp_total += iters
                metrics = parallel_metrics(state, problem, k)
                _check_finite(metrics, k)
                traj.metrics.append(metrics)
                if (np.max(np.abs(state.d), initial=0.0) <= self.feas_tol
                        and np.max(np.abs(state.lam - prev_lam), initial=0.0) <= self.dual_tol):
                    stop_reason = "converged"
                    break
                prev_lam = state.lam
        finally:
            if executor is not None:
                executor.shutdown()

        traj.stop_reason = stop_reason
        traj.wall_time = time.perf_counter() - t0
        traj.qp_iterations = qp_total
        self.state_ = state
        self.trajectory_ = traj
        self.x_ = np.concatenate(state.x)
        self.lambda_ = state.lam.copy()
        self.stop_reason_ = stop_reason
        self.n_rounds_ = traj.n_rounds
        return self


def run_parallel(problem, **params):
    """Functional wrapper: fit a :class:`ParallelAdmm` and return its trajectory."""
    est = ParallelAdmm(**params).fit(problem)
    return est.trajectory_
