"""Constraint-coupled problem instances.

A problem couples N agents, each with a convex quadratic cost and a compact
polyhedral feasible set, through a single linear equality on the sum of the
coupling maps: ``sum_i A_i x_i = b``. All types are immutable after
construction and safe to share across worker threads.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .utils import as_matrix, as_vector, check_symmetric, min_eigenvalue

SYM_TOL = 1e-12
PSD_TOL = -1e-10
SHARE_TOL = 1e-9


@dataclass(frozen=True)
class LocalObjective:
    """Convex quadratic cost ``f(x) = 0.5 x'Qx + q'x + offset``."""

    quad: np.ndarray
    lin: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        quad = as_matrix(self.quad, "quad")
        lin = as_vector(self.lin, "lin", size=quad.shape[0])
        check_symmetric(quad, "quad", tol=SYM_TOL)
        if min_eigenvalue(quad) < PSD_TOL:
            raise ValueError("quad must be positive semidefinite")
        quad.setflags(write=False)
        lin.setflags(write=False)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.lin.shape[0]

    def value(self, x):
        x = as_vector(x, "x", size=self.dim)
        return float(0.5 * x @ self.quad @ x + self.lin @ x + self.offset)


@dataclass(frozen=True)
class Polyhedron:
    """Compact feasible set ``{x : ineqA x <= ineqB, lower <= x <= upper}``.

    The finite box makes the set compact; nonemptiness is certified by a
    phase-1 projection solve at construction time.
    """

    ineqA: np.ndarray
    ineqB: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper", size=lower.shape[0])
        n = lower.shape[0]
        ineqA = np.asarray(self.ineqA, dtype=float)
        if ineqA.size == 0:
            ineqA = ineqA.reshape(0, n)
        ineqA = as_matrix(ineqA, "ineqA", shape=(None, n))
        ineqB = as_vector(self.ineqB, "ineqB", size=ineqA.shape[0])
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("box bounds must be finite (compactness)")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ValueError(f"empty box: lower[{bad}] > upper[{bad}]")
        for arr in (ineqA, ineqB, lower, upper):
            arr.setflags(write=False)
        object.__setattr__(self, "ineqA", ineqA)
        object.__setattr__(self, "ineqB", ineqB)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if ineqA.shape[0] > 0:
            self._certify_nonempty()

    def _certify_nonempty(self):
        # Phase-1: project the box center onto the full set. Import here to
        # avoid a hard module cycle (qp needs Polyhedron for its instances).
        from . import qp

        center = (self.lower + self.upper) / 2.0
        sol = qp.solve_raw(
            np.eye(self.dim), -center, self.ineqA, self.ineqB,
            self.lower, self.upper, tol=1e-8, max_iter=20000,
        )
        if sol.status == "infeasible":
            raise ValueError("polyhedron is empty (phase-1 solve found an infeasibility certificate)")
        if sol.status != "optimal":
            raise ValueError(f"feasibility certification failed (solver status {sol.status!r})")

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def n_ineq(self):
        return self.ineqA.shape[0]

    def contains(self, x, tol=1e-8):
        x = as_vector(x, "x", size=self.dim)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        return self.n_ineq == 0 or bool(np.all(self.ineqA @ x <= self.ineqB + tol))


@dataclass(frozen=True)
class CouplingBlock:
    """One agent's contribution to the coupling row: map ``A`` and share ``bShare``."""

    A: np.ndarray
    b_share: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b_share = as_vector(self.b_share, "b_share", size=A.shape[0])
        A.setflags(write=False)
        b_share.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b_share", b_share)

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def dim(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class ConstraintCoupledProblem:
    """N agents coupled through ``sum_i A_i x_i = b``."""

    agents: tuple
    b: np.ndarray

    def __post_init__(self):
        agents = tuple(self.agents)
        if len(agents) < 2:
            raise ValueError("a coupled problem needs at least 2 agents")
        b = as_vector(self.b, "b")
        p = b.shape[0]
        for i, (obj, poly, coupling) in enumerate(agents):
            if not (obj.dim == poly.dim == coupling.dim):
                raise ValueError(f"agent {i}: objective/set/coupling dimensions disagree")
            if coupling.p != p:
                raise ValueError(f"agent {i}: coupling block has {coupling.p} rows, expected {p}")
        share_sum = sequential_sum([c.b_share for (_, _, c) in agents])
        if np.max(np.abs(share_sum - b)) > SHARE_TOL * (1.0 + np.max(np.abs(b), initial=0.0)):
            raise ValueError("agent shares do not sum to b")
        b.setflags(write=False)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "b", b)

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def p(self):
        return self.b.shape[0]

    @property
    def dims(self):
        return tuple(obj.dim for (obj, _, _) in self.agents)

    @property
    def total_dim(self):
        return sum(self.dims)

    def objective(self, i):
        return self.agents[i][0]

    def region(self, i):
        return self.agents[i][1]

    def coupling(self, i):
        return self.agents[i][2]

    def split(self, x):
        """Split a stacked decision vector into per-agent pieces."""
        x = as_vector(x, "x", size=self.total_dim)
        out, start = [], 0
        for n_i in self.dims:
            out.append(x[start:start + n_i])
            start += n_i
        return out


@dataclass(frozen=True)
class PrimalDualPair:
    """A primal point, coupling multiplier, and cost, e.g. from the reference solver."""

    x: np.ndarray
    lam: np.ndarray
    cost: float

    def __post_init__(self):
        x = as_vector(self.x, "x")
        lam = as_vector(self.lam, "lam")
        x.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "cost", float(self.cost))


def sequential_sum(vectors):
    """Left-to-right sum of equal-length vectors (fixed fp reduction order)."""
    total = np.array(vectors[0], dtype=float, copy=True)
    for v in vectors[1:]:
        total = total + v
    return total


def split_rhs(b, n_agents, mode="uniform", shares=None):
    """Split the coupling right-hand side ``b`` into per-agent shares.

    Parameters
    ----------
    b : array_like
        Coupling right-hand side, length p.
    n_agents : int
        Number of shares to produce.
    mode : {"uniform", "explicit"}
        Uniform gives every agent ``b / n_agents``; explicit takes ``shares``.
    shares : sequence of array_like, optional
        Required for explicit mode; must have ``n_agents`` entries whose sum
        matches ``b`` within 1e-9.

    Returns
    -------
    list of ndarray
        Shares whose left-to-right floating-point sum equals ``b`` exactly;
        the last share absorbs all rounding.
    """
    b = as_vector(b, "b")
    if n_agents < 1:
        raise ValueError("n_agents must be positive")
    if mode == "uniform":
        out = [b / n_agents for _ in range(n_agents)]
    elif mode == "explicit":
        if shares is None:
            raise ValueError("explicit mode requires shares")
        out = [as_vector(s, f"shares[{i}]", size=b.shape[0]) for i, s in enumerate(shares)]
        if len(out) != n_agents:
            raise ValueError(f"expected {n_agents} shares, got {len(out)}")
        err = np.max(np.abs(sequential_sum(out) - b), initial=0.0)
        if err > SHARE_TOL:
            raise ValueError(f"explicit shares sum differs from b by {err:.3e} > {SHARE_TOL:.0e}")
        out = [s.copy() for s in out]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if n_agents == 1:
        out[0] = b.copy()
        return out

    # Absorb rounding in the last share so the sequential sum re-produces b
    # bit for bit. One correction step usually suffices; iterate to be safe.
    head = sequential_sum(out[:-1])
    last = b - head
    for _ in range(10):
        total = head + last
        if np.array_equal(total, b):
            break
        last = last + (b - total)
    out[-1] = last
    return out


def eval_cost(problem, x):
    """Total cost ``sum_i f_i(x_i)`` at a stacked point, summed in agent order."""
    parts = problem.split(x)
    total = 0.0
    for i in range(problem.n_agents):
        total += problem.objective(i).value(parts[i])
    return total


def coupling_residual(problem, x):
    """Coupling violation ``sum_i A_i x_i - b`` at a stacked point."""
    parts = problem.split(x)
    terms = [problem.coupling(i).A @ parts[i] for i in range(problem.n_agents)]
    return sequential_sum(terms) - problem.b


def lagrangian(problem, x, lam):
    """Lagrangian of the coupled problem: cost plus ``lam' (sum_i A_i x_i - b)``."""
    lam = as_vector(lam, "lam", size=problem.p)
    return eval_cost(problem, x) + float(lam @ coupling_residual(problem, x))


def local_dual_value(problem, i, lam, tol=1e-10):
    """Agent ``i``'s dual contribution at ``lam``.

    Minimizes ``f_i(x) + lam'(A_i x - b_i)`` over the agent's feasible set and
    returns ``(value, minimizer)``. When the objective is flat the minimizer is
    whichever point the deterministic subproblem solver selects.
    """
    from . import qp

    lam = as_vector(lam, "lam", size=problem.p)
    obj, poly, coupling = problem.agents[i]
    sol = qp.solve_raw(
        obj.quad, obj.lin + coupling.A.T @ lam,
        poly.ineqA, poly.ineqB, poly.lower, poly.upper,
        tol=tol, max_iter=200000,
    )
    if sol.status != "optimal":
        raise RuntimeError(f"dual subproblem for agent {i} failed with status {sol.status!r}")
    value = obj.value(sol.x) + float(lam @ (coupling.A @ sol.x - coupling.b_share))
    return value, sol.x


# --- JSON (de)serialization -------------------------------------------------
#
# Schema: {"N", "p", "b", "agents": [{"quad", "lin", "offset", "ineqA",
# "ineqB", "lower", "upper", "A", "bShare"}]} with matrices as row-major
# arrays of arrays and every number an IEEE-754 double.

def problem_to_dict(problem):
    agents = []
    for obj, poly, coupling in problem.agents:
        agents.append({
            "quad": obj.quad.tolist(),
            "lin": obj.lin.tolist(),
            "offset": obj.offset,
            "ineqA": poly.ineqA.tolist(),
            "ineqB": poly.ineqB.tolist(),
            "lower": poly.lower.tolist(),
            "upper": poly.upper.tolist(),
            "A": coupling.A.tolist(),
            "bShare": coupling.b_share.tolist(),
        })
    return {"N": problem.n_agents, "p": problem.p, "b": problem.b.tolist(), "agents": agents}


def problem_from_dict(data):
    agents = []
    for i, spec in enumerate(data["agents"]):
        obj = LocalObjective(np.asarray(spec["quad"], dtype=float),
                             np.asarray(spec["lin"], dtype=float),
                             float(spec.get("offset", 0.0)))
        poly = Polyhedron(np.asarray(spec["ineqA"], dtype=float),
                          np.asarray(spec["ineqB"], dtype=float),
                          np.asarray(spec["lower"], dtype=float),
                          np.asarray(spec["upper"], dtype=float))
        coupling = CouplingBlock(np.asarray(spec["A"], dtype=float),
                                 np.asarray(spec["bShare"], dtype=float))
        agents.append((obj, poly, coupling))
    problem = ConstraintCoupledProblem(tuple(agents), np.asarray(data["b"], dtype=float))
    if problem.n_agents != int(data["N"]) or problem.p != int(data["p"]):
        raise ValueError("declared N/p do not match the agent list")
    return problem


def save_problem(problem, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh)


def load_problem(path):
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))
