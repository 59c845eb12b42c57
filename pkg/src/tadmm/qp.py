"""In-house convex QP solver based on operator splitting.

Solves ``min 0.5 x'Px + q'x`` over a box-bounded polyhedron, optionally with
linear equality rows appended. The same engine backs the per-agent update
subproblems, dual-function evaluations, feasibility certification, and the
centralized reference oracle.

The iteration is a fixed-parameter ADMM on the canonical form
``min 0.5 x'Px + q'x  s.t.  l <= Cx <= u`` with ``C = [ineqA; I; A_eq]``,
plus an exact "polish" step that solves the KKT system restricted to the
detected active set. Everything is deterministic: fixed penalties, fixed
iteration order, no randomized pivoting.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .problem import Polyhedron
from .utils import as_matrix, as_vector, check_symmetric, min_eigenvalue

# Splitting parameters. The penalty is a deterministic function of the
# instance data, quantized to powers of two and held fixed for the whole
# iteration, so identical inputs give bit-identical runs while badly scaled
# costs (tiny objective against large bounds) still converge quickly.
SIGMA = 1e-6
ALPHA = 1.6
RHO_EQ_SCALE = 1e3
RHO_MIN = 1e-6
RHO_MAX = 1e3

DENSE_LIMIT = 400          # above this many variables, factor sparsely
DEFAULT_MAX_ITER = 200000


@dataclass(frozen=True)
class QpInstance:
    """Canonical subproblem: ``min 0.5 x'P0 x + q0'x`` over a polyhedron."""

    P0: np.ndarray
    q0: np.ndarray
    region: Polyhedron

    def __post_init__(self):
        P0 = as_matrix(self.P0, "P0")
        q0 = as_vector(self.q0, "q0", size=P0.shape[0])
        check_symmetric(P0, "P0")
        if min_eigenvalue(P0) < -1e-10:
            raise ValueError("P0 must be positive semidefinite")
        if self.region.dim != P0.shape[0]:
            raise ValueError("region dimension does not match P0")
        P0.setflags(write=False)
        q0.setflags(write=False)
        object.__setattr__(self, "P0", P0)
        object.__setattr__(self, "q0", q0)


@dataclass(frozen=True)
class QpSolution:
    """Solver output. ``status == "optimal"`` implies both residuals <= tol."""

    x: np.ndarray
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    multipliers: np.ndarray = None       # one per row of [ineqA; box; A_eq]
    eq_multipliers: np.ndarray = None    # slice for the equality rows


def step8_quadratic(objective, coupling, c):
    """Curvature of the per-agent update subproblem: ``Q_i + c A_i'A_i``."""
    return objective.quad + c * (coupling.A.T @ coupling.A)


def step8_linear(objective, coupling, ell, delta, x_prev, c):
    """Linear term of the per-agent update subproblem.

    Expanding ``f_i(x) + ell'A_i x + (c/2) ||A_i x - A_i x_prev + delta||^2``
    and dropping constants leaves ``q_i + A_i'ell + c A_i'(delta - A_i x_prev)``.
    """
    A = coupling.A
    return objective.lin + A.T @ ell + c * (A.T @ (delta - A @ x_prev))


def local_step_instance(agent, ell, delta, x_prev, c):
    """Build the QP an agent solves each round from its mixed signals.

    ``agent`` is a ``(LocalObjective, Polyhedron, CouplingBlock)`` triple;
    ``ell`` and ``delta`` are the mixed dual and tracker vectors, ``x_prev``
    the agent's previous iterate, and ``c > 0`` the penalty parameter.
    """
    if c <= 0:
        raise ValueError("penalty c must be positive")
    obj, poly, coupling = agent
    ell = as_vector(ell, "ell", size=coupling.p)
    delta = as_vector(delta, "delta", size=coupling.p)
    x_prev = as_vector(x_prev, "x_prev", size=obj.dim)
    return QpInstance(step8_quadratic(obj, coupling, c),
                      step8_linear(obj, coupling, ell, delta, x_prev, c),
                      poly)


class BoxQpWorkspace:
    """Reusable solver state for a family of QPs sharing (P, constraints).

    The factorization of ``P + sigma I + C'RC`` is computed once; repeated
    calls to :meth:`solve` only change the linear term, which is what the
    round-based engines need (their curvature and feasible sets are fixed).
    """

    def __init__(self, P, G, h, lb, ub, A_eq=None, b_eq=None):
        if not scipy.sparse.issparse(P):
            P = np.asarray(P, dtype=float)
        n = P.shape[0]
        self.n = n
        if not scipy.sparse.issparse(G) and G is not None:
            G = np.asarray(G, dtype=float)
        if not scipy.sparse.issparse(A_eq) and A_eq is not None:
            A_eq = np.asarray(A_eq, dtype=float)
        if G is None or (not scipy.sparse.issparse(G) and G.size == 0):
            G, h = np.zeros((0, n)), np.zeros(0)
        if A_eq is None or (not scipy.sparse.issparse(A_eq) and A_eq.size == 0):
            A_eq, b_eq = np.zeros((0, n)), np.zeros(0)
        self.m_ineq = G.shape[0]
        self.m_eq = A_eq.shape[0]
        self.sparse = (n > DENSE_LIMIT
                       or any(scipy.sparse.issparse(m) for m in (P, G, A_eq)))

        def conv(m):
            if self.sparse:
                return m.tocsr() if scipy.sparse.issparse(m) else scipy.sparse.csr_matrix(np.asarray(m, dtype=float))
            return m.toarray() if scipy.sparse.issparse(m) else np.asarray(m, dtype=float)

        self.P = conv(P)
        if self.sparse:
            eye = scipy.sparse.eye(n, format="csr")
            self.C = scipy.sparse.vstack([conv(G), eye, conv(A_eq)]).tocsr()
        else:
            self.C = np.vstack([conv(G), np.eye(n), conv(A_eq)])
        self.m = self.m_ineq + n + self.m_eq
        self.l = np.concatenate([np.full(self.m_ineq, -np.inf),
                                 np.asarray(lb, dtype=float),
                                 np.asarray(b_eq, dtype=float)])
        self.u = np.concatenate([np.asarray(h, dtype=float),
                                 np.asarray(ub, dtype=float),
                                 np.asarray(b_eq, dtype=float)])
        self.is_eq = np.zeros(self.m, dtype=bool)
        self.is_eq[self.m_ineq + n:] = True

        finite = np.concatenate([self.l[np.isfinite(self.l)], self.u[np.isfinite(self.u)]])
        self._bound_scale = max(1.0, float(np.max(np.abs(finite), initial=0.0)))
        self._factors = {}

    def _pick_rho(self, q):
        """Penalty matched to the cost-to-constraint scale, snapped to a power
        of two so repeated solves share cached factorizations."""
        raw = float(np.max(np.abs(q), initial=0.0)) / self._bound_scale
        if raw <= 0.0:
            raw = 1.0
        return float(2.0 ** np.round(np.log2(min(max(raw, RHO_MIN), RHO_MAX))))

    def _solver_for(self, rho_base):
        cached = self._factors.get(rho_base)
        if cached is not None:
            return cached
        n = self.n
        rho = np.full(self.m, rho_base)
        rho[self.is_eq] = rho_base * RHO_EQ_SCALE
        if self.sparse:
            Cs = self.C.tocsc()
            M = self.P.tocsc() + SIGMA * scipy.sparse.eye(n, format="csc")
            M = M + Cs.T @ scipy.sparse.diags(rho) @ Cs
            factor = scipy.sparse.linalg.splu(M.tocsc())
            solver = (rho, factor.solve)
        else:
            M = self.P + SIGMA * np.eye(n) + self.C.T @ (rho[:, None] * self.C)
            chol = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
            solver = (rho, lambda rhs: scipy.linalg.cho_solve(chol, rhs, check_finite=False))
        self._factors[rho_base] = solver
        return solver

    # -- residuals ---------------------------------------------------------

    def _residuals(self, x, y, q):
        cx = self.C @ x
        r_prim = float(np.max(np.abs(cx - np.clip(cx, self.l, self.u)), initial=0.0))
        r_dual = float(np.max(np.abs(self.P @ x + q + self.C.T @ y), initial=0.0))
        return r_prim, r_dual

    # -- polish ------------------------------------------------------------

    def _polish(self, x, z, y, q, tol):
        """Exact solve on the detected active set; returns None if it fails.

        Active rows are read straight off the projected iterate ``z``, which
        sits exactly on a bound whenever the splitting iteration clips it.
        """
        at_low = (z <= self.l) & ~self.is_eq
        at_up = (z >= self.u) & ~self.is_eq
        # the dual iterate flags active rows the projection has not pinned yet
        # (it creeps toward the multiplier long before z touches the bound)
        y_gate = 1e-6 * float(np.max(np.abs(y), initial=0.0))
        if y_gate > 0.0:
            free = ~(at_low | at_up | self.is_eq)
            at_low |= free & (y < -y_gate) & np.isfinite(self.l)
            at_up |= free & (y > y_gate) & np.isfinite(self.u)
        active = at_low | at_up | self.is_eq
        idx = np.flatnonzero(active)
        bound = np.where(at_low, self.l, self.u)
        bound[self.is_eq] = self.l[self.is_eq]
        rhs_act = bound[idx]

        n, m_act = self.n, idx.size
        if self.sparse and m_act == 0:
            return None
        if self.sparse:
            C_act = self.C[idx]
            reg = 1e-11
            Ps = scipy.sparse.csc_matrix(self.P) if not scipy.sparse.issparse(self.P) else self.P
            K = scipy.sparse.bmat(
                [[Ps + reg * scipy.sparse.eye(n), C_act.T],
                 [C_act, -reg * scipy.sparse.eye(m_act)]], format="csc")
            rhs = np.concatenate([-q, rhs_act])
            try:
                lu = scipy.sparse.linalg.splu(K)
            except RuntimeError:
                return None
            sol = lu.solve(rhs)
            # one refinement pass against the unregularized system
            K0 = scipy.sparse.bmat(
                [[Ps, C_act.T], [C_act, None]], format="csc")
            sol = sol + lu.solve(rhs - K0 @ sol)
        else:
            C_act = self.C[idx]
            K = np.zeros((n + m_act, n + m_act))
            K[:n, :n] = self.P
            K[:n, n:] = C_act.T
            K[n:, :n] = C_act
            rhs = np.concatenate([-q, rhs_act])
            sol = scipy.linalg.lstsq(K, rhs, check_finite=False, lapack_driver="gelsd")[0]
        x_pol = sol[:n]
        nu = sol[n:]
        if not np.all(np.isfinite(x_pol)):
            return None

        y_pol = np.zeros(self.m)
        y_pol[idx] = nu
        # multiplier signs: <= 0 on lower-active rows, >= 0 on upper-active
        sign_ok = (np.all(y_pol[at_low & ~at_up] <= tol)
                   and np.all(y_pol[at_up & ~at_low] >= -tol))
        if not sign_ok:
            return None
        r_prim, r_dual = self._residuals(x_pol, y_pol, q)
        if r_prim <= tol and r_dual <= tol:
            return x_pol, y_pol, r_prim, r_dual
        return None

    # -- infeasibility certificate ------------------------------------------

    def _primal_infeasible(self, dy):
        scale = float(np.max(np.abs(dy), initial=0.0))
        if scale < 1e-14:
            return False
        v = dy / scale
        eps = 1e-9
        lower_inf = ~np.isfinite(self.l)
        if np.any(v[lower_inf] < -eps):
            return False
        if float(np.max(np.abs(self.C.T @ v), initial=0.0)) > eps:
            return False
        support = float(np.sum(self.u * np.maximum(v, 0.0))
                        + np.sum(self.l[~lower_inf] * np.minimum(v[~lower_inf], 0.0)))
        return support < -eps

    # -- main loop -----------------------------------------------------------

    def solve(self, q, tol, max_iter=DEFAULT_MAX_ITER, warm=None):
        """Run the splitting iteration for linear term ``q``.

        ``warm`` may carry ``(x, y)`` from a related solve; it changes only
        the iteration count, never the accepted solution quality.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        q = np.asarray(q, dtype=float)
        rho, solve_M = self._solver_for(self._pick_rho(q))
        if warm is None:
            x = np.zeros(self.n)
            y = np.zeros(self.m)
        else:
            x = np.array(warm[0], dtype=float, copy=True)
            y = np.array(warm[1], dtype=float, copy=True)
        z = np.clip(self.C @ x, self.l, self.u)

        # residuals are checked densely at first (warm starts often finish in
        # a handful of iterations) and then on a fixed stride; polishing is
        # attempted once moderately converged or periodically
        check_every = 25 if not self.sparse else 100
        polish_every = check_every if not self.sparse else 500
        polish_gate = max(1e4 * tol, 1e-4)
        y_mark = y.copy()
        best = None
        it = 0
        while it < max_iter:
            it += 1
            rhs = SIGMA * x - q + self.C.T @ (rho * z - y)
            x_hat = solve_M(rhs)
            z_hat = self.C @ x_hat
            x = ALPHA * x_hat + (1.0 - ALPHA) * x
            v = ALPHA * z_hat + (1.0 - ALPHA) * z + y / rho
            z_new = np.clip(v, self.l, self.u)
            y = y + rho * (ALPHA * z_hat + (1.0 - ALPHA) * z - z_new)
            z = z_new

            if it <= 8 or it % check_every == 0 or it == max_iter:
                r_prim, r_dual = self._residuals(x, y, q)
                if best is None or max(r_prim, r_dual) < best[0]:
                    best = (max(r_prim, r_dual), x.copy(), y.copy(), r_prim, r_dual)
                if r_prim <= tol and r_dual <= tol:
                    return self._pack(x, y, r_prim, r_dual, it, "optimal")
                if max(r_prim, r_dual) <= polish_gate or it % polish_every == 0:
                    polished = self._polish(x, z, y, q, tol)
                    if polished is not None:
                        xp, yp, rp, rd = polished
                        return self._pack(xp, yp, rp, rd, it, "optimal")
                if it % check_every == 0:
                    if self._primal_infeasible(y - y_mark):
                        return self._pack(x, y, r_prim, r_dual, it, "infeasible")
                    y_mark = y.copy()

        if best is None:
            r_prim, r_dual = self._residuals(x, y, q)
            best = (max(r_prim, r_dual), x, y, r_prim, r_dual)
        _, xb, yb, rp, rd = best
        return self._pack(xb, yb, rp, rd, max_iter, "max_iter")

    def _pack(self, x, y, r_prim, r_dual, it, status):
        x = np.asarray(x)
        x.setflags(write=False)
        return QpSolution(
            x=x, primal_residual=r_prim, dual_residual=r_dual,
            iterations=it, status=status, multipliers=y,
            eq_multipliers=y[self.m_ineq + self.n:] if self.m_eq else np.zeros(0),
        )


def solve_raw(P, q, G, h, lb, ub, A_eq=None, b_eq=None, tol=1e-8,
              max_iter=DEFAULT_MAX_ITER, warm=None):
    """One-shot solve without a reusable workspace."""
    return BoxQpWorkspace(P, G, h, lb, ub, A_eq, b_eq).solve(
        q, tol=tol, max_iter=max_iter, warm=warm)


def solve(instance, tol=1e-8, max_iter=DEFAULT_MAX_ITER):
    """Solve a :class:`QpInstance` to the requested KKT tolerance."""
    region = instance.region
    return solve_raw(instance.P0, instance.q0, region.ineqA, region.ineqB,
                     region.lower, region.upper, tol=tol, max_iter=max_iter)


def solve_centralized(problem, tol=1e-8, max_iter=DEFAULT_MAX_ITER):
    """Reference oracle: solve the coupled problem as one QP.

    Stacks every agent's cost and constraints and appends the coupling
    equality; returns the optimal point, the coupling multiplier estimate,
    and the optimal cost as a :class:`~tadmm.problem.PrimalDualPair`.
    """
    from .problem import PrimalDualPair, eval_cost

    dims = problem.dims
    n = problem.total_dim
    n_agents = problem.n_agents
    if n > DENSE_LIMIT:
        blk = scipy.sparse.block_diag
        P = blk([problem.objective(i).quad for i in range(n_agents)], format="csr")
        G = blk([problem.region(i).ineqA for i in range(n_agents)], format="csr")
        A_full = scipy.sparse.hstack(
            [scipy.sparse.csr_matrix(problem.coupling(i).A) for i in range(n_agents)]).tocsr()
    else:
        P = scipy.linalg.block_diag(*[problem.objective(i).quad for i in range(n_agents)])
        G = scipy.linalg.block_diag(*[problem.region(i).ineqA for i in range(n_agents)])
        if G.size == 0:
            G = np.zeros((0, n))
        A_full = np.hstack([problem.coupling(i).A for i in range(n_agents)])
    q = np.concatenate([problem.objective(i).lin for i in range(n_agents)])
    h = np.concatenate([problem.region(i).ineqB for i in range(n_agents)])
    lb = np.concatenate([problem.region(i).lower for i in range(n_agents)])
    ub = np.concatenate([problem.region(i).upper for i in range(n_agents)])

    sol = solve_raw(P, q, G, h, lb, ub, A_eq=A_full, b_eq=problem.b,
                    tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise ValueError("coupled problem is infeasible")
    if sol.status != "optimal":
        raise RuntimeError(f"centralized solve did not converge (status {sol.status!r})")
    return PrimalDualPair(sol.x, sol.eq_multipliers, eval_cost(problem, sol.x))
