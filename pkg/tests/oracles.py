"""Independent brute-force oracles used to pin expected values.

These never touch the package's own solver: LP optima come from vertex
enumeration, small QP optima from exhaustive active-set enumeration, and the
larger charging-benchmark cross-checks from scipy's HiGHS simplex.
"""

from itertools import combinations

import numpy as np


def _constraint_rows(G, h, lb, ub):
    """All inequality rows as (normal, rhs) pairs of ``a.x <= r`` form."""
    n = len(lb)
    rows = []
    if G is not None and np.size(G):
        G = np.asarray(G, dtype=float)
        for a, r in zip(G, np.asarray(h, dtype=float)):
            rows.append((a, float(r)))
    eye = np.eye(n)
    for i in range(n):
        rows.append((eye[i], float(ub[i])))
        rows.append((-eye[i], float(-lb[i])))
    return rows


def _feasible(x, rows, A_eq, b_eq, tol):
    for a, r in rows:
        if a @ x > r + tol:
            return False
    if A_eq is not None and np.size(A_eq):
        if np.max(np.abs(np.asarray(A_eq) @ x - np.asarray(b_eq))) > tol:
            return False
    return True


def enumerate_vertices(G, h, lb, ub, A_eq=None, b_eq=None, tol=1e-9):
    """All vertices of a bounded polyhedron (tiny dimensions only)."""
    n = len(lb)
    rows = _constraint_rows(G, h, lb, ub)
    eq_rows = []
    if A_eq is not None and np.size(A_eq):
        eq_rows = [(np.asarray(a, dtype=float), float(r))
                   for a, r in zip(np.asarray(A_eq), np.asarray(b_eq))]
    need = n - len(eq_rows)
    vertices = []
    for combo in combinations(rows, need):
        M = np.array([a for a, _ in eq_rows] + [a for a, _ in combo])
        r = np.array([r for _, r in eq_rows] + [r for _, r in combo])
        if np.linalg.matrix_rank(M) < n:
            continue
        x = np.linalg.lstsq(M, r, rcond=None)[0]
        if _feasible(x, rows, A_eq, b_eq, tol):
            if not any(np.max(np.abs(x - v)) < 1e-9 for v in vertices):
                vertices.append(x)
    return vertices


def lp_vertex_min(c, G, h, lb, ub, A_eq=None, b_eq=None):
    """LP optimum by scanning every vertex; returns (value, minimizer)."""
    vertices = enumerate_vertices(G, h, lb, ub, A_eq, b_eq)
    assert vertices, "oracle found no feasible vertex"
    values = [float(np.asarray(c) @ v) for v in vertices]
    k = int(np.argmin(values))
    return values[k], vertices[k]


def qp_active_set_min(P, q, G, h, lb, ub, A_eq=None, b_eq=None, tol=1e-9):
    """Tiny-QP optimum by enumerating every active set; returns (value, x).

    Solves the equality-KKT system for each candidate set, keeps feasible
    points, and returns the best objective value found (convexity makes any
    KKT-feasible point globally optimal, but scanning all candidates avoids
    relying on multiplier signs).
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = len(q)
    rows = _constraint_rows(G, h, lb, ub)
    eq_rows = []
    if A_eq is not None and np.size(A_eq):
        eq_rows = [(np.asarray(a, dtype=float), float(r))
                   for a, r in zip(np.asarray(A_eq), np.asarray(b_eq))]

    best = (np.inf, None)
    for size in range(0, n - len(eq_rows) + 1):
        for combo in combinations(rows, size):
            act = [a for a, _ in eq_rows] + [a for a, _ in combo]
            rhs = [r for _, r in eq_rows] + [r for _, r in combo]
            m = len(act)
            K = np.zeros((n + m, n + m))
            K[:n, :n] = P
            if m:
                C = np.array(act)
                K[:n, n:] = C.T
                K[n:, :n] = C
            target = np.concatenate([-q, np.array(rhs)]) if m else -q
            sol, res, *_ = np.linalg.lstsq(K, target, rcond=None)
            x = sol[:n]
            if np.max(np.abs(K @ sol - target)) > 1e-8:
                continue
            if _feasible(x, rows, A_eq, b_eq, tol):
                val = 0.5 * x @ P @ x + q @ x
                if val < best[0] - 1e-12:
                    best = (float(val), x)
    assert best[1] is not None, "oracle found no feasible KKT point"
    return best


def linprog_min(c, G, h, lb, ub, A_eq=None, b_eq=None):
    """Independent LP solve via scipy's HiGHS (for instances too big to enumerate)."""
    import scipy.optimize

    bounds = list(zip(lb, ub))
    res = scipy.optimize.linprog(
        c, A_ub=G if G is not None and np.size(G) else None,
        b_ub=h if G is not None and np.size(G) else None,
        A_eq=A_eq if A_eq is not None and np.size(A_eq) else None,
        b_eq=b_eq if A_eq is not None and np.size(A_eq) else None,
        bounds=bounds, method="highs")
    assert res.status == 0, f"oracle LP failed: {res.message}"
    return float(res.fun), res.x


def centralized_lp_oracle(problem):
    """HiGHS on the stacked linear coupled problem (costs must be linear)."""
    import scipy.linalg

    n_agents = problem.n_agents
    for i in range(n_agents):
        assert np.max(np.abs(problem.objective(i).quad)) == 0.0, "oracle is for LPs"
    c = np.concatenate([problem.objective(i).lin for i in range(n_agents)])
    G = scipy.linalg.block_diag(*[problem.region(i).ineqA for i in range(n_agents)])
    h = np.concatenate([problem.region(i).ineqB for i in range(n_agents)])
    lb = np.concatenate([problem.region(i).lower for i in range(n_agents)])
    ub = np.concatenate([problem.region(i).upper for i in range(n_agents)])
    A = np.hstack([problem.coupling(i).A for i in range(n_agents)])
    val, x = linprog_min(c, G, h, lb, ub, A_eq=A, b_eq=problem.b)
    offset = sum(problem.objective(i).offset for i in range(n_agents))
    return val + offset, x
