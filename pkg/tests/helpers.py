"""Deterministic instance builders shared across the test suite."""

import numpy as np

from tadmm.network import metropolis_weights, random_connected_graph, square_weights
from tadmm.problem import (ConstraintCoupledProblem, CouplingBlock,
                           LocalObjective, Polyhedron, split_rhs)


def two_agent_lp():
    """min x1 + 2 x2  s.t.  x1 + x2 = 1,  x in [0,1]^2 (two scalar agents).

    Optimum x* = (1, 0), f* = 1, coupling multiplier anywhere in [-2, -1].
    """
    shares = split_rhs([1.0], 2)
    agents = []
    for lin, share in zip(([1.0], [2.0]), shares):
        agents.append((LocalObjective(np.zeros((1, 1)), lin),
                       Polyhedron(np.zeros((0, 1)), [], [0.0], [1.0]),
                       CouplingBlock([[1.0]], share)))
    return ConstraintCoupledProblem(tuple(agents), [1.0])


def random_problem(seed, n_agents=10, p=4, n_range=(2, 5), quad_mode="random",
                   curvature=0.5, with_ineq=True):
    """Seeded coupled QP with a guaranteed interior feasible point.

    ``quad_mode="random"`` draws a well-conditioned PSD curvature plus a
    ridge; ``"ridge"`` uses ``curvature * I`` only (linear costs otherwise),
    which is the strictly-convex-by-epsilon fixture.
    """
    rng = np.random.default_rng(seed)
    dims = rng.integers(n_range[0], n_range[1] + 1, size=n_agents)
    agents = []
    a_blocks = []
    x_int = []
    for i in range(n_agents):
        n_i = int(dims[i])
        if quad_mode == "random":
            book = rng.normal(size=(n_i, n_i))
            quad = book.T @ book / n_i + curvature * np.eye(n_i)
        elif quad_mode == "ridge":
            quad = curvature * np.eye(n_i)
        else:
            raise ValueError(quad_mode)
        lin = rng.normal(size=n_i)
        lower = -1.0 - rng.uniform(0.0, 1.0, size=n_i)
        upper = 1.0 + rng.uniform(0.0, 1.0, size=n_i)
        xi = rng.uniform(-0.5, 0.5, size=n_i)
        if with_ineq:
            g = rng.normal(size=(1, n_i))
            hh = g @ xi + rng.uniform(0.5, 1.0, size=1)
            poly = Polyhedron(g, hh, lower, upper)
        else:
            poly = Polyhedron(np.zeros((0, n_i)), [], lower, upper)
        a_i = rng.normal(size=(p, n_i))
        agents.append([LocalObjective(quad, lin), poly, a_i])
        a_blocks.append(a_i)
        x_int.append(xi)

    b = np.zeros(p)
    for a_i, xi in zip(a_blocks, x_int):
        b = b + a_i @ xi
    shares = split_rhs(b, n_agents)
    full = tuple((obj, poly, CouplingBlock(a_i, share))
                 for (obj, poly, a_i), share in zip(agents, shares))
    return ConstraintCoupledProblem(full, b)


def metropolis_squared(n, seed, density=0.4):
    """Metropolis weights on a seeded connected graph, squared (PSD)."""
    return square_weights(metropolis_weights(random_connected_graph(n, density=density, seed=seed)))
