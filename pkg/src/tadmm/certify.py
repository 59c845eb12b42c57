"""Numerical convergence certificate and trajectory monitors.

The consensus errors of the distributed iteration follow a linear system
``e_{k+1} = F e_k + G (u_{k+1} - u_k)`` with ``e_k = [lambda-deviations;
c * tracker-deviations]`` and ``u_k = c (z_k - A_d x*)``. The certificate
builds the quadratic-form matrices (P, Q, H) that make

    V_k = ||1 (x) (lambda_bar_k - lambda*)||^2 + 2 u_k' H e_k + ||G u_k - e_k||_P^2

non-increasing along exact trajectories, and the monitors check that descent
(and the plain dual-distance contraction) hold on recorded runs up to solver
noise. All matrices are built at graph scale (N x N blocks) and lifted to
block dimension p only when applied to stacked vectors.
"""

import json
from dataclasses import dataclass

import numpy as np

from .utils import kron_apply


@dataclass(frozen=True)
class LyapunovCertificate:
    """Graph-scale certificate matrices with positivity evidence.

    ``F = [[Wt, Wt], [0, Wt]]``, ``G = [I; I]``, ``H = [I, 0]`` and ``P`` has
    blocks ``P1 = 2I``, ``P2 = (I-Wt)^-1 - 2I``,
    ``P3 = (I-Wt)^-2 - 2(I-Wt)^-1 + 2I``; ``Q = P - F'PF``.
    """

    w_tilde: np.ndarray
    p: int
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    min_eig_P: float
    min_eig_Q: float
    eig_w_tilde_min: float
    eig_w_tilde_max: float
    cross_term_error: float
    identity_error_p12: float
    identity_error_p23: float

    @property
    def n(self):
        return self.w_tilde.shape[0]

    def blocks(self, m):
        n = self.n
        return m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:]

    def quad_form_P(self, v1, v2):
        """``[v1; v2]' (P (x) I_p) [v1; v2]`` for stacked Np-vectors."""
        p11, p12, p21, p22 = self.blocks(self.P)
        return float(v1 @ kron_apply(p11, v1, self.p)
                     + v1 @ kron_apply(p12, v2, self.p)
                     + v2 @ kron_apply(p21, v1, self.p)
                     + v2 @ kron_apply(p22, v2, self.p))

    def quad_form_Q(self, v1, v2):
        q11, q12, q21, q22 = self.blocks(self.Q)
        return float(v1 @ kron_apply(q11, v1, self.p)
                     + v1 @ kron_apply(q12, v2, self.p)
                     + v2 @ kron_apply(q21, v1, self.p)
                     + v2 @ kron_apply(q22, v2, self.p))

    def to_dict(self):
        return {
            "n": self.n,
            "p": self.p,
            "min_eig_P": self.min_eig_P,
            "min_eig_Q": self.min_eig_Q,
            "eig_w_tilde_min": self.eig_w_tilde_min,
            "eig_w_tilde_max": self.eig_w_tilde_max,
            "cross_term_error": self.cross_term_error,
            "identity_error_p12": self.identity_error_p12,
            "identity_error_p23": self.identity_error_p23,
            "positive": bool(self.min_eig_P > 0 and self.min_eig_Q > 0),
        }


def build_certificate(W, p):
    """Construct the certificate for a validated mixing matrix.

    For PSD mixing matrices every deviation eigenvalue lies in ``[0, 1)`` and
    both ``P`` and ``Q`` come out positive definite. A non-PSD matrix with a
    deviation eigenvalue at or below ``-1/3`` is reported through a
    nonpositive ``min_eig_Q`` rather than an error.
    """
    from . import network

    wt = network.deviation(W)
    wt = (wt + wt.T) / 2.0
    n = wt.shape[0]
    eye = np.eye(n)
    eigs = np.linalg.eigvalsh(wt)

    inv1 = np.linalg.solve(eye - wt, eye)
    inv1 = (inv1 + inv1.T) / 2.0
    inv2 = inv1 @ inv1
    P1 = 2.0 * eye
    P2 = inv1 - 2.0 * eye
    P3 = inv2 - 2.0 * inv1 + 2.0 * eye

    Pg = np.block([[P1, P2], [P2.T, P3]])
    Fg = np.block([[wt, wt], [np.zeros((n, n)), wt]])
    Gg = np.vstack([eye, eye])
    Hg = np.hstack([eye, np.zeros((n, n))])
    Qg = Pg - Fg.T @ Pg @ Fg

    cross = float(np.max(np.abs(Hg - Gg.T @ Pg @ (np.eye(2 * n) - Fg))))
    err12 = float(np.max(np.abs(P1 + P2.T - inv1)))
    err23 = float(np.max(np.abs(P2 + P3 - (inv2 - inv1))))

    return LyapunovCertificate(
        w_tilde=wt, p=int(p), F=Fg, G=Gg, H=Hg, P=Pg, Q=Qg,
        min_eig_P=float(np.linalg.eigvalsh((Pg + Pg.T) / 2.0)[0]),
        min_eig_Q=float(np.linalg.eigvalsh((Qg + Qg.T) / 2.0)[0]),
        eig_w_tilde_min=float(eigs[0]), eig_w_tilde_max=float(eigs[-1]),
        cross_term_error=cross,
        identity_error_p12=err12, identity_error_p23=err23,
    )


def stacked_coupling(problem, x):
    """``A_d x`` stacked per agent: ``[A_1 x_1; ...; A_N x_N]``."""
    parts = problem.split(x)
    return np.concatenate([problem.coupling(i).A @ parts[i]
                           for i in range(problem.n_agents)])


def lyapunov_value(metrics_k, problem, reference, cert, c):
    """Evaluate the certificate's Lyapunov function on one round's metrics."""
    n = problem.n_agents
    adx_star = stacked_coupling(problem, reference.x)
    lam_diff = metrics_k.lambda_bar - reference.lam
    e1 = metrics_k.lam_dev
    e2 = c * metrics_k.d_dev
    u = c * (metrics_k.z - adx_star)
    cross = 2.0 * float(u @ e1)
    return n * float(lam_diff @ lam_diff) + cross + cert.quad_form_P(u - e1, u - e2)


@dataclass(frozen=True)
class MonitorReport:
    """Per-round slack check of an inequality that should hold along the run."""

    name: str
    slacks: np.ndarray
    threshold: float
    scale: float
    max_slack: float
    passed: bool
    max_cross_term: float

    def to_dict(self):
        return {
            "name": self.name,
            "threshold": self.threshold,
            "scale": self.scale,
            "max_slack": self.max_slack,
            "max_cross_term": self.max_cross_term,
            "passed": self.passed,
            "slacks": self.slacks.tolist(),
        }


def check_descent(trajectory, problem, reference, cert, c, slack_tol=1e-6):
    """Verify the certified descent: the Lyapunov value must drop each round
    by at least the dual movement plus the Q-weighted consensus error, up to
    a scale-relative slack absorbing inexact subproblem solves."""
    ms = trajectory.metrics
    n = problem.n_agents
    adx_star = stacked_coupling(problem, reference.x)
    values = [lyapunov_value(m, problem, reference, cert, c) for m in ms]
    v0 = values[0]
    slacks = np.zeros(max(len(ms) - 1, 0))
    max_cross = 0.0
    for k in range(len(ms) - 1):
        m_k, m_next = ms[k], ms[k + 1]
        lam_step = m_next.lambda_bar - m_k.lambda_bar
        descent = n * float(lam_step @ lam_step) + cert.quad_form_Q(m_k.lam_dev, c * m_k.d_dev)
        slacks[k] = values[k + 1] - values[k] + descent
        u_next = c * (m_next.z - adx_star)
        max_cross = max(max_cross, abs(2.0 * float(u_next @ m_next.lam_dev)))
    scale = max(1.0, abs(v0))
    max_slack = float(np.max(slacks, initial=0.0))
    return MonitorReport("lyapunov_descent", slacks, slack_tol * scale, scale,
                         max_slack, bool(max_slack <= slack_tol * scale), max_cross)


def check_prop1(trajectory, problem, reference, c, slack_tol=1e-6, cert=None):
    """Verify the per-round dual-distance contraction with its consensus
    cross term; scale-relative slack as in :func:`check_descent`."""
    ms = trajectory.metrics
    n = problem.n_agents
    adx_star = stacked_coupling(problem, reference.x)
    slacks = np.zeros(max(len(ms) - 1, 0))
    max_cross = 0.0
    for k in range(len(ms) - 1):
        m_k, m_next = ms[k], ms[k + 1]
        diff_next = m_next.lambda_bar - reference.lam
        diff_k = m_k.lambda_bar - reference.lam
        lam_step = m_next.lambda_bar - m_k.lambda_bar
        cross = 2.0 * c * float((m_next.z - adx_star) @ m_next.lam_dev)
        lhs = n * float(diff_next @ diff_next) + cross
        rhs = n * float(diff_k @ diff_k) - n * float(lam_step @ lam_step)
        slacks[k] = lhs - rhs
        max_cross = max(max_cross, abs(cross))
    if cert is not None:
        scale = max(1.0, abs(lyapunov_value(ms[0], problem, reference, cert, c)))
    else:
        m0 = ms[0]
        d0 = m0.lambda_bar - reference.lam
        scale = max(1.0, n * float(d0 @ d0) + c ** 2 * float(
            (m0.z - adx_star) @ (m0.z - adx_star)))
    max_slack = float(np.max(slacks, initial=0.0))
    return MonitorReport("dual_distance_contraction", slacks, slack_tol * scale,
                         scale, max_slack, bool(max_slack <= slack_tol * scale), max_cross)


def write_reports(path, cert, reports):
    """Serialize the certificate summary plus monitor reports to JSON."""
    data = {"certificate": cert.to_dict(),
            "monitors": [r.to_dict() for r in reports]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
    return data
