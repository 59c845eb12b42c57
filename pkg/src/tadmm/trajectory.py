"""Per-round diagnostics and trajectory export.

The CSV layout is fixed: ``k,cost,costGap,couplingInf,eD,eL,dBarInf,
lambdaBar_0..lambdaBar_{p-1}``. Numbers are written with shortest
round-trip ``repr`` so identical runs produce byte-identical files.
"""

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class IterationMetrics:
    """Snapshot of one synchronous round.

    ``z`` is the auxiliary stacked vector ``A_i x_i - d_bar`` per agent;
    ``d_dev`` and ``lam_dev`` stack the deviations of each agent's tracker
    and dual from the round's network averages.
    """

    k: int
    cost: float
    coupling_inf: float
    residual: np.ndarray  # coupling violation sum_i A_i x_i - b
    d_bar: np.ndarray
    lambda_bar: np.ndarray
    e_d: float
    e_l: float
    z: np.ndarray
    d_dev: np.ndarray
    lam_dev: np.ndarray
    lambdas: np.ndarray  # (N, p) per-agent duals


@dataclass
class Trajectory:
    """A full run: per-round metrics plus the final states and bookkeeping."""

    algorithm: str
    metrics: list = field(default_factory=list)
    stop_reason: str = "unknown"
    wall_time: float = 0.0
    qp_iterations: int = 0
    config: dict = field(default_factory=dict)

    @property
    def n_rounds(self):
        return len(self.metrics) - 1 if self.metrics else 0

    @property
    def final(self):
        return self.metrics[-1]

    def write_csv(self, path, reference=None):
        p = self.metrics[0].lambda_bar.shape[0]
        header = ["k", "cost", "costGap", "couplingInf", "eD", "eL", "dBarInf"]
        header += [f"lambdaBar_{j}" for j in range(p)]
        lines = [",".join(header)]
        for m in self.metrics:
            gap = m.cost - reference.cost if reference is not None else float("nan")
            row = [str(m.k), _num(m.cost), _num(gap), _num(m.coupling_inf),
                   _num(m.e_d), _num(m.e_l), _num(float(np.max(np.abs(m.d_bar), initial=0.0)))]
            row += [_num(v) for v in m.lambda_bar]
            lines.append(",".join(row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def write_lambdas_csv(self, path):
        """Per-agent multiplier components, one column per (agent, component)."""
        n_agents, p = self.metrics[0].lambdas.shape
        header = ["k"] + [f"lambda_{i}_{j}" for i in range(n_agents) for j in range(p)]
        lines = [",".join(header)]
        for m in self.metrics:
            row = [str(m.k)] + [_num(v) for v in m.lambdas.reshape(-1)]
            lines.append(",".join(row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def summary(self, reference=None):
        last = self.final
        out = {
            "algorithm": self.algorithm,
            "stop_reason": self.stop_reason,
            "rounds": self.n_rounds,
            "wall_time_s": self.wall_time,
            "qp_iterations": self.qp_iterations,
            "config": self.config,
            "final": {
                "k": last.k,
                "cost": last.cost,
                "coupling_inf": last.coupling_inf,
                "e_d": last.e_d,
                "e_l": last.e_l,
                "d_bar_inf": float(np.max(np.abs(last.d_bar), initial=0.0)),
            },
        }
        if reference is not None:
            out["final"]["cost_gap"] = last.cost - reference.cost
        return out

    def write_summary(self, path, reference=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(reference), fh, indent=2)


def _num(v):
    return repr(float(v))
