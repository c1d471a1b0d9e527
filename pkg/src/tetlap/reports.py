"""Solve reports: residual bookkeeping shared by the solvers and the CLI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class SolveReport:
    """Residuals, iteration counts, timings and parameters of one solve.

    `final_residual` is always recomputed from the returned vector, never
    copied from an internal estimate.
    """

    stage: str = ""
    size: int = 0
    iterations: int = 0
    converged: bool = True
    initial_residual: float = 0.0
    final_residual: float = 0.0
    residual_trace: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)  # nested sub-reports

    def add_stage(self, name: str, report: "SolveReport") -> None:
        self.stages[name] = report
        self.iterations += report.iterations

    def to_dict(self) -> dict:
        out = {
            "stage": self.stage,
            "size": self.size,
            "iterations": self.iterations,
            "converged": self.converged,
            "initial_residual": self.initial_residual,
            "final_residual": self.final_residual,
            "residual_trace": list(self.residual_trace),
            "params": dict(self.params),
            "timings": dict(self.timings),
        }
        if self.stages:
            out["stages"] = {k: v.to_dict() for k, v in self.stages.items()}
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)
