"""Per-level records emitted by the adaptive fitting and solver loops."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["LevelRecord", "AdaptiveReport"]


@dataclass
class LevelRecord:
    level: int
    dof: int
    new_functions: int = 0          # 4 * (new basis vertices this level)
    modified_functions: int = 0
    marked: int = 0
    labels: dict = field(default_factory=dict)   # histogram over final labels
    max_error: float = None
    mean_error: float = None
    eta_total: float = None
    l2_error: float = None
    h1_error: float = None
    seconds: dict = field(default_factory=dict)  # phase -> wall time

    def to_json_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class AdaptiveReport:
    levels: list = field(default_factory=list)
    converged: bool = False
    strategy: str = "modified"

    def add(self, record):
        if self.levels and record.dof < self.levels[-1].dof:
            raise ValueError("DOF count decreased across levels")
        self.levels.append(record)

    @property
    def final(self):
        return self.levels[-1] if self.levels else None

    def to_json_dict(self):
        return {
            "strategy": self.strategy,
            "converged": self.converged,
            "levels": [r.to_json_dict() for r in self.levels],
        }

    def check_dof_accounting(self):
        """DOF_k = DOF_{k-1} + new functions, strictly increasing while refining."""
        for prev, cur in zip(self.levels, self.levels[1:]):
            if cur.dof != prev.dof + cur.new_functions:
                return False
            if cur.new_functions and cur.dof <= prev.dof:
                return False
        return True
