"""Result records shared by the selection solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

from .error_model import ObjectiveValue


@dataclass(frozen=True)
class Selection:
    """Strictly increasing vehicle indices into a scenario."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("selection indices must be strictly increasing")
        if idx and idx[0] < 0:
            raise ValueError("selection indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices) -> "Selection":
        return cls(tuple(sorted(int(i) for i in indices)))

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class SolverReport:
    method: str
    best: Selection
    objective: ObjectiveValue
    objective_evaluations: int
    bound_evaluations: int = 0
    nodes_pruned: int = 0
    wall_time: float = 0.0
    optimal: bool = False
    iterations: int = 0
    converged: bool = False
    flags: tuple[str, ...] = field(default=())

    @property
    def total_evaluations(self) -> int:
        return self.objective_evaluations + self.bound_evaluations

    def deterministic_fields(self) -> tuple:
        """Everything except wall time, for reproducibility checks."""
        return (
            self.method,
            self.best,
            self.objective,
            self.objective_evaluations,
            self.bound_evaluations,
            self.nodes_pruned,
            self.optimal,
            self.iterations,
            self.converged,
            self.flags,
        )
