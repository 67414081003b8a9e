"""Mean +/- std summaries of pose errors, laid out like the calibration error table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import EmptyInput
from .se3 import PoseError

METRICS = (("position", "position_error", "mm"), ("roll", "roll", "deg"),
           ("pitch", "pitch", "deg"), ("yaw", "yaw", "deg"))
TOOL_COLUMNS = (("rigid", "Rigid Drill Tip"), ("flexible", "Flexible Drill Tip"))


@dataclass(frozen=True)
class MetricRow:
    mean: float
    std: float  # sample std (n - 1); 0 when n == 1
    n: int
    unit: str
    single_sample: bool = False

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n, "unit": self.unit,
                "single_sample": self.single_sample}


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate(errors: Sequence[PoseError], tool: str) -> dict[tuple[str, str], MetricRow]:
    if not errors:
        raise EmptyInput("cannot aggregate an empty error list")
    rows = {}
    for name, attr, unit in METRICS:
        mean, std = _mean_std([getattr(e, attr) for e in errors])
        rows[(tool, name)] = MetricRow(mean, std, len(errors), unit, len(errors) == 1)
    return rows


@dataclass
class ErrorReport:
    rows: dict[tuple[str, str], MetricRow] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_errors(cls, errors_by_tool: Mapping[str, Sequence[PoseError]], metadata: dict | None = None) -> ErrorReport:
        rows: dict = {}
        for tool, errs in errors_by_tool.items():
            rows.update(aggregate(errs, tool))
        return cls(rows, dict(metadata or {}))

    def to_dict(self) -> dict:
        tools: dict = {}
        for (tool, metric), row in sorted(self.rows.items()):
            tools.setdefault(tool, {})[metric] = row.to_dict()
        return {"metadata": self.metadata, "rows": tools}

    def to_markdown(self) -> str:
        present = [(t, label) for t, label in TOOL_COLUMNS if any(k[0] == t for k in self.rows)]
        lines = ["| Error | " + " | ".join(label for _, label in present) + " |",
                 "|---|" + "---|" * len(present)]
        for name, _, unit in METRICS:
            cells = []
            for tool, _ in present:
                row = self.rows.get((tool, name))
                cells.append("n/a" if row is None else f"{row.mean:.2f} ± {row.std:.2f} {unit}")
            lines.append(f"| {name.capitalize()} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
