"""Benchmark run records: CSV persistence, summary line, figures.

One record per chunk iteration.  Numeric fields are written with repr so a
parsed file reproduces the report exactly; metrics that a mode does not
produce stay None and round-trip as empty cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["IterationRecord", "RunReport", "render_figures"]

_COLUMNS = ["algorithm", "seed", "iteration", "n_current", "wall_time_update",
            "relative_error", "nmi", "ari", "edge_count"]
_INT_FIELDS = {"iteration", "n_current", "edge_count"}
_FLOAT_FIELDS = {"wall_time_update", "relative_error", "nmi", "ari"}


@dataclass
class IterationRecord:
    iteration: int
    n_current: int
    wall_time_update: float
    relative_error: float | None = None
    nmi: float | None = None
    ari: float | None = None
    edge_count: int | None = None


@dataclass
class RunReport:
    algorithm: str
    seed: int
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        if self.records:
            prev = self.records[-1]
            if record.n_current < prev.n_current:
                raise ValueError("n_current must be non-decreasing")
        if record.wall_time_update < 0.0:
            raise ValueError("negative wall time")
        self.records.append(record)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_COLUMNS)
            for rec in self.records:
                row = [self.algorithm, repr(self.seed)]
                for name in _COLUMNS[2:]:
                    value = getattr(rec, name)
                    row.append("" if value is None else repr(value))
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "RunReport":
        with Path(path).open("r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != _COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header")
        algorithm = None
        seed = None
        records = []
        for row in rows[1:]:
            if len(row) != len(_COLUMNS):
                raise ValueError(f"{path}: ragged row {row}")
            algorithm = row[0]
            seed = int(row[1])
            kwargs = {}
            for name, cell in zip(_COLUMNS[2:], row[2:]):
                if cell == "":
                    kwargs[name] = None
                elif name in _INT_FIELDS:
                    kwargs[name] = int(cell)
                else:
                    kwargs[name] = float(cell)
            records.append(IterationRecord(**kwargs))
        if algorithm is None:
            raise ValueError(f"{path}: no records")
        report = cls(algorithm=algorithm, seed=seed)
        report.records = records
        return report

    def summary(self) -> str:
        """One-line JSON digest of the whole run, for standard output."""
        last = self.records[-1] if self.records else None
        payload = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "iterations": len(self.records),
            "n_final": last.n_current if last else 0,
            "total_update_time": sum(r.wall_time_update for r in self.records),
        }
        for name in ("relative_error", "nmi", "ari", "edge_count"):
            if last is not None and getattr(last, name) is not None:
                payload["final_" + name] = getattr(last, name)
        return json.dumps(payload, sort_keys=True)


def render_figures(report: RunReport, csv_path) -> list[Path]:
    """Draw quality and timing curves next to the CSV; returns written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    base = Path(csv_path)
    written = []
    iters = [r.iteration for r in report.records]
    n_cur = [r.n_current for r in report.records]

    series = [(name, [getattr(r, name) for r in report.records])
              for name in ("relative_error", "nmi", "ari")]
    series = [(name, vals) for name, vals in series
              if any(v is not None for v in vals)]
    if series:
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, vals in series:
            xs = [i for i, v in zip(iters, vals) if v is not None]
            ys = [v for v in vals if v is not None]
            ax.plot(xs, ys, marker="o", label=name)
        ax.set_xlabel("iteration")
        ax.set_ylabel("score")
        ax.set_title(f"{report.algorithm}: quality per chunk")
        ax.legend()
        fig.tight_layout()
        out = base.with_name(base.stem + "_quality.png")
        fig.savefig(out, dpi=120)
        plt.close(fig)
        written.append(out)

    if report.records:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(n_cur, [r.wall_time_update for r in report.records], marker="o")
        ax.set_xlabel("points inserted")
        ax.set_ylabel("chunk update time (s)")
        ax.set_title(f"{report.algorithm}: update cost")
        fig.tight_layout()
        out = base.with_name(base.stem + "_time.png")
        fig.savefig(out, dpi=120)
        plt.close(fig)
        written.append(out)
    return written
