from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from loguru import logger  # noqa: E402

from src.core.errors import DataFileError  # noqa: E402

# Wall time varies between runs, so it is kept out of the CSV.
_CSV_EXCLUDED = {"wall_time"}


@dataclass(frozen=True)
class RunRecord:
    """One (n, c, replica) observation of an experiment, plus the matching theory values."""

    experiment: str
    n: int
    c: float
    replica: int
    seed: int
    stream: str
    c1_frac: float
    c2_frac: float
    nk_digest: str
    rho_theory: float | None = None
    alpha_theory: float | None = None
    converged: bool = True
    delta: float | None = None
    mode: str = ""
    label: str = ""
    value: float | None = None
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        for name in ("c1_frac", "c2_frac"):
            frac = getattr(self, name)
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name}={frac} must be a fraction in [0, 1]")
        if self.c2_frac > self.c1_frac:
            raise ValueError("C2 cannot exceed C1")

    def sort_key(self) -> tuple:
        return (self.experiment, self.n, self.c, self.delta or 0.0, self.mode, self.label, self.replica)


def csv_columns() -> List[str]:
    return [f.name for f in fields(RunRecord) if f.name not in _CSV_EXCLUDED]


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def records_to_csv(records: Sequence[RunRecord]) -> str:
    columns = csv_columns()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for record in sorted(records, key=RunRecord.sort_key):
        row = asdict(record)
        writer.writerow([_cell(row[col]) for col in columns])
    return buffer.getvalue()


def _aggregate(records: Iterable[RunRecord]) -> Dict[int, Dict[float, List[float]]]:
    grouped: Dict[int, Dict[float, List[float]]] = {}
    for record in records:
        grouped.setdefault(record.n, {}).setdefault(record.c, []).append(record.c1_frac)
    return grouped


def render_plot(records: Sequence[RunRecord], target: Path, title: str) -> Path:
    """C1/n against c (mean and spread per n) with the theoretical rho curve overlaid."""
    plt.rcParams["svg.hashsalt"] = "giant-component"
    fig, ax = plt.subplots(figsize=(6, 4))
    for n, by_c in sorted(_aggregate(records).items()):
        cs = sorted(by_c)
        means = [sum(by_c[c]) / len(by_c[c]) for c in cs]
        lows = [m - min(by_c[c]) for m, c in zip(means, cs)]
        highs = [max(by_c[c]) - m for m, c in zip(means, cs)]
        ax.errorbar(cs, means, yerr=[lows, highs], marker="o", capsize=3, label=f"C1/n, n={n}")
    theory = sorted({(r.c, r.rho_theory) for r in records if r.rho_theory is not None})
    if theory:
        ax.plot([c for c, _ in theory], [rho for _, rho in theory], "k--", label="rho(c kappa)")
    alpha = sorted({(r.c, r.alpha_theory) for r in records if r.alpha_theory is not None})
    if alpha:
        ax.plot([c for c, _ in alpha], [a for _, a in alpha], "k:", label="lower bound alpha(c)")
    ax.set_xlabel("c")
    ax.set_ylabel("fraction of vertices")
    ax.set_title(title)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="upper left", fontsize="small")
    fig.tight_layout()
    try:
        fig.savefig(target, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise DataFileError(f"cannot write plot ({exc.strerror or exc})", path=str(target)) from exc
    finally:
        plt.close(fig)
    return target


def emit_report(
    records: Sequence[RunRecord],
    out_dir: str | Path,
    stem: str,
    formats: Sequence[str] = ("csv",),
) -> List[Path]:
    if not records:
        raise ValueError("cannot emit a report without records")
    unknown = set(formats) - {"csv", "svg"}
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)}")
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataFileError(f"cannot create output directory ({exc.strerror or exc})", path=str(root)) from exc

    written: List[Path] = []
    if "csv" in formats:
        target = root / f"{stem}.csv"
        try:
            target.write_text(records_to_csv(records))
        except OSError as exc:
            raise DataFileError(f"cannot write CSV ({exc.strerror or exc})", path=str(target)) from exc
        written.append(target)
    if "svg" in formats:
        written.append(render_plot(records, root / f"{stem}.svg", title=stem))
    logger.info("report emitted", files=[str(p) for p in written], rows=len(records))
    return written


__all__ = ["RunRecord", "csv_columns", "emit_report", "records_to_csv", "render_plot"]
