"""Tables, manifest and plot script written by the command line tools."""

from __future__ import annotations
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
import platform
from typing import Any, Iterable, Sequence

import numpy as np
import orjson

from biofilm_fv.experiments.convergence import ConvergenceResult, ModelComparison
from biofilm_fv.experiments.runner import Snapshot, Trajectory
from biofilm_fv.numerics.diagnostics import DIAGNOSTICS_FIELDS, DiagnosticsRecord
from biofilm_fv.numerics.scheme import Grid
from biofilm_fv.utils import config_hash, format_time


SNAPSHOT_HEADER = "x,u,v,mu"
DIAGNOSTICS_HEADER = ",".join(DIAGNOSTICS_FIELDS)
CONVERGENCE_HEADER = "resolution,error_u,error_v,order_u,order_v"
DIFFERENCES_HEADER = "t,l2_u,l2_v"
# 17 significant digits round-trip every double
FLOAT_FORMAT = "%.17g"


def _write_table(path: Path, header: str, rows: np.ndarray, fmt: str | Sequence[str] = FLOAT_FORMAT):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        rows = rows.reshape(0, header.count(",") + 1)
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=header, comments="")


def snapshot_name(t: float) -> str:
    return f"snapshots_{format_time(t)}.csv"


def write_snapshot(directory: Path, snapshot: Snapshot, grid: Grid, name: str | None = None) -> Path:
    path = Path(directory) / (name or snapshot_name(snapshot.requested))
    s = snapshot.state
    _write_table(path, SNAPSHOT_HEADER, np.column_stack((grid.cell_centers, s.u, s.v, s.mu)))
    return path


def write_diagnostics(path: Path, records: Iterable[DiagnosticsRecord]) -> Path:
    rows = np.array([record.as_row() for record in records], dtype=float)
    fmt = [FLOAT_FORMAT] * (len(DIAGNOSTICS_FIELDS) - 1) + ["%d"]
    _write_table(Path(path), DIAGNOSTICS_HEADER, rows, fmt)
    return Path(path)


def write_convergence(path: Path, result: ConvergenceResult) -> Path:
    _write_table(Path(path), CONVERGENCE_HEADER, result.table())
    return Path(path)


def write_trajectory(directory: Path, trajectory: Trajectory, prefix: str = "") -> list[Path]:
    directory = Path(directory)
    paths = [
        write_snapshot(directory, snapshot, trajectory.grid,
                       prefix + snapshot_name(snapshot.requested))
        for snapshot in trajectory.snapshots
    ]
    paths.append(write_diagnostics(directory / f"{prefix}diagnostics.csv",
                                   trajectory.diagnostics))
    return paths


def write_comparison(directory: Path, comparison: ModelComparison) -> list[Path]:
    directory = Path(directory)
    paths = []
    for model, trajectory in comparison.trajectories.items():
        paths.extend(write_trajectory(directory, trajectory, prefix=f"{model.value}_"))
    rows = np.array([[d.t, d.l2_u, d.l2_v] for d in comparison.differences], dtype=float)
    path = directory / "differences.csv"
    _write_table(path, DIFFERENCES_HEADER, rows)
    paths.append(path)
    return paths


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to replay a run."""

    command: str
    settings: dict[str, Any]
    version: str
    config_hash: str
    started: str
    finished: str = ""
    host: dict[str, str] = field(default_factory=dict)

    @classmethod
    def create(cls, command: str, settings: dict[str, Any], version: str) -> RunManifest:
        return cls(
            command=command,
            settings=settings,
            version=version,
            config_hash=config_hash(settings),
            started=datetime.now(timezone.utc).isoformat(),
            host={"python": platform.python_version(), "machine": platform.machine()},
        )

    def finish(self) -> RunManifest:
        return RunManifest(**{**asdict(self), "finished": datetime.now(timezone.utc).isoformat()})

    def dumps(self) -> bytes:
        return orjson.dumps(asdict(self), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)

    @classmethod
    def loads(cls, data: bytes | str) -> RunManifest:
        return cls(**orjson.loads(data))

    def write(self, directory: Path) -> Path:
        path = Path(directory) / "manifest.txt"
        path.write_bytes(self.dumps())
        return path

    @classmethod
    def read(cls, path: str | Path) -> RunManifest:
        return cls.loads(Path(path).read_bytes())


_PLOT_TEMPLATE = """\
# gnuplot script generated by biofilm-fv
set datafile separator ","
set key autotitle columnhead
set terminal pngcairo size 1200,500
set output "fields.png"
set multiplot layout 1,2
set xlabel "x"
set title "biomass u"
plot {u_plots}
set title "substrate v"
plot {v_plots}
unset multiplot
set output "diagnostics.png"
set multiplot layout 1,2
set xlabel "t"
set title "mass"
plot "{diagnostics}" using 1:2 with lines title "mass_u", \\
     "{diagnostics}" using 1:3 with lines title "mass_v"
set title "entropy"
plot "{diagnostics}" using 1:5 with lines title "entropy"
unset multiplot
"""

_CONVERGENCE_PLOT = """\
# gnuplot script generated by biofilm-fv
set datafile separator ","
set terminal pngcairo size 700,500
set output "convergence.png"
set logscale xy
set xlabel "resolution"
set ylabel "L2 error"
plot "convergence.csv" using 1:2 with linespoints title "u", \\
     "convergence.csv" using 1:3 with linespoints title "v"
"""


def write_plot_script(directory: Path, snapshot_files: Sequence[str] = (),
                      diagnostics: str = "diagnostics.csv",
                      convergence: bool = False) -> Path:
    path = Path(directory) / "plot.gp"
    if convergence:
        path.write_text(_CONVERGENCE_PLOT)
        return path

    def plots(column):
        if not snapshot_files:
            return "NaN notitle"
        return ", \\\n     ".join(
            f'"{name}" using 1:{column} with lines title "{name}"' for name in snapshot_files
        )

    path.write_text(
        _PLOT_TEMPLATE.format(u_plots=plots(2), v_plots=plots(3), diagnostics=diagnostics)
    )
    return path
