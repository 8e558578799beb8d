"""Pure text generation and parsing for result tables (no filesystem access).

Weak-error CSV::

    N,est_p,se_p,est_s,se_s,gap,gap_se,replicas
    64,0.01732,0.00141,-0.00041,0.00139,0.01773,0.00198,1000

Floats are written with ``repr`` so identical runs give identical bytes.
The gnuplot ``.dat`` variant carries the same columns separated by
whitespace under a ``#`` header line.
"""

import csv
import io
from typing import Any, Iterable, Mapping, Sequence

from fluctlab.experiments import WeakErrorRow
from fluctlab.particles import Snapshot

WEAK_ERROR_COLUMNS = ("N", "est_p", "se_p", "est_s", "se_s", "gap", "gap_se", "replicas")

_INT_COLUMNS = frozenset({"N", "replicas", "n", "kmax", "L_noise", "n_mollify", "particle", "replica"})


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def generate_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """CSV text with a header line and ``\\n`` line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buffer.getvalue()


def generate_dat(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """Whitespace-separated columns for gnuplot."""
    lines = ["# " + " ".join(columns)]
    for row in rows:
        lines.append(" ".join(_cell(row[c]) or "nan" for c in columns))
    return "\n".join(lines) + "\n"


def parse_csv(content: str) -> list[dict[str, Any]]:
    """Rows of a generated CSV; integer columns become int, the rest float.

    Raises:
        ValueError: If a row has the wrong number of cells or a cell is not numeric.
    """
    reader = csv.reader(io.StringIO(content))
    try:
        header = next(reader)
    except StopIteration:
        return []
    rows = []
    for line_num, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise ValueError(f"Invalid result line {line_num}: expected {len(header)} cells, got {len(cells)}")
        row: dict[str, Any] = {}
        for name, cell in zip(header, cells):
            try:
                if cell == "":
                    row[name] = None
                elif cell in ("true", "false"):
                    row[name] = cell == "true"
                elif name in _INT_COLUMNS:
                    row[name] = int(cell)
                else:
                    row[name] = float(cell)
            except ValueError:
                raise ValueError(f"Invalid result line {line_num}: column {name!r} = {cell!r}")
        rows.append(row)
    return rows


# =============================================================================
# Weak error
# =============================================================================


def weak_error_csv(rows: Sequence[WeakErrorRow]) -> str:
    return generate_csv(WEAK_ERROR_COLUMNS, (r.to_dict() for r in rows))


def weak_error_dat(rows: Sequence[WeakErrorRow]) -> str:
    return generate_dat(WEAK_ERROR_COLUMNS, (r.to_dict() for r in rows))


def parse_weak_error_csv(content: str) -> list[WeakErrorRow]:
    """WeakErrorRows without replica samples; gap and gap_se are recomputed."""
    out = []
    for row in parse_csv(content):
        missing = [c for c in WEAK_ERROR_COLUMNS if c not in row]
        if missing:
            raise ValueError(f"weak-error table lacks columns {missing}")
        out.append(WeakErrorRow(
            N=row["N"],
            est_p=row["est_p"],
            se_p=row["se_p"],
            est_s=row["est_s"],
            se_s=row["se_s"],
            replicas=row["replicas"],
        ))
    return out


# =============================================================================
# Records
# =============================================================================


def records_csv(records: Sequence[Any]) -> str:
    """CSV of report records sharing one ``to_dict`` key set."""
    if not records:
        return ""
    dicts = [r.to_dict() for r in records]
    return generate_csv(list(dicts[0]), dicts)


def records_dat(records: Sequence[Any]) -> str:
    if not records:
        return ""
    dicts = [r.to_dict() for r in records]
    return generate_dat(list(dicts[0]), dicts)


def trajectory_csv(snapshots: Sequence[Snapshot], replica: int = 0) -> str:
    """Columns t, replica, particle, x1..xd."""
    if not snapshots:
        return ""
    d = snapshots[0].positions.shape[1]
    columns = ["t", "replica", "particle"] + [f"x{j + 1}" for j in range(d)]
    rows = (
        {"t": float(snap.t), "replica": replica, "particle": i,
         **{f"x{j + 1}": float(x[j]) for j in range(d)}}
        for snap in snapshots
        for i, x in enumerate(snap.positions)
    )
    return generate_csv(columns, rows)
