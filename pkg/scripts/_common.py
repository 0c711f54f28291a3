"""Shared helpers for the experiment scripts."""
import csv
import sys
from pathlib import Path


def write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12e}" if isinstance(v, float) else v for v in row])
    print(f"wrote {path}", file=sys.stderr)


def show(header, rows) -> None:
    widths = [max(len(str(h)), 14) for h in header]
    print("  ".join(str(h).rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [f"{v: .6e}" if isinstance(v, float) else str(v) for v in row]
        print("  ".join(c.rjust(w) for c, w in zip(cells, widths)))
