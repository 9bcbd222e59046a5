"""Small helpers for the fixed CSV dialect used by every output file.

All files use ``\\n`` line endings, ``.`` as decimal separator and floats
printed with 17 significant digits so that they round-trip exactly.
"""
import csv
import io

import numpy as np

from .errors import ParseError


def fmt(value):
    """Render one CSV field: booleans as 1/0, integers verbatim, floats at 17 digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_rows(path, header, rows, comments=()):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    for line in comments:
        buf.write(f"# {line}\n")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def read_rows(path, header):
    """Read a CSV written by :func:`write_rows`, checking the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError(f"{path}: empty file")
    reader = csv.reader(lines)
    got = next(reader)
    for col in header:
        if col not in got:
            raise ParseError(f"{path}: missing column '{col}'")
    extra = [c for c in got if c not in header]
    if extra:
        raise ParseError(f"{path}: unexpected column '{extra[0]}'")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(got):
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {len(got)}")
        out.append(dict(zip(got, row)))
    return out
