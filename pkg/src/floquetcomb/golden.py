"""Golden-data corpus: canonical tables, content digests and regeneration.

A corpus is a directory holding one canonical CSV per case plus a
``manifest.json`` that records, for each case id, the file name, its
SHA-256 digest, the tolerance policy and a description of the oracle that
produced it. Stored values always come from the oracle, never from the
code under test; :func:`regenerate_golden` refuses to write when the two
disagree beyond the case tolerance.

Canonical CSV: comma separated, ``\\n`` line ends, a header row, floats as
``%.11e`` (12 significant digits), integers in decimal, booleans as
``true``/``false``. The bytes are locale independent.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import FloquetCombError

MANIFEST = "manifest.json"
#: relative spacing of 12-significant-digit values (one unit in the last place)
STORED_RESOLUTION = 1.0e-11


class GoldenMismatch(FloquetCombError):
    """Main path and oracle disagree beyond the case tolerance."""

    def __init__(self, case_id: str, diffs: Sequence[str]):
        self.case_id = case_id
        self.diffs = tuple(diffs)
        shown = "\n  ".join(self.diffs[:20])
        more = f"\n  ... {len(self.diffs) - 20} more" if len(self.diffs) > 20 else ""
        super().__init__(f"{case_id}: {len(self.diffs)} difference(s)\n  {shown}{more}")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.11e}"
    return str(v)


def _parse_value(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass(frozen=True)
class GoldenTable:
    """Column names plus rows of scalars (numbers, booleans or strings)."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row {r!r} does not match columns {self.columns!r}")

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow(format_value(v) for v in r)
        return buf.getvalue().encode("utf-8")

    @classmethod
    def from_csv(cls, data: bytes | str) -> "GoldenTable":
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        return cls(tuple(header), tuple(tuple(_parse_value(v) for v in row) for row in reader))

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def select(self, names: Sequence[str]) -> "GoldenTable":
        idx = [self.columns.index(n) for n in names]
        return GoldenTable(tuple(names), tuple(tuple(r[k] for k in idx) for r in self.rows))

    @property
    def digest(self) -> str:
        return digest(self.to_csv())


def digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Tolerance:
    """Numeric agreement policy: ``|a - b| <= atol + rtol * |b|`` per cell.

    ``exact`` lists columns compared for equality (integers, labels). Any
    column not numeric is compared exactly as well. ``complex_pairs`` names
    (real, imaginary) column pairs compared as one complex number, so the
    relative bound applies to the modulus rather than to each part.

    Every bound is widened by one unit in the twelfth significant digit of
    the expected value, the resolution of the stored table.
    """

    rtol: float = 0.0
    atol: float = 0.0
    exact: tuple[str, ...] = ()
    complex_pairs: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        return {"rtol": self.rtol, "atol": self.atol, "exact": list(self.exact),
                "complex_pairs": [list(p) for p in self.complex_pairs]}

    @classmethod
    def from_dict(cls, d: dict) -> "Tolerance":
        return cls(float(d.get("rtol", 0.0)), float(d.get("atol", 0.0)), tuple(d.get("exact", ())),
                   tuple(tuple(p) for p in d.get("complex_pairs", ())))


def compare(expected: GoldenTable, actual: GoldenTable, tol: Tolerance) -> list[str]:
    """Human-readable differences; empty when the tables agree."""
    if expected.columns != actual.columns:
        return [f"columns differ: expected {expected.columns}, got {actual.columns}"]
    if len(expected.rows) != len(actual.rows):
        return [f"row count differs: expected {len(expected.rows)}, got {len(actual.rows)}"]
    diffs = []
    cols = expected.columns
    paired = {c for p in tol.complex_pairs for c in p}
    for i, (er, ar) in enumerate(zip(expected.rows, actual.rows)):
        for re_name, im_name in tol.complex_pairs:
            kr, ki = cols.index(re_name), cols.index(im_name)
            e = complex(er[kr], er[ki])
            a = complex(ar[kr], ar[ki])
            bound = tol.atol + tol.rtol * abs(e) + STORED_RESOLUTION * (abs(e.real) + abs(e.imag))
            if not abs(a - e) <= bound:
                diffs.append(f"row {i} {re_name}+i{im_name}: expected {e:.11e}, got {a:.11e} "
                             f"(|diff| {abs(a - e):.3e} > {bound:.3e})")
        for name, e, a in zip(cols, er, ar):
            if name in paired:
                continue
            numeric = (isinstance(e, (int, float)) and isinstance(a, (int, float))
                       and not isinstance(e, bool) and not isinstance(a, bool))
            if name in tol.exact or not numeric:
                if e != a:
                    diffs.append(f"row {i} {name}: expected {e!r}, got {a!r}")
                continue
            e, a = float(e), float(a)
            if not (math.isfinite(e) and math.isfinite(a)):
                if not (e == a or (math.isnan(e) and math.isnan(a))):
                    diffs.append(f"row {i} {name}: expected {e!r}, got {a!r}")
                continue
            bound = tol.atol + (tol.rtol + STORED_RESOLUTION) * abs(e)
            if abs(a - e) > bound:
                diffs.append(f"row {i} {name}: expected {e:.11e}, got {a:.11e} "
                             f"(|diff| {abs(a - e):.3e} > {bound:.3e})")
    return diffs


@dataclass(frozen=True)
class GoldenCase:
    """One pinned value set.

    ``compute`` runs the main code path; ``oracle`` describes the independent
    computation whose output is stored. ``config`` names the run
    configuration for cases driven through the command line.
    """

    id: str
    description: str
    oracle: str
    compute: Callable[[], GoldenTable]
    tolerance: Tolerance = field(default_factory=Tolerance)
    config: str | None = None

    @property
    def filename(self) -> str:
        return f"{self.id}.csv"


def _write_atomic(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class Corpus:
    """A golden directory and its manifest."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST

    def manifest(self) -> dict:
        if not self.manifest_path.exists():
            return {}
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def entry(self, case_id: str) -> dict:
        m = self.manifest()
        if case_id not in m:
            raise KeyError(f"no golden entry for {case_id!r}")
        return m[case_id]

    def data(self, case_id: str) -> bytes:
        return (self.root / self.entry(case_id)["file"]).read_bytes()

    def table(self, case_id: str) -> GoldenTable:
        return GoldenTable.from_csv(self.data(case_id))

    def verify_digest(self, case_id: str) -> bool:
        return digest(self.data(case_id)) == self.entry(case_id)["digest"]

    def store(self, case: GoldenCase, table: GoldenTable) -> str:
        self.root.mkdir(parents=True, exist_ok=True)
        data = table.to_csv()
        _write_atomic(self.root / case.filename, data)
        m = self.manifest()
        m[case.id] = {
            "file": case.filename,
            "digest": digest(data),
            "description": case.description,
            "oracle": case.oracle,
            "tolerance": case.tolerance.to_dict(),
            "config": case.config,
        }
        text = json.dumps(m, indent=2, sort_keys=True) + "\n"
        _write_atomic(self.manifest_path, text.encode("utf-8"))
        return m[case.id]["digest"]


def check_golden(case: GoldenCase, corpus: Corpus) -> list[str]:
    """Differences between the stored oracle table and the main path."""
    return compare(corpus.table(case.id), case.compute(), case.tolerance)


def regenerate_golden(case: GoldenCase, oracle: Callable[[], GoldenTable], corpus: Corpus) -> str:
    """Recompute ``case`` from its oracle, cross-check the main path, store it.

    Returns the new digest. Raises :class:`GoldenMismatch` (and writes
    nothing) when the main path disagrees with the oracle.
    """
    expected = oracle()
    diffs = compare(expected, case.compute(), case.tolerance)
    if diffs:
        raise GoldenMismatch(case.id, diffs)
    return corpus.store(case, expected)
