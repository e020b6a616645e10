"""JSON partition and certificate files.

Partition file::

    {
      "format": "pwalyap-partition", "version": 1,
      "dimension": 2,
      "continuous_dynamics": true,
      "metadata": {"name": "...", "source": "...", "sampling_time": 0.01},
      "vertices": [[0.0, 0.0], [1.0, 1.0], ...],
      "cells": [{"id": 0, "vertices": [0, 1, 2],
                 "A": [[...], [...]], "a": [0.0, 0.0]}, ...]
    }

Vertices are referenced by index so shared vertices are explicit.  Floats
are written with ``repr`` precision, so a save/load round trip is exact.

Certificate file::

    {
      "format": "pwalyap-certificate", "version": 1,
      "status": "Valid", "strategy": "vector-field",
      "config": {"eps1": ..., "eps2": ..., "zero_tolerance": ..., ...},
      "pieces": [{"cell": 0, "p": [...], "q": 0.0, "tau": 0.0}, ...],
      "records": [{"iteration": 0, "cells": 4, ...}, ...]
    }
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict
from json.scanner import py_make_scanner
from pathlib import Path

import numpy as np

from .errors import FormatError
from .lp import SearchConfig
from .model import AffineLaw, Cell, LyapunovCandidate, Partition, VertexStore

PARTITION_FORMAT = "pwalyap-partition"
CERTIFICATE_FORMAT = "pwalyap-certificate"
VERSION = 1


class _TrackingDecoder(json.JSONDecoder):
    """JSON decoder that remembers where each object and array started."""

    def __init__(self):
        super().__init__()
        self.positions: dict[int, int] = {}
        parse_object, parse_array = self.parse_object, self.parse_array

        def track_object(state, *args):
            obj, end = parse_object(state, *args)
            self.positions[id(obj)] = state[1] - 1
            return obj, end

        def track_array(state, *args):
            arr, end = parse_array(state, *args)
            self.positions[id(arr)] = state[1] - 1
            return arr, end

        self.parse_object = track_object
        self.parse_array = track_array
        self.scan_once = py_make_scanner(self)


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source
        decoder = _TrackingDecoder()
        try:
            self.doc, end = decoder.raw_decode(text, _skip_ws(text, 0))
        except json.JSONDecodeError as exc:
            raise FormatError("%s:%d:%d: invalid JSON: %s"
                              % (source, exc.lineno, exc.colno, exc.msg)) from None
        if text[end:].strip():
            line = text.count("\n", 0, end) + 1
            raise FormatError("%s:%d: trailing data after the JSON document" % (source, line))
        self.positions = decoder.positions

    def fail(self, node, path: str, message: str):
        pos = self.positions.get(id(node))
        where = "%s:%d" % (self.source, self.text.count("\n", 0, pos) + 1) if pos is not None \
            else self.source
        raise FormatError("%s: %s: %s" % (where, path or "<root>", message))

    def field(self, obj, key, path, kinds, required=True, default=None):
        if not isinstance(obj, dict):
            self.fail(obj, path, "expected an object")
        if key not in obj:
            if required:
                self.fail(obj, path, "missing field %r" % key)
            return default
        value = obj[key]
        if not _is(value, kinds):
            self.fail(value if isinstance(value, (dict, list)) else obj, _join(path, key),
                      "expected %s, got %s" % (kinds, type(value).__name__))
        return value

    def vector(self, value, path, length=None, container=None):
        if not isinstance(value, list) or not all(_is(x, "number") for x in value):
            self.fail(value if isinstance(value, list) else container, path,
                      "expected a list of finite numbers")
        if length is not None and len(value) != length:
            self.fail(value, path, "expected %d entries, got %d" % (length, len(value)))
        return np.array(value, dtype=float)

    def matrix(self, value, path, n, container=None):
        if not isinstance(value, list) or len(value) != n:
            self.fail(value if isinstance(value, list) else container, path,
                      "expected %d rows" % n)
        return np.array([self.vector(row, "%s[%d]" % (path, i), n, value)
                         for i, row in enumerate(value)]).reshape(n, n)


def _skip_ws(text, i):
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def _join(path, key):
    return "%s.%s" % (path, key) if path else str(key)


def _is(value, kinds):
    if kinds == "number":
        return (isinstance(value, (int, float)) and not isinstance(value, bool)
                and math.isfinite(value))
    if kinds == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kinds == "string":
        return isinstance(value, str)
    if kinds == "boolean":
        return isinstance(value, bool)
    if kinds == "list":
        return isinstance(value, list)
    if kinds == "object":
        return isinstance(value, dict)
    raise ValueError(kinds)


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError("%s: cannot read: %s" % (path, exc.strerror or exc)) from None
    except UnicodeDecodeError:
        raise FormatError("%s: not UTF-8 text" % path) from None


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, _default_mode(path))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default_mode(path: Path) -> int:
    """Keep an existing file's mode; otherwise what ``open`` would have used."""
    try:
        return path.stat().st_mode & 0o777
    except FileNotFoundError:
        umask = os.umask(0)
        os.umask(umask)
        return 0o666 & ~umask


def _floats(x):
    return [float(v) for v in np.asarray(x, dtype=float).reshape(-1)]


def _check_metadata(metadata):
    """Metadata is stored verbatim, so it must already be plain JSON."""
    try:
        json.dumps(metadata, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise FormatError("metadata is not JSON-serialisable: %s" % exc) from None


# partitions

def partition_to_dict(partition: Partition) -> dict:
    _check_metadata(partition.metadata)
    return {
        "format": PARTITION_FORMAT,
        "version": VERSION,
        "dimension": partition.dim,
        "continuous_dynamics": bool(partition.continuous_dynamics),
        "metadata": dict(partition.metadata),
        "vertices": [_floats(v) for v in partition.vertices.array],
        "cells": [{"id": c.id, "vertices": list(c.vertex_ids),
                   "A": [_floats(row) for row in c.law.A], "a": _floats(c.law.a)}
                  for c in partition.cells],
    }


def dumps_partition(partition: Partition) -> str:
    return _dump(partition_to_dict(partition))


def save_partition(partition: Partition, path) -> None:
    atomic_write_text(path, dumps_partition(partition))


def loads_partition(text: str, source: str = "<string>") -> Partition:
    """Parse a partition document.

    Only the file structure is checked here; run
    :func:`pwalyap.model.validate_partition` for geometric well-formedness.
    """
    r = _Reader(text, source)
    doc = r.doc
    if not isinstance(doc, dict):
        r.fail(doc, "", "expected a JSON object")
    fmt = r.field(doc, "format", "", "string", required=False, default=PARTITION_FORMAT)
    if fmt != PARTITION_FORMAT:
        r.fail(doc, "format", "expected %r, got %r" % (PARTITION_FORMAT, fmt))
    version = r.field(doc, "version", "", "integer", required=False, default=VERSION)
    if version != VERSION:
        r.fail(doc, "version", "unsupported version %r" % version)
    vertices = r.field(doc, "vertices", "", "list")
    if not vertices:
        r.fail(vertices, "vertices", "no vertices")
    n = r.field(doc, "dimension", "", "integer", required=False, default=None)
    if n is None:
        n = len(vertices[0]) if isinstance(vertices[0], list) else 0
    if n < 1:
        r.fail(doc, "dimension", "dimension must be at least 1")
    coords = [r.vector(v, "vertices[%d]" % i, n, vertices) for i, v in enumerate(vertices)]

    store = VertexStore(n)
    remap = [store.add(x) for x in coords]
    cells_doc = r.field(doc, "cells", "", "list")
    cells, seen = [], set()
    for k, cd in enumerate(cells_doc):
        path = "cells[%d]" % k
        if not isinstance(cd, dict):
            r.fail(cd if isinstance(cd, list) else cells_doc, path, "expected an object")
        cid = r.field(cd, "id", path, "integer", required=False, default=k)
        if cid in seen:
            r.fail(cd, _join(path, "id"), "duplicate cell id %d" % cid)
        seen.add(cid)
        idx = r.field(cd, "vertices", path, "list")
        for j, i in enumerate(idx):
            if not _is(i, "integer") or not 0 <= i < len(coords):
                r.fail(idx, "%s.vertices[%d]" % (path, j),
                       "vertex index %r out of range 0..%d" % (i, len(coords) - 1))
        if len(set(remap[i] for i in idx)) != len(idx):
            r.fail(idx, _join(path, "vertices"), "repeated vertex")
        A = r.matrix(r.field(cd, "A", path, "list"), _join(path, "A"), n, cd)
        a_doc = r.field(cd, "a", path, "list", required=False, default=None)
        a = np.zeros(n) if a_doc is None else r.vector(a_doc, _join(path, "a"), n, cd)
        cells.append(Cell(cid, tuple(remap[i] for i in idx), AffineLaw(A, a)))
    continuous = r.field(doc, "continuous_dynamics", "", "boolean", required=False, default=True)
    metadata = r.field(doc, "metadata", "", "object", required=False, default={})
    return Partition(store, cells, continuous, metadata)


def load_partition(path) -> Partition:
    return loads_partition(_read_text(path), str(path))


# certificates

def certificate_to_dict(candidate: LyapunovCandidate, config: SearchConfig | None = None,
                        strategy: str = "", status: str = "", records=()) -> dict:
    config = config or SearchConfig()
    return {
        "format": CERTIFICATE_FORMAT,
        "version": VERSION,
        "status": status,
        "strategy": strategy,
        "config": asdict(config),
        "pieces": [{"cell": int(cid), "p": _floats(p), "q": float(q), "tau": float(t)}
                   for cid, p, q, t in zip(candidate.cell_ids, candidate.p, candidate.q,
                                           candidate.tau)],
        "records": [asdict(rec) if not isinstance(rec, dict) else rec for rec in records],
    }


def save_certificate(path, candidate: LyapunovCandidate, config: SearchConfig | None = None,
                     strategy: str = "", status: str = "", records=()) -> None:
    atomic_write_text(path, _dump(certificate_to_dict(candidate, config, strategy, status,
                                                       records)))


def loads_certificate(text: str, source: str = "<string>",
                      partition: Partition | None = None) -> tuple[LyapunovCandidate, dict]:
    """Parse a certificate; returns the candidate and the remaining header fields.

    With ``partition`` given, every piece must name one of its cells and
    every cell must have a piece.
    """
    r = _Reader(text, source)
    doc = r.doc
    if not isinstance(doc, dict):
        r.fail(doc, "", "expected a JSON object")
    fmt = r.field(doc, "format", "", "string", required=False, default=CERTIFICATE_FORMAT)
    if fmt != CERTIFICATE_FORMAT:
        r.fail(doc, "format", "expected %r, got %r" % (CERTIFICATE_FORMAT, fmt))
    pieces = r.field(doc, "pieces", "", "list")
    if not pieces:
        r.fail(pieces, "pieces", "no pieces")
    ids, P, q, tau = [], [], [], []
    n = None
    for k, pd in enumerate(pieces):
        path = "pieces[%d]" % k
        cid = r.field(pd, "cell", path, "integer")
        p_doc = r.field(pd, "p", path, "list")
        n = len(p_doc) if n is None else n
        P.append(r.vector(p_doc, _join(path, "p"), n, pd))
        q.append(float(r.field(pd, "q", path, "number", required=False, default=0.0)))
        tau.append(float(r.field(pd, "tau", path, "number", required=False, default=0.0)))
        if cid in ids:
            r.fail(pd, _join(path, "cell"), "duplicate cell id %d" % cid)
        ids.append(cid)
        if partition is not None:
            if cid not in partition._by_id:
                r.fail(pd, _join(path, "cell"), "cell id %d is not in the partition" % cid)
            if n != partition.dim:
                r.fail(p_doc, _join(path, "p"), "dimension %d does not match the partition's %d"
                       % (n, partition.dim))
    if partition is not None:
        missing = sorted(set(partition.cell_ids) - set(ids))
        if missing:
            r.fail(pieces, "pieces", "no piece for cell(s) %s" % missing[:10])
    config_doc = r.field(doc, "config", "", "object", required=False, default={})
    header = {
        "status": r.field(doc, "status", "", "string", required=False, default=""),
        "strategy": r.field(doc, "strategy", "", "string", required=False, default=""),
        "config": dict(config_doc),
        "records": r.field(doc, "records", "", "list", required=False, default=[]),
    }
    cand = LyapunovCandidate(ids, np.array(P).reshape(len(ids), n), np.array(q), np.array(tau))
    return cand, header


def load_certificate(path, partition: Partition | None = None):
    return loads_certificate(_read_text(path), str(path), partition)


def config_from_header(header: dict) -> SearchConfig:
    fields = {k: v for k, v in header.get("config", {}).items()
              if k in SearchConfig.__dataclass_fields__}
    try:
        return SearchConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise FormatError("certificate config: %s" % exc) from None


def _dump(doc: dict) -> str:
    # one vertex / cell per line keeps files diffable and error lines useful
    lines = ["{"]
    items = list(doc.items())
    for i, (key, value) in enumerate(items):
        comma = "," if i < len(items) - 1 else ""
        if isinstance(value, list) and value and key in ("vertices", "cells", "pieces", "records"):
            lines.append("  %s: [" % json.dumps(key))
            for j, item in enumerate(value):
                tail = "," if j < len(value) - 1 else ""
                lines.append("    %s%s" % (json.dumps(item, allow_nan=False), tail))
            lines.append("  ]%s" % comma)
        else:
            lines.append("  %s: %s%s" % (json.dumps(key), json.dumps(value, allow_nan=False), comma))
    lines.append("}")
    return "\n".join(lines) + "\n"
