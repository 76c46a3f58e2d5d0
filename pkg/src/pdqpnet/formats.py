"""Instance serialization: a canonical JSON format and a QPS-subset reader.

JSON schema (keys always emitted in this order)::

    {"format": "pdqp-instance", "version": 1, "name": str, "n": int, "m": int,
     "Q": {"row_offsets": [int], "col_indices": [int], "values": [float]},
     "c": [float],
     "A": {"row_offsets": [...], "col_indices": [...], "values": [...]},
     "b": [float], "l": [float|"-inf"], "u": [float|"inf"],
     "row_kind": "GGE..."}

``row_kind`` holds one character per row: ``G`` for ``a_i'x >= b_i`` and
``E`` for equality. Infinite bounds are written as the strings ``"inf"`` and
``"-inf"``. Floats use the shortest repr that round-trips exactly.
"""

from __future__ import annotations

import json
from collections import OrderedDict

import numpy as np

from .instance import QpInstance, RowKind
from .sparse import SparseMatrix

FORMAT_TAG = "pdqp-instance"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed instance document."""


# ---------------------------------------------------------------------------
# JSON


def _enc_float(v: float):
    if v == np.inf:
        return "inf"
    if v == -np.inf:
        return "-inf"
    return float(v)


def _dec_float(v) -> float:
    if isinstance(v, str):
        if v == "inf":
            return np.inf
        if v == "-inf":
            return -np.inf
        raise FormatError(f"unexpected string {v!r} where a number was expected")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FormatError(f"expected a number, got {v!r}")
    return float(v)


def _enc_matrix(M: SparseMatrix):
    return OrderedDict([
        ("row_offsets", [int(v) for v in M.row_offsets]),
        ("col_indices", [int(v) for v in M.col_indices]),
        ("values", [float(v) for v in M.values]),
    ])


def _dec_matrix(d, nrows, ncols) -> SparseMatrix:
    try:
        return SparseMatrix(nrows, ncols, d["row_offsets"], d["col_indices"],
                            [_dec_float(v) for v in d["values"]])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad sparse matrix block: {exc}") from exc


def instance_to_dict(inst: QpInstance) -> OrderedDict:
    return OrderedDict([
        ("format", FORMAT_TAG),
        ("version", FORMAT_VERSION),
        ("name", inst.name),
        ("n", inst.n),
        ("m", inst.m),
        ("Q", _enc_matrix(inst.Q)),
        ("c", [float(v) for v in inst.c]),
        ("A", _enc_matrix(inst.A)),
        ("b", [float(v) for v in inst.b]),
        ("l", [_enc_float(v) for v in inst.l]),
        ("u", [_enc_float(v) for v in inst.u]),
        ("row_kind", "".join(k.value for k in inst.row_kind)),
    ])


def instance_from_dict(d) -> QpInstance:
    if not isinstance(d, dict):
        raise FormatError("instance document must be a JSON object")
    if d.get("format") != FORMAT_TAG:
        raise FormatError(f"format tag must be {FORMAT_TAG!r}")
    if d.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported version {d.get('version')!r}")
    try:
        n, m = int(d["n"]), int(d["m"])
        kinds = d["row_kind"]
        if not isinstance(kinds, str) or any(ch not in "GE" for ch in kinds):
            raise FormatError("row_kind must be a string over {G, E}")
        return QpInstance(
            Q=_dec_matrix(d["Q"], n, n),
            c=[_dec_float(v) for v in d["c"]],
            A=_dec_matrix(d["A"], m, n),
            b=[_dec_float(v) for v in d["b"]],
            l=[_dec_float(v) for v in d["l"]],
            u=[_dec_float(v) for v in d["u"]],
            row_kind=tuple(RowKind(ch) for ch in kinds),
            name=str(d.get("name", "")),
        )
    except KeyError as exc:
        raise FormatError(f"missing field {exc}") from exc
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write_json(inst: QpInstance) -> bytes:
    return (json.dumps(instance_to_dict(inst), separators=(",", ":"), allow_nan=False) + "\n").encode()


def read_json(data) -> QpInstance:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    return instance_from_dict(doc)


def save_instance(inst: QpInstance, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_json(inst))


def load_instance(path) -> QpInstance:
    with open(path, "rb") as fh:
        return read_json(fh.read())


def point_to_dict(point) -> OrderedDict:
    return OrderedDict([("x", [float(v) for v in point.x]), ("y", [float(v) for v in point.y])])


def point_from_dict(d):
    from .instance import PrimalDualPoint
    try:
        return PrimalDualPoint([_dec_float(v) for v in d["x"]], [_dec_float(v) for v in d["y"]])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad point document: {exc}") from exc


def load_point(path):
    with open(path, "rb") as fh:
        try:
            return point_from_dict(json.loads(fh.read().decode()))
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON in {path}: {exc}") from exc


def save_point(point, path) -> None:
    with open(path, "w") as fh:
        json.dump(point_to_dict(point), fh, separators=(",", ":"))
        fh.write("\n")


# ---------------------------------------------------------------------------
# QPS


class QpsParseError(FormatError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "QUADOBJ", "QMATRIX", "ENDATA"}


def parse_qps(text) -> QpInstance:
    """Parse the QPS subset into a :class:`QpInstance`.

    Section headers start in column 1; data lines are indented and split on
    whitespace. ``L`` rows are negated into ``>=`` form. ``QUADOBJ`` lists the
    lower triangle of Q (for ``1/2 x'Qx``) and is mirrored; ``QMATRIX`` lists
    every entry. Unset bounds default to ``0 <= x < inf``; an ``UP`` bound
    below zero on a variable whose lower bound was never set makes it
    ``-inf``, as in the classic MPS convention.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("ascii")

    name = ""
    section = None
    obj_row = None
    row_type = {}
    row_order = []
    col_index = {}
    col_entries = {}  # (row, col) -> value
    obj = {}
    rhs = {}
    lower, upper, lower_set = {}, {}, set()
    quad = {}
    quad_mode = None
    ended = False

    def col_id(lineno, cname, create):
        if cname not in col_index:
            if not create:
                raise QpsParseError(lineno, f"unknown column {cname!r}")
            col_index[cname] = len(col_index)
        return col_index[cname]

    def number(lineno, tok):
        try:
            return float(tok)
        except ValueError:
            raise QpsParseError(lineno, f"expected a number, got {tok!r}") from None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        if ended:
            raise QpsParseError(lineno, "content after ENDATA")
        parts = line.split()
        if not line[0].isspace():
            head = parts[0].upper()
            if head not in _SECTIONS:
                raise QpsParseError(lineno, f"unknown section {parts[0]!r}")
            section = head
            if head in ("QUADOBJ", "QMATRIX"):
                if quad_mode not in (None, head):
                    raise QpsParseError(lineno, "QUADOBJ and QMATRIX cannot both appear")
                quad_mode = head
            if head == "NAME":
                name = " ".join(parts[1:])
            elif head == "ENDATA":
                ended = True
            continue

        if section == "ROWS":
            if len(parts) != 2:
                raise QpsParseError(lineno, "ROWS entry needs a type and a name")
            kind, rname = parts[0].upper(), parts[1]
            if kind not in ("N", "G", "L", "E"):
                raise QpsParseError(lineno, f"unknown row type {parts[0]!r}")
            if rname in row_type:
                raise QpsParseError(lineno, f"duplicate row {rname!r}")
            row_type[rname] = kind
            if kind == "N":
                if obj_row is None:
                    obj_row = rname
            else:
                row_order.append(rname)
        elif section == "COLUMNS":
            if any(p.upper() == "'MARKER'" for p in parts):
                raise QpsParseError(lineno, "integer markers are not supported")
            if len(parts) not in (3, 5):
                raise QpsParseError(lineno, "COLUMNS entry needs a column and 1 or 2 (row, value) pairs")
            j = col_id(lineno, parts[0], create=True)
            for rname, tok in zip(parts[1::2], parts[2::2]):
                if rname not in row_type:
                    raise QpsParseError(lineno, f"unknown row {rname!r}")
                val = number(lineno, tok)
                if rname == obj_row:
                    if j in obj:
                        raise QpsParseError(lineno, f"duplicate objective entry for {parts[0]!r}")
                    obj[j] = val
                elif row_type[rname] == "N":
                    continue
                else:
                    if (rname, j) in col_entries:
                        raise QpsParseError(lineno, f"duplicate entry ({rname!r}, {parts[0]!r})")
                    col_entries[(rname, j)] = val
        elif section == "RHS":
            pairs = parts[1:] if len(parts) % 2 == 1 else parts
            if len(pairs) not in (2, 4):
                raise QpsParseError(lineno, "RHS entry needs 1 or 2 (row, value) pairs")
            for rname, tok in zip(pairs[0::2], pairs[1::2]):
                if rname not in row_type:
                    raise QpsParseError(lineno, f"unknown row {rname!r}")
                if row_type[rname] == "N":
                    continue  # objective constant: not represented
                if rname in rhs:
                    raise QpsParseError(lineno, f"duplicate RHS for row {rname!r}")
                rhs[rname] = number(lineno, tok)
        elif section == "BOUNDS":
            btype = parts[0].upper()
            if btype in ("FR", "MI", "PL"):
                if len(parts) not in (2, 3):
                    raise QpsParseError(lineno, f"{btype} bound takes no value")
                cname = parts[-1]
                val = None
            elif btype in ("LO", "UP", "FX"):
                if len(parts) not in (3, 4):
                    raise QpsParseError(lineno, f"{btype} bound needs a column and a value")
                cname, val = parts[-2], number(lineno, parts[-1])
            else:
                raise QpsParseError(lineno, f"unsupported bound type {parts[0]!r}")
            j = col_id(lineno, cname, create=False)
            if btype == "LO":
                lower[j] = val
                lower_set.add(j)
            elif btype == "UP":
                upper[j] = val
                if val < 0 and j not in lower_set:
                    lower[j] = -np.inf
            elif btype == "FX":
                lower[j] = upper[j] = val
                lower_set.add(j)
            elif btype == "FR":
                lower[j], upper[j] = -np.inf, np.inf
                lower_set.add(j)
            elif btype == "MI":
                lower[j] = -np.inf
                lower_set.add(j)
            else:
                upper[j] = np.inf
        elif section in ("QUADOBJ", "QMATRIX"):
            if len(parts) != 3:
                raise QpsParseError(lineno, f"{section} entry needs two columns and a value")
            i = col_id(lineno, parts[0], create=False)
            j = col_id(lineno, parts[1], create=False)
            val = number(lineno, parts[2])
            if section == "QUADOBJ":
                key = (max(i, j), min(i, j))
                if key in quad:
                    raise QpsParseError(lineno, f"duplicate QUADOBJ entry ({parts[0]!r}, {parts[1]!r})")
                quad[key] = val
            else:
                if (i, j) in quad:
                    raise QpsParseError(lineno, f"duplicate QMATRIX entry ({parts[0]!r}, {parts[1]!r})")
                quad[(i, j)] = val
        elif section == "NAME" or section is None:
            raise QpsParseError(lineno, "data line outside of a section")
        else:
            raise QpsParseError(lineno, f"unexpected data in section {section}")

    n = len(col_index)
    m = len(row_order)
    row_pos = {r: i for i, r in enumerate(row_order)}
    sign = np.array([-1.0 if row_type[r] == "L" else 1.0 for r in row_order])

    rows, cols, vals = [], [], []
    for (rname, j), v in col_entries.items():
        i = row_pos[rname]
        rows.append(i)
        cols.append(j)
        vals.append(sign[i] * v)
    A = SparseMatrix.from_triplets(m, n, rows, cols, vals)
    b = np.array([sign[i] * rhs.get(r, 0.0) for i, r in enumerate(row_order)])
    c = np.zeros(n)
    for j, v in obj.items():
        c[j] = v

    qr, qc, qv = [], [], []
    for (i, j), v in quad.items():
        qr.append(i)
        qc.append(j)
        qv.append(v)
        if quad_mode == "QUADOBJ" and i != j:
            qr.append(j)
            qc.append(i)
            qv.append(v)
    Q = SparseMatrix.from_triplets(n, n, qr, qc, qv)

    l = np.zeros(n)
    u = np.full(n, np.inf)
    for j, v in lower.items():
        l[j] = v
    for j, v in upper.items():
        u[j] = v
    kinds = tuple(RowKind.EQUALITY if row_type[r] == "E" else RowKind.INEQUALITY_GEQ for r in row_order)
    try:
        return QpInstance(Q=Q, c=c, A=A, b=b, l=l, u=u, row_kind=kinds, name=name)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc

