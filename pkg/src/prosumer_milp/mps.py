"""Free-format MPS export and import for :class:`MilpModel`.

Numbers are written with ``repr`` so every coefficient and bound survives a
round trip bit for bit.  Integer columns are wrapped in ``MARKER`` lines and
default to bounds [0, 1]; continuous columns default to [0, +inf).  Any bound
that differs from the column default is written explicitly.

Not supported: RANGES, objective constants (RHS on the objective row) and
general integer variables.
"""

from __future__ import annotations

import math
import re

from .milp import BINARY, CONTINUOUS, EQ, GE, LE, MAXIMIZE, MINIMIZE, MilpModel

MAX_NAME = 255
_BAD_CHARS = re.compile(r"[^A-Za-z0-9_().]")
_SENSE_CODE = {LE: "L", GE: "G", EQ: "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}
_SECTIONS = ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA")
_UNSUPPORTED = ("RANGES", "SOS", "QUADOBJ", "QMATRIX", "QSECTION", "QCMATRIX", "INDICATORS",
                "CSECTION")


class MpsError(ValueError):
    """Malformed document; ``line`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class MpsUnsupportedError(MpsError):
    """The document uses an MPS feature this reader does not implement."""


def sanitize_name(name: str) -> str:
    """Keep alphanumerics and ``_().``; replace anything else with ``_``."""
    out = _BAD_CHARS.sub("_", name)[:MAX_NAME]
    return out or "_"


def _unique_names(names, reserved=()):
    seen = set(reserved)
    out = []
    for name in names:
        base = sanitize_name(name)
        cand, n = base, 1
        while cand in seen:
            suffix = f"_{n}"
            cand = base[: MAX_NAME - len(suffix)] + suffix
            n += 1
        seen.add(cand)
        out.append(cand)
    return out


def _num(x: float) -> str:
    return repr(float(x))


def export_mps(model: MilpModel) -> str:
    """Serialise ``model`` as free MPS in model order."""
    c, A, row_lo, row_hi, lb, ub, is_int = model.to_arrays()
    rows = _unique_names([con.name for con in model.constraints])
    obj_name = _unique_names(["OBJ"], reserved=rows)[0]
    cols = _unique_names([v.name for v in model.variables])
    A = A.tocsc()

    out = [f"NAME {sanitize_name(model.name)}",
           "OBJSENSE",
           "    MAX" if model.sense == MAXIMIZE else "    MIN",
           "ROWS",
           f" N  {obj_name}"]
    out += [f" {_SENSE_CODE[con.sense]}  {name}" for con, name in zip(model.constraints, rows)]

    out.append("COLUMNS")
    in_int = False
    n_markers = 0
    for j, name in enumerate(cols):
        if is_int[j] != in_int:
            tag = "'INTORG'" if is_int[j] else "'INTEND'"
            out.append(f"    MARKER{n_markers} 'MARKER' {tag}")
            n_markers += 1
            in_int = bool(is_int[j])
        start, end = A.indptr[j], A.indptr[j + 1]
        entries = [(obj_name, c[j])] if c[j] != 0.0 or start == end else []
        entries += [(rows[i], a) for i, a in zip(A.indices[start:end], A.data[start:end])]
        out += [f"    {name} {rname} {_num(a)}" for rname, a in entries]
    if in_int:
        out.append(f"    MARKER{n_markers} 'MARKER' 'INTEND'")

    out.append("RHS")
    for con, name in zip(model.constraints, rows):
        if con.rhs != 0.0:
            out.append(f"    RHS {name} {_num(con.rhs)}")

    out.append("BOUNDS")
    for j, name in enumerate(cols):
        lo, hi = lb[j], ub[j]
        dlo, dhi = (0.0, 1.0) if is_int[j] else (0.0, math.inf)
        if (lo, hi) == (dlo, dhi):
            continue
        if lo == hi:
            out.append(f" FX BND {name} {_num(lo)}")
        elif lo == -math.inf and hi == math.inf:
            out.append(f" FR BND {name}")
        else:
            if lo == -math.inf:
                out.append(f" MI BND {name}")
            elif lo != dlo:
                out.append(f" LO BND {name} {_num(lo)}")
            if hi == math.inf:
                out.append(f" PL BND {name}")
            elif hi != dhi:
                out.append(f" UP BND {name} {_num(hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _float(tok: str, line: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise MpsError(f"expected a number, got {tok!r}", line) from None
    if math.isnan(v):
        raise MpsError("NaN is not allowed", line)
    return v


def import_mps(text: str) -> MilpModel:
    """Parse free MPS written by :func:`export_mps` (or any compatible subset)."""
    lines = text.splitlines()
    if not any(ln.strip() and not ln.lstrip().startswith("*") for ln in lines):
        raise MpsError("empty document")

    name = "model"
    sense = MINIMIZE
    obj_row = None
    row_order: list[str] = []
    row_sense: dict[str, str] = {}
    rhs: dict[str, float] = {}
    col_order: list[str] = []
    col_int: dict[str, bool] = {}
    col_obj: dict[str, float] = {}
    entries: dict[str, list[tuple[str, float]]] = {}
    bounds: dict[str, list[float]] = {}
    section = None
    in_int = False
    ended = False

    for ln_no, raw in enumerate(lines, start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        if ended:
            raise MpsError("content after ENDATA", ln_no)
        tok = raw.split()
        head = tok[0].upper()
        if not raw[0].isspace():
            if head in _UNSUPPORTED:
                raise MpsUnsupportedError(f"unsupported section {tok[0]}", ln_no)
            if head not in _SECTIONS:
                raise MpsError(f"unknown section {tok[0]!r}", ln_no)
            section = head
            if head == "NAME":
                name = tok[1] if len(tok) > 1 else name
            elif head == "OBJSENSE" and len(tok) > 1:
                sense = _parse_sense(tok[1], ln_no)
            elif head == "ENDATA":
                ended = True
            continue

        if section == "OBJSENSE":
            sense = _parse_sense(tok[0], ln_no)
        elif section == "ROWS":
            if len(tok) != 2:
                raise MpsError("ROWS entries need a type and a name", ln_no)
            code, rname = tok[0].upper(), tok[1]
            if rname in row_sense or rname == obj_row:
                raise MpsError(f"duplicate row {rname!r}", ln_no)
            if code == "N":
                if obj_row is not None:
                    raise MpsUnsupportedError("more than one objective row", ln_no)
                obj_row = rname
            elif code in _CODE_SENSE:
                row_order.append(rname)
                row_sense[rname] = _CODE_SENSE[code]
            else:
                raise MpsError(f"unknown row type {tok[0]!r}", ln_no)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'\"").upper() == "MARKER":
                kind = tok[2].strip("'\"").upper()
                if kind not in ("INTORG", "INTEND"):
                    raise MpsError(f"unknown marker {tok[2]!r}", ln_no)
                in_int = kind == "INTORG"
                continue
            if len(tok) not in (3, 5):
                raise MpsError("COLUMNS entries need a column and (row, value) pairs", ln_no)
            cname = tok[0]
            if cname not in entries:
                col_order.append(cname)
                col_int[cname] = in_int
                entries[cname] = []
            elif col_order[-1] != cname:
                raise MpsError(f"column {cname!r} is not contiguous", ln_no)
            for rname, val in zip(tok[1::2], tok[2::2]):
                v = _float(val, ln_no)
                if rname == obj_row:
                    col_obj[cname] = col_obj.get(cname, 0.0) + v
                elif rname in row_sense:
                    entries[cname].append((rname, v))
                else:
                    raise MpsError(f"unknown row {rname!r}", ln_no)
        elif section == "RHS":
            if len(tok) not in (3, 5):
                raise MpsError("RHS entries need a set name and (row, value) pairs", ln_no)
            for rname, val in zip(tok[1::2], tok[2::2]):
                if rname == obj_row:
                    raise MpsUnsupportedError("objective constants are not supported", ln_no)
                if rname not in row_sense:
                    raise MpsError(f"unknown row {rname!r}", ln_no)
                rhs[rname] = _float(val, ln_no)
        elif section == "BOUNDS":
            _parse_bound(tok, ln_no, col_int, bounds)
        else:
            raise MpsError("data line outside a section", ln_no)

    if not ended:
        raise MpsError("missing ENDATA", len(lines))
    if obj_row is None:
        raise MpsError("no objective (N) row")

    model = MilpModel(sense=sense, name=name)
    for cname in col_order:
        integral = col_int[cname]
        lo, hi = bounds.get(cname, (0.0, 1.0 if integral else math.inf))
        model.add_variable(cname, lo, hi, BINARY if integral else CONTINUOUS,
                           obj=col_obj.get(cname, 0.0))
    terms: dict[str, list[tuple[int, float]]] = {r: [] for r in row_order}
    for j, cname in enumerate(col_order):
        for rname, v in entries[cname]:
            terms[rname].append((j, v))
    for rname in row_order:
        model.add_constraint(rname, terms[rname], row_sense[rname], rhs.get(rname, 0.0))
    return model


def _parse_sense(tok: str, line: int) -> str:
    t = tok.upper()
    if t in ("MAX", "MAXIMIZE"):
        return MAXIMIZE
    if t in ("MIN", "MINIMIZE"):
        return MINIMIZE
    raise MpsError(f"unknown objective sense {tok!r}", line)


def _parse_bound(tok, line, col_int, bounds):
    kind = tok[0].upper()
    if len(tok) < 3:
        raise MpsError("BOUNDS entries need a type, a set name and a column", line)
    cname = tok[2]
    if cname not in col_int:
        raise MpsError(f"bound on unknown column {cname!r}", line)
    lo, hi = bounds.setdefault(cname, [0.0, 1.0 if col_int[cname] else math.inf])
    needs_value = kind in ("LO", "UP", "FX")
    if needs_value and len(tok) != 4:
        raise MpsError(f"{kind} bound needs a value", line)
    if kind == "LO":
        lo = _float(tok[3], line)
    elif kind == "UP":
        hi = _float(tok[3], line)
    elif kind == "FX":
        lo = hi = _float(tok[3], line)
    elif kind == "FR":
        lo, hi = -math.inf, math.inf
    elif kind == "MI":
        lo = -math.inf
    elif kind == "PL":
        hi = math.inf
    elif kind == "BV":
        if not col_int[cname]:
            raise MpsError(f"BV bound on continuous column {cname!r}", line)
        lo, hi = 0.0, 1.0
    elif kind in ("LI", "UI", "SC"):
        raise MpsUnsupportedError(f"bound type {kind} is not supported", line)
    else:
        raise MpsError(f"unknown bound type {tok[0]!r}", line)
    bounds[cname] = [lo, hi]
