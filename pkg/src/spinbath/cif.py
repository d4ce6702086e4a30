"""Minimal CIF reader covering the crystallographic subset we need.

Handles one data block: cell parameters with "(u)" uncertainty suffixes,
symmetry operations given under either common tag spelling, and the atom
site loop. Symmetry constants like 2/3 are parsed as exact rationals so
special positions dedup cleanly. Anything structurally broken raises
ParseError with a line number; parseable files that describe impossible
crystals raise ValidationError.
"""
from __future__ import annotations

import math
import re
from fractions import Fraction

from .crystal import CrystalCell, Site
from .errors import ParseError, ValidationError

_SYMOP_TAGS = ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz")
_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?:\(\d+\))?$")
_TERM_RE = re.compile(r"[+-]?[^+-]+")
_COEF_VAR_RE = re.compile(r"^(\d+(?:/\d+)?|\d*\.\d+)\*?([xyz])$")
_TOKEN_RE = re.compile(r"'([^']*)'|\"([^\"]*)\"|(\S+)")
_DEDUP_TOL = 1e-3


def _strip_comment(line: str) -> str:
    # naive but safe: fixtures never put # inside quoted values
    out = []
    quote = None
    for ch in line:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            out.append(ch)
        elif ch == "#":
            break
        else:
            out.append(ch)
    return "".join(out).rstrip()


def _tokens(line: str) -> list[str]:
    vals = []
    for m in _TOKEN_RE.finditer(line):
        vals.append(next(g for g in m.groups() if g is not None))
    return vals


def _parse_number(token: str, lineno: int, what: str) -> float:
    m = _NUMBER_RE.match(token)
    if not m:
        raise ParseError(f"cannot read {what} from {token!r}", line=lineno)
    return float(m.group(1))


def parse_symmetry_op(text: str) -> list[tuple[int, int, int, Fraction]]:
    """One op like "-y,x-y,z+2/3" -> three rows of (cx, cy, cz, shift)."""
    comps = text.replace(" ", "").lower().split(",")
    if len(comps) != 3:
        raise ValueError(f"symmetry op {text!r} does not have 3 components")
    rows = []
    for comp in comps:
        if not comp:
            raise ValueError(f"empty component in symmetry op {text!r}")
        cx = cy = cz = 0
        const = Fraction(0)
        for term in _TERM_RE.findall(comp):
            sign = -1 if term.startswith("-") else 1
            body = term.lstrip("+-")
            if body in ("x", "y", "z"):
                coef = Fraction(sign)
                var = body
            else:
                m = _COEF_VAR_RE.match(body)
                if m:
                    coef = sign * Fraction(m.group(1))
                    var = m.group(2)
                else:
                    const += sign * Fraction(body)
                    continue
            if coef.denominator != 1:
                raise ValueError(f"non-integer coefficient in {text!r}")
            if var == "x":
                cx += int(coef)
            elif var == "y":
                cy += int(coef)
            else:
                cz += int(coef)
        rows.append((cx, cy, cz, const))
    return rows


class _Lines:
    def __init__(self, text: str):
        self.raw = text.splitlines()
        self.pos = 0

    def peek(self) -> str | None:
        return self.raw[self.pos] if self.pos < len(self.raw) else None

    def next(self) -> str:
        line = self.raw[self.pos]
        self.pos += 1
        return line

    @property
    def lineno(self) -> int:
        return self.pos  # 1-based number of the line just consumed


def _skip_text_field(lines: _Lines) -> None:
    # first line already consumed started with ';'
    while (nxt := lines.peek()) is not None:
        lines.next()
        if nxt.startswith(";"):
            return


def _read_loop(lines: _Lines) -> tuple[list[str], list[list[str]], int]:
    headers = []
    start = lines.lineno
    while (nxt := lines.peek()) is not None and _strip_comment(nxt).strip().startswith("_"):
        headers.append(_strip_comment(lines.next()).split()[0].lower())
    if not headers:
        raise ParseError("loop_ without column tags", line=start)
    rows: list[list[str]] = []
    buf: list[str] = []
    while (nxt := lines.peek()) is not None:
        stripped = _strip_comment(nxt).strip()
        if nxt.startswith(";"):
            lines.next()
            _skip_text_field(lines)
            buf.append("")
            continue
        if not stripped:
            lines.next()
            if buf:
                break
            continue
        low = stripped.lower()
        if low.startswith(("_", "loop_", "data_")):
            break
        lines.next()
        buf.extend(_tokens(stripped))
        while len(buf) >= len(headers):
            rows.append(buf[: len(headers)])
            buf = buf[len(headers) :]
    if buf:
        raise ParseError(
            f"loop row has {len(buf)} stray values for {len(headers)} columns",
            line=lines.lineno,
        )
    return headers, rows, start


def _extract_element(sym_or_label: str, lineno: int) -> str:
    m = re.match(r"^([A-Za-z]+)", sym_or_label)
    if not m:
        raise ParseError(f"cannot extract element from {sym_or_label!r}", line=lineno)
    letters = m.group(1)
    return letters[0].upper() + letters[1:].lower()


def _lattice_from_parameters(a, b, c, alpha, beta, gamma):
    al, be, ga = (math.radians(x) for x in (alpha, beta, gamma))
    if min(a, b, c) <= 0:
        raise ValidationError("cell lengths must be positive")
    sin_ga = math.sin(ga)
    if abs(sin_ga) < 1e-9:
        raise ValidationError(f"gamma = {gamma} deg collapses the cell")
    cx = c * math.cos(be)
    cy = c * (math.cos(al) - math.cos(be) * math.cos(ga)) / sin_ga
    cz_sq = c * c - cx * cx - cy * cy
    if cz_sq <= 0:
        raise ValidationError(
            f"angles ({alpha}, {beta}, {gamma}) do not define a positive cell volume"
        )
    return [
        [a, 0.0, 0.0],
        [b * math.cos(ga), b * sin_ga, 0.0],
        [cx, cy, math.sqrt(cz_sq)],
    ]


def _wrap_frac(x: float) -> float:
    w = x % 1.0
    return 0.0 if w > 1.0 - _DEDUP_TOL / 2 else w


def _same_position(p, q) -> bool:
    return all(min(abs(d), 1.0 - abs(d)) < _DEDUP_TOL for d in ((a - b) % 1.0 for a, b in zip(p, q)))


def parse_cif(text: str) -> CrystalCell:
    """Parse CIF text into a CrystalCell with every symmetry image expanded."""
    lines = _Lines(text)
    scalars: dict[str, str] = {}
    scalar_lines: dict[str, int] = {}
    symops: list[str] = []
    symop_line = 0
    atom_headers: list[str] | None = None
    atom_rows: list[list[str]] = []
    atom_line = 0

    while (raw := lines.peek()) is not None:
        if raw.startswith(";"):
            lines.next()
            _skip_text_field(lines)
            continue
        stripped = _strip_comment(raw).strip()
        if not stripped or stripped.lower().startswith(("data_", "#")):
            lines.next()
            continue
        if stripped.lower() == "loop_":
            lines.next()
            headers, rows, start = _read_loop(lines)
            if any(h in _SYMOP_TAGS for h in headers):
                col = next(i for i, h in enumerate(headers) if h in _SYMOP_TAGS)
                symops = [r[col] for r in rows]
                symop_line = start
            elif any(h.startswith("_atom_site_") for h in headers):
                atom_headers, atom_rows, atom_line = headers, rows, start
            continue
        if stripped.startswith("_"):
            lines.next()
            parts = _tokens(stripped)
            tag = parts[0].lower()
            if len(parts) >= 2:
                scalars[tag] = parts[1]
                scalar_lines[tag] = lines.lineno
            else:
                nxt = lines.peek()
                if nxt is not None and nxt.startswith(";"):
                    lines.next()
                    _skip_text_field(lines)
                    scalars[tag] = ""
                elif nxt is not None and not _strip_comment(nxt).strip().lower().startswith(
                    ("_", "loop_", "data_")
                ):
                    lines.next()
                    vals = _tokens(_strip_comment(nxt).strip())
                    scalars[tag] = vals[0] if vals else ""
                    scalar_lines[tag] = lines.lineno
            continue
        lines.next()  # stray token outside any structure; ignore

    cell_vals = []
    for tag in (
        "_cell_length_a",
        "_cell_length_b",
        "_cell_length_c",
        "_cell_angle_alpha",
        "_cell_angle_beta",
        "_cell_angle_gamma",
    ):
        if tag not in scalars:
            raise ParseError(f"missing {tag}", line=len(lines.raw))
        cell_vals.append(_parse_number(scalars[tag], scalar_lines.get(tag, 0), tag))
    lattice = _lattice_from_parameters(*cell_vals)

    if atom_headers is None:
        raise ParseError("no _atom_site_ loop found", line=len(lines.raw))

    def col(name: str) -> int | None:
        return atom_headers.index(name) if name in atom_headers else None

    ix = col("_atom_site_fract_x")
    iy = col("_atom_site_fract_y")
    iz = col("_atom_site_fract_z")
    if ix is None or iy is None or iz is None:
        raise ParseError("atom site loop lacks fractional coordinates", line=atom_line)
    isym = col("_atom_site_type_symbol")
    ilab = col("_atom_site_label")
    if isym is None and ilab is None:
        raise ParseError("atom site loop lacks type_symbol and label", line=atom_line)
    iocc = col("_atom_site_occupancy")

    ops = []
    for op_text in symops or ["x,y,z"]:
        try:
            ops.append(parse_symmetry_op(op_text))
        except ValueError as exc:
            raise ParseError(str(exc), line=symop_line) from None
    if not any(rows == [(1, 0, 0, Fraction(0)), (0, 1, 0, Fraction(0)), (0, 0, 1, Fraction(0))]
               for rows in ops):
        ops.insert(0, parse_symmetry_op("x,y,z"))

    sites: list[Site] = []
    for row in atom_rows:
        element = _extract_element(row[isym] if isym is not None else row[ilab], atom_line)
        base = tuple(
            _parse_number(row[i], atom_line, "fractional coordinate") for i in (ix, iy, iz)
        )
        occ = 1.0
        if iocc is not None and row[iocc] not in (".", "?", ""):
            occ = _parse_number(row[iocc], atom_line, "occupancy")
        for rows3 in ops:
            img = tuple(
                _wrap_frac(cx * base[0] + cy * base[1] + cz * base[2] + float(const))
                for cx, cy, cz, const in rows3
            )
            dup = False
            for s in sites:
                if _same_position(s.frac, img):
                    if s.element == element:
                        dup = True
                        break
                    if s.occupancy + occ > 1.0 + 1e-6:
                        raise ValidationError(
                            f"{element} and {s.element} overlap at {img} "
                            f"with occupancies summing to {s.occupancy + occ:.3f}"
                        )
            if not dup:
                sites.append(Site(element, img, occ))

    if not sites:
        raise ValidationError("CIF defines no atom sites")
    return CrystalCell(lattice=[list(r) for r in lattice], sites=tuple(sites))
