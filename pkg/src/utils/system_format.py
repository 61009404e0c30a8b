"""
System file format - Load, parse and dump `.paf` system definitions

A file is a list of sections with `key = value` lines; `#` starts a comment.

    [chart]
    name = boat
    coords = x, y, psi
    box.x = -2, 2
    param.c = 0.5, 2, nonzero

    [drift]                 one line per coordinate: coord = expression
    [control <name>]        same layout, one section per control field
    [pfaff]                 X1 = expression, X2 = ...   (optional)
    [map]                   forward.<target coord> = ..., inverse.<source coord> = ...
    [system2]               every section after this marker describes the second system
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from src.base.errors import DimensionMismatchError, ParseError, PafError
from src.base.expr import Chart, Expression, Parameter, parse
from src.base.flags import AffineDistribution
from src.base.forms import DiffeoMap, VectorField

logger = logging.getLogger(__name__)

SECTION_RE = re.compile(r'^\[\s*([A-Za-z0-9_]+)(?:\s+([A-Za-z0-9_]+))?\s*\]$')


@dataclass
class _Entry:
    """Raw `key = value` line with its position"""
    key: str
    value: str
    line: int
    column: int


@dataclass
class _Block:
    """Raw sections of one system"""
    chart: List[_Entry] = field(default_factory=list)
    drift: List[_Entry] = field(default_factory=list)
    controls: Dict[str, List[_Entry]] = field(default_factory=dict)
    pfaff: List[_Entry] = field(default_factory=list)
    has_pfaff: bool = False
    chart_line: int = 0
    drift_line: int = 0


@dataclass
class MapSpec:
    """Candidate map: forward in source coordinates, inverse in target coordinates"""
    forward: List[Expression]
    inverse: List[Expression]


@dataclass
class SystemSpec:
    """
    Parsed system file

    Args:
        name: System name (chart name unless given)
        chart: Chart declaration
        drift: Drift components a0
        controls: Control name -> components
        pfaff: Optional Pfaff coordinates X1..Xm
        map: Optional candidate map to system2
        system2: Optional second system for equivalence mode
    """
    name: str
    chart: Chart
    drift: List[Expression]
    controls: Dict[str, List[Expression]]
    pfaff: Optional[List[Expression]] = None
    map: Optional[MapSpec] = None
    system2: Optional["SystemSpec"] = None
    path: Optional[str] = None

    def distribution(self) -> AffineDistribution:
        return AffineDistribution(
            self.chart,
            VectorField(self.chart, tuple(self.drift)),
            tuple(VectorField(self.chart, tuple(c)) for c in self.controls.values())
        )

    def diffeo(self) -> DiffeoMap:
        if self.map is None or self.system2 is None:
            raise PafError(f"System '{self.name}' has no [map] and [system2] sections")
        return DiffeoMap(self.chart, self.system2.chart, tuple(self.map.forward), tuple(self.map.inverse))


def _split_numbers(entry: _Entry, count_min: int, count_max: int) -> List[str]:
    parts = [p.strip() for p in entry.value.split(',')]
    if not count_min <= len(parts) <= count_max:
        raise ParseError(f"'{entry.key}' needs {count_min} to {count_max} comma-separated values",
                         line=entry.line, column=entry.column)
    return parts


def _number(text: str, entry: _Entry) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"Invalid number '{text}' for '{entry.key}'", line=entry.line, column=entry.column)


def _build_chart(block: _Block) -> Chart:
    name = None
    coords: Optional[List[str]] = None
    boxes: Dict[str, Tuple[float, float]] = {}
    params: List[Parameter] = []
    for entry in block.chart:
        if entry.key == 'name':
            name = entry.value
        elif entry.key == 'coords':
            coords = [c.strip() for c in entry.value.split(',') if c.strip()]
        elif entry.key.startswith('box.'):
            low, high = _split_numbers(entry, 2, 2)
            boxes[entry.key[4:]] = (_number(low, entry), _number(high, entry))
        elif entry.key.startswith('param.'):
            parts = _split_numbers(entry, 2, 3)
            nonzero = len(parts) == 3
            if nonzero and parts[2] != 'nonzero':
                raise ParseError(f"Unknown parameter flag '{parts[2]}'", line=entry.line, column=entry.column)
            params.append(Parameter(entry.key[6:], _number(parts[0], entry), _number(parts[1], entry), nonzero))
        else:
            raise ParseError(f"Unknown chart key '{entry.key}'", line=entry.line, column=entry.column)
    if not coords:
        raise ParseError("[chart] needs a 'coords' line", line=block.chart_line or 1, column=1)
    missing = [c for c in coords if c not in boxes]
    if missing:
        raise ParseError(f"[chart] has no box for {missing}", line=block.chart_line or 1, column=1)
    extra = [b for b in boxes if b not in coords]
    if extra:
        raise ParseError(f"[chart] has boxes for unknown coordinates {extra}", line=block.chart_line or 1, column=1)
    try:
        return Chart(name or 'chart', tuple(coords), tuple(boxes[c] for c in coords), tuple(params))
    except ParseError:
        raise
    except PafError as e:
        raise ParseError(str(e), line=block.chart_line or 1, column=1) from e


def _expression(entry: _Entry, chart: Chart) -> Expression:
    try:
        return parse(entry.value, chart)
    except ParseError as e:
        offset = max(e.position, 0)
        raise ParseError(f"{str(e).split(' (position')[0]} in '{entry.key}'",
                         line=entry.line, column=entry.column + offset) from e


def _components(entries: List[_Entry], chart: Chart, what: str) -> List[Expression]:
    values = {}
    for entry in entries:
        if entry.key not in chart.variables:
            raise DimensionMismatchError(f"{what}: line {entry.line}: '{entry.key}' is not a coordinate of '{chart.name}'")
        values[entry.key] = _expression(entry, chart)
    if len(values) != chart.dim:
        missing = [v for v in chart.variables if v not in values]
        raise DimensionMismatchError(f"{what} needs {chart.dim} components, missing {missing}")
    return [values[v] for v in chart.variables]


def _tokenize(text: str) -> Tuple[List[_Block], List[_Entry], bool]:
    blocks = [_Block()]
    map_entries: List[_Entry] = []
    has_map = False
    current: Optional[List[_Entry]] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith('['):
            match = SECTION_RE.match(stripped)
            if not match:
                raise ParseError(f"Malformed section header '{stripped}'", line=number, column=1)
            kind, label = match.group(1), match.group(2)
            block = blocks[-1]
            if kind == 'system2':
                if len(blocks) > 1:
                    raise ParseError("Only one [system2] marker is allowed", line=number, column=1)
                blocks.append(_Block())
                current = None
            elif kind == 'chart':
                current = block.chart
                block.chart_line = number
            elif kind == 'drift':
                current = block.drift
                block.drift_line = number
            elif kind == 'control':
                name = label or f"u{len(block.controls) + 1}"
                if name in block.controls:
                    raise ParseError(f"Duplicate control '{name}'", line=number, column=1)
                block.controls[name] = []
                current = block.controls[name]
            elif kind == 'pfaff':
                current = block.pfaff
                block.has_pfaff = True
            elif kind == 'map':
                if len(blocks) > 1:
                    raise ParseError("[map] must come before [system2]", line=number, column=1)
                current = map_entries
                has_map = True
            else:
                raise ParseError(f"Unknown section '[{kind}]'", line=number, column=1)
            continue
        if current is None:
            raise ParseError("Entry outside of a section", line=number, column=1)
        if '=' not in line:
            raise ParseError("Expected 'key = value'", line=number, column=len(line) - len(line.lstrip()) + 1)
        key, value = line.split('=', 1)
        column = len(key) + 2 + (len(value) - len(value.lstrip()))
        current.append(_Entry(key.strip(), value.strip(), number, column))
    return blocks, map_entries, has_map


def _build_system(block: _Block, name: Optional[str]) -> SystemSpec:
    chart = _build_chart(block)
    if not block.drift:
        raise ParseError("Missing [drift] section", line=block.chart_line or 1, column=1)
    if not block.controls:
        raise ParseError("At least one [control] section is required", line=block.drift_line or 1, column=1)
    drift = _components(block.drift, chart, "[drift]")
    controls = {n: _components(entries, chart, f"[control {n}]") for n, entries in block.controls.items()}
    pfaff = None
    if block.has_pfaff:
        ordered = sorted(block.pfaff, key=lambda e: _pfaff_index(e))
        pfaff = [_expression(e, chart) for e in ordered]
    return SystemSpec(name or chart.name, chart, drift, controls, pfaff)


def _pfaff_index(entry: _Entry) -> int:
    match = re.fullmatch(r'X(\d+)', entry.key)
    if not match:
        raise ParseError(f"Pfaff coordinates are named X1, X2, ...; got '{entry.key}'",
                         line=entry.line, column=1)
    return int(match.group(1))


def _build_map(entries: List[_Entry], source: Chart, target: Chart) -> MapSpec:
    forward: Dict[str, Expression] = {}
    inverse: Dict[str, Expression] = {}
    for entry in entries:
        kind, _, coord = entry.key.partition('.')
        if kind == 'forward' and coord in target.variables:
            forward[coord] = _expression(entry, source)
        elif kind == 'inverse' and coord in source.variables:
            inverse[coord] = _expression(entry, target)
        else:
            raise ParseError(f"Unknown map key '{entry.key}'", line=entry.line, column=1)
    if len(forward) != target.dim or len(inverse) != source.dim:
        raise DimensionMismatchError("[map] needs one forward line per target coordinate "
                                     "and one inverse line per source coordinate")
    return MapSpec([forward[v] for v in target.variables], [inverse[v] for v in source.variables])


def parse_system(text: str, name: Optional[str] = None) -> SystemSpec:
    """
    Parse the text of a system file

    Raises:
        ParseError: syntax errors, with line and column
        DimensionMismatchError: component lists of the wrong length
    """
    blocks, map_entries, has_map = _tokenize(text)
    spec = _build_system(blocks[0], name)
    if len(blocks) > 1:
        spec.system2 = _build_system(blocks[1], None)
    if has_map:
        if spec.system2 is None:
            raise ParseError("[map] needs a [system2] section", line=map_entries[0].line if map_entries else 1,
                             column=1)
        spec.map = _build_map(map_entries, spec.chart, spec.system2.chart)
    logger.debug(f"Parsed system '{spec.name}' on a {spec.chart.dim}-chart with {len(spec.controls)} controls")
    return spec


def load_system(path: str) -> SystemSpec:
    """Load and validate a system file"""
    file_path = Path(path)
    text = file_path.read_text(encoding='utf-8')
    spec = parse_system(text, file_path.stem)
    spec.path = str(file_path)
    logger.info(f"Loaded system '{spec.name}' from {path}")
    return spec


def _format_number(value: float) -> str:
    return repr(float(value))


def _dump_block(spec: SystemSpec) -> List[str]:
    chart = spec.chart
    lines = ["[chart]", f"name = {chart.name}", f"coords = {', '.join(chart.variables)}"]
    for var, (low, high) in zip(chart.variables, chart.box):
        lines.append(f"box.{var} = {_format_number(low)}, {_format_number(high)}")
    for p in chart.parameters:
        flag = ", nonzero" if p.nonzero else ""
        lines.append(f"param.{p.name} = {_format_number(p.low)}, {_format_number(p.high)}{flag}")
    lines += ["", "[drift]"]
    lines += [f"{v} = {e}" for v, e in zip(chart.variables, spec.drift)]
    for name, comps in spec.controls.items():
        lines += ["", f"[control {name}]"]
        lines += [f"{v} = {e}" for v, e in zip(chart.variables, comps)]
    if spec.pfaff is not None:
        lines += ["", "[pfaff]"]
        lines += [f"X{i} = {e}" for i, e in enumerate(spec.pfaff, start=1)]
    return lines


def dump_system(spec: SystemSpec) -> str:
    """Render a SystemSpec back to file text; parse_system(dump_system(s)) reproduces s"""
    lines = _dump_block(spec)
    if spec.map is not None and spec.system2 is not None:
        lines += ["", "[map]"]
        lines += [f"forward.{v} = {e}" for v, e in zip(spec.system2.chart.variables, spec.map.forward)]
        lines += [f"inverse.{v} = {e}" for v, e in zip(spec.chart.variables, spec.map.inverse)]
    if spec.system2 is not None:
        lines += ["", "[system2]"]
        lines += _dump_block(spec.system2)
    return "\n".join(lines) + "\n"
