"""
Exterior calculus - Vector fields, k-forms, frames and maps over a chart

Provides:
1. VectorField / KForm values with Expression coefficients
2. Lie bracket, exterior derivative, wedge product and full alternating evaluation
3. Frame / Coframe duality by symbolic matrix inversion
4. DiffeoMap with pushforward, pullback, composition and a numeric inverse check
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import SamplingConfig
from src.base.errors import (
    ChartMismatchError, DimensionMismatchError, MapInconsistencyError,
    SamplingExhaustedError, SingularFrameError
)
from src.base.expr import (
    Chart, Expression, ONE, ZERO, as_expression, differentiate, evaluate_array, parse, substitute
)
from src.base.validation import REFUTED, INCONCLUSIVE, ValidationEngine, hysteresis, point_at

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]
Matrix = List[List[Expression]]


def _same_chart(*objects) -> Chart:
    chart = objects[0].chart
    for obj in objects[1:]:
        if obj.chart != chart:
            raise ChartMismatchError(f"Chart '{obj.chart.name}' does not match chart '{chart.name}'")
    return chart


def _permutation_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting seq (entries distinct)"""
    sign = 1
    items = list(seq)
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign


# --------------------------------------------------------------------------
# Vector fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorField:
    """
    Vector field sum_i components[i] * d/dx^i

    Args:
        chart: Chart the components live on
        components: One Expression per chart variable
    """
    chart: Chart
    components: Tuple[Expression, ...]

    def __post_init__(self):
        comps = tuple(as_expression(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise DimensionMismatchError(
                f"Vector field on '{self.chart.name}' needs {self.chart.dim} components, got {len(comps)}"
            )
        object.__setattr__(self, 'components', comps)

    @classmethod
    def from_strings(cls, chart: Chart, texts: Sequence[str]) -> "VectorField":
        return cls(chart, tuple(parse(t, chart) for t in texts))

    @classmethod
    def coordinate(cls, chart: Chart, i: int) -> "VectorField":
        """d/dx^i (0-based index)"""
        return cls(chart, tuple(ONE if j == i else ZERO for j in range(chart.dim)))

    @classmethod
    def zero(cls, chart: Chart) -> "VectorField":
        return cls(chart, (ZERO,) * chart.dim)

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        return VectorField(self.chart, tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_chart(self, other)
        return VectorField(self.chart, tuple(a - b for a, b in zip(self.components, other.components)))

    def __neg__(self) -> "VectorField":
        return VectorField(self.chart, tuple(-a for a in self.components))

    def scale(self, f) -> "VectorField":
        """Multiply every component by the function f"""
        f = as_expression(f)
        return VectorField(self.chart, tuple(f * a for a in self.components))

    def __call__(self, f) -> Expression:
        """Directional derivative v(f)"""
        f = as_expression(f)
        out = ZERO
        for name, comp in zip(self.chart.variables, self.components):
            if comp.is_zero_exact():
                continue
            out = out + comp * differentiate(f, name)
        return out

    def is_zero_exact(self) -> bool:
        return all(c.is_zero_exact() for c in self.components)

    def values(self, env: Dict[str, np.ndarray]) -> np.ndarray:
        """Component values at sample points: shape (samples, n)"""
        return np.stack([evaluate_array(c, env)[0] for c in self.components], axis=-1)

    def to_strings(self) -> List[str]:
        return [str(c) for c in self.components]

    def __str__(self) -> str:
        terms = [f"({c})*d/d{v}" for v, c in zip(self.chart.variables, self.components) if not c.is_zero_exact()]
        return " + ".join(terms) if terms else "0"


def lie_bracket(v: VectorField, w: VectorField) -> VectorField:
    """
    Lie bracket [v, w]

    Component k is sum_i (v^i dw^k/dx^i - w^i dv^k/dx^i).
    """
    chart = _same_chart(v, w)
    if v == w:
        return VectorField.zero(chart)
    return VectorField(chart, tuple(v(wk) - w(vk) for vk, wk in zip(v.components, w.components)))


def field_matrix(fields: Sequence[VectorField], env: Dict[str, np.ndarray]) -> np.ndarray:
    """Sampled matrix with the fields as columns: shape (samples, n, len(fields))"""
    size = len(next(iter(env.values())))
    if not fields:
        return np.zeros((size, 0, 0))
    return np.stack([f.values(env) for f in fields], axis=-1)


# --------------------------------------------------------------------------
# Differential forms
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KForm:
    """
    Differential k-form sum_I coeffs[I] dx^I over strictly increasing index tuples

    Exact-zero coefficients are dropped on construction.
    """
    chart: Chart
    degree: int
    coeffs: Dict[Index, Expression]

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart.dim:
            raise DimensionMismatchError(
                f"Degree {self.degree} is out of range on the {self.chart.dim}-chart '{self.chart.name}'"
            )
        kept: Dict[Index, Expression] = {}
        for index, c in self.coeffs.items():
            index = tuple(index)
            if len(index) != self.degree or any(a >= b for a, b in zip(index, index[1:])):
                raise DimensionMismatchError(f"Index {index} is not a strictly increasing {self.degree}-tuple")
            if index and (index[0] < 0 or index[-1] >= self.chart.dim):
                raise DimensionMismatchError(f"Index {index} is out of range")
            c = as_expression(c)
            if not c.is_zero_exact():
                kept[index] = c
        object.__setattr__(self, 'coeffs', dict(sorted(kept.items())))

    @classmethod
    def zero(cls, chart: Chart, degree: int) -> "KForm":
        return cls(chart, degree, {})

    @classmethod
    def function(cls, chart: Chart, f) -> "KForm":
        return cls(chart, 0, {(): as_expression(f)})

    @classmethod
    def coordinate(cls, chart: Chart, i: int) -> "KForm":
        """dx^i (0-based index)"""
        return cls(chart, 1, {(i,): ONE})

    @classmethod
    def one_form(cls, chart: Chart, components: Sequence) -> "KForm":
        if len(components) != chart.dim:
            raise DimensionMismatchError(f"1-form on '{chart.name}' needs {chart.dim} components")
        return cls(chart, 1, {(i,): c for i, c in enumerate(components)})

    @classmethod
    def one_form_from_strings(cls, chart: Chart, texts: Sequence[str]) -> "KForm":
        return cls.one_form(chart, [parse(t, chart) for t in texts])

    def coefficient(self, index: Sequence[int]) -> Expression:
        return self.coeffs.get(tuple(index), ZERO)

    def components(self) -> List[Expression]:
        """Coefficients of a 1-form as a dense list"""
        if self.degree != 1:
            raise DimensionMismatchError("Dense components are only defined for 1-forms")
        return [self.coefficient((i,)) for i in range(self.chart.dim)]

    def __add__(self, other: "KForm") -> "KForm":
        _same_chart(self, other)
        if self.degree != other.degree:
            raise DimensionMismatchError(f"Cannot add forms of degree {self.degree} and {other.degree}")
        out = dict(self.coeffs)
        for index, c in other.coeffs.items():
            out[index] = out[index] + c if index in out else c
        return KForm(self.chart, self.degree, out)

    def __neg__(self) -> "KForm":
        return KForm(self.chart, self.degree, {i: -c for i, c in self.coeffs.items()})

    def __sub__(self, other: "KForm") -> "KForm":
        return self + (-other)

    def scale(self, f) -> "KForm":
        f = as_expression(f)
        return KForm(self.chart, self.degree, {i: f * c for i, c in self.coeffs.items()})

    def is_zero_exact(self) -> bool:
        return not self.coeffs

    def __eq__(self, other) -> bool:
        if not isinstance(other, KForm):
            return NotImplemented
        return self.chart == other.chart and self.degree == other.degree and self.coeffs == other.coeffs

    __hash__ = None

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        names = self.chart.variables
        terms = []
        for index, c in self.coeffs.items():
            basis = "∧".join(f"d{names[i]}" for i in index)
            if not basis:
                terms.append(str(c))
            elif c == ONE:
                terms.append(basis)
            else:
                terms.append(f"({c})*{basis}")
        return " + ".join(terms)


def wedge(alpha: KForm, beta: KForm) -> KForm:
    """Wedge product; alpha∧beta = (-1)^(deg alpha * deg beta) beta∧alpha"""
    chart = _same_chart(alpha, beta)
    degree = alpha.degree + beta.degree
    if degree > chart.dim:
        raise DimensionMismatchError(f"Wedge of degrees {alpha.degree} and {beta.degree} exceeds dimension {chart.dim}")
    out: Dict[Index, Expression] = {}
    for i, a in alpha.coeffs.items():
        for j, b in beta.coeffs.items():
            if set(i) & set(j):
                continue
            joined = i + j
            index = tuple(sorted(joined))
            term = a * b if _permutation_sign(joined) > 0 else -(a * b)
            out[index] = out[index] + term if index in out else term
    return KForm(chart, degree, out)


def wedge_power(alpha: KForm, k: int) -> KForm:
    """alpha∧...∧alpha (k factors); the 0th power is the constant 1"""
    out = KForm.function(alpha.chart, ONE)
    for _ in range(k):
        if out.degree + alpha.degree > alpha.chart.dim:
            return KForm.zero(alpha.chart, alpha.chart.dim)
        out = wedge(out, alpha)
    return out


def exterior_derivative(omega: KForm) -> KForm:
    """
    Exterior derivative d(sum_I f_I dx^I) = sum_I sum_j df_I/dx^j dx^j∧dx^I

    Args:
        omega: k-form with k < n

    Returns:
        (k+1)-form
    """
    chart = omega.chart
    if omega.degree >= chart.dim:
        raise DimensionMismatchError(f"Cannot differentiate a {omega.degree}-form on a {chart.dim}-chart")
    out: Dict[Index, Expression] = {}
    for index, c in omega.coeffs.items():
        for j, name in enumerate(chart.variables):
            if j in index:
                continue
            dc = differentiate(c, name)
            if dc.is_zero_exact():
                continue
            before = sum(1 for i in index if i < j)
            new_index = tuple(sorted(index + (j,)))
            term = dc if before % 2 == 0 else -dc
            out[new_index] = out[new_index] + term if new_index in out else term
    return KForm(chart, omega.degree + 1, out)


def gradient(f, chart: Chart) -> KForm:
    return exterior_derivative(KForm.function(chart, f))


def determinant(matrix: Matrix) -> Expression:
    """Symbolic determinant by cofactor expansion along the first row"""
    size = len(matrix)
    memo: Dict[Tuple[Index, Index], Expression] = {}

    def minor(rows: Index, cols: Index) -> Expression:
        if not rows:
            return ONE
        key = (rows, cols)
        if key in memo:
            return memo[key]
        r = rows[0]
        out = ZERO
        for pos, c in enumerate(cols):
            entry = matrix[r][c]
            if entry.is_zero_exact():
                continue
            sub = minor(rows[1:], cols[:pos] + cols[pos + 1:])
            out = out + entry * sub if pos % 2 == 0 else out - entry * sub
        memo[key] = out
        return out

    return minor(tuple(range(size)), tuple(range(size)))


def apply(omega: KForm, fields: Sequence[VectorField]) -> Expression:
    """
    Full alternating evaluation omega(v_1, ..., v_k)

    dx^I(v_1, ..., v_k) is the determinant of the k x k matrix [v_b^{I_a}].
    """
    if len(fields) != omega.degree:
        raise DimensionMismatchError(f"A {omega.degree}-form takes {omega.degree} fields, got {len(fields)}")
    if fields:
        _same_chart(omega, *fields)
    if omega.degree == 0:
        return omega.coefficient(())
    out = ZERO
    for index, c in omega.coeffs.items():
        if omega.degree == 1:
            minor = fields[0].components[index[0]]
        else:
            minor = determinant([[f.components[i] for f in fields] for i in index])
        if not minor.is_zero_exact():
            out = out + c * minor
    return out


def interior(omega: KForm, v: VectorField) -> KForm:
    """Interior product i_v omega"""
    _same_chart(omega, v)
    if omega.degree == 0:
        raise DimensionMismatchError("Interior product of a 0-form")
    out: Dict[Index, Expression] = {}
    for index, c in omega.coeffs.items():
        for pos, i in enumerate(index):
            comp = v.components[i]
            if comp.is_zero_exact():
                continue
            rest = index[:pos] + index[pos + 1:]
            term = c * comp if pos % 2 == 0 else -(c * comp)
            out[rest] = out[rest] + term if rest in out else term
    return KForm(omega.chart, omega.degree - 1, out)


# --------------------------------------------------------------------------
# Frames and coframes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """n vector fields spanning the tangent space at every sample"""
    chart: Chart
    fields: Tuple[VectorField, ...]

    def __post_init__(self):
        fields = tuple(self.fields)
        if len(fields) != self.chart.dim:
            raise DimensionMismatchError(f"A frame on '{self.chart.name}' needs {self.chart.dim} fields")
        for f in fields:
            if f.chart != self.chart:
                raise ChartMismatchError(f"Frame field lives on '{f.chart.name}', not '{self.chart.name}'")
        object.__setattr__(self, 'fields', fields)

    def matrix(self) -> Matrix:
        """M[i][j] = component i of field j"""
        return [[f.components[i] for f in self.fields] for i in range(self.chart.dim)]


@dataclass(frozen=True)
class Coframe:
    """n 1-forms, dual to some frame"""
    chart: Chart
    forms: Tuple[KForm, ...]

    def __post_init__(self):
        forms = tuple(self.forms)
        if len(forms) != self.chart.dim:
            raise DimensionMismatchError(f"A coframe on '{self.chart.name}' needs {self.chart.dim} forms")
        for form in forms:
            if form.chart != self.chart:
                raise ChartMismatchError(f"Coframe form lives on '{form.chart.name}', not '{self.chart.name}'")
            if form.degree != 1:
                raise DimensionMismatchError("Coframe entries must be 1-forms")
        object.__setattr__(self, 'forms', forms)

    def matrix(self) -> Matrix:
        """M[i][j] = coefficient of dx^j in form i"""
        return [form.components() for form in self.forms]


def _check_invertible(chart: Chart, matrix: Matrix, det: Expression, engine: ValidationEngine, what: str) -> None:
    entries = [e for row in matrix for e in row]
    if det.is_zero_exact():
        witness = None
        try:
            env = engine.sample_points(chart, entries, 1)
            witness = point_at(env, 0)
        except SamplingExhaustedError:
            pass
        raise SingularFrameError(f"{what} is singular: determinant is identically zero", witness)
    env = engine.sample_points(chart, entries + [det])
    values, _ = evaluate_array(det, env)
    small = np.where(~(np.abs(values) > engine.cfg.tol))[0]
    if len(small):
        witness = point_at(env, int(small[0]))
        raise SingularFrameError(f"{what} is singular at a sample point (det = {values[small[0]]:.3e})", witness)


def invert_matrix(chart: Chart, matrix: Matrix, engine: Optional[ValidationEngine] = None,
                  what: str = "matrix") -> Matrix:
    """
    Symbolic inverse via the adjugate

    Raises:
        SingularFrameError: determinant zero exactly or at a sample point
    """
    engine = engine or ValidationEngine()
    n = len(matrix)
    det = determinant(matrix)
    _check_invertible(chart, matrix, det, engine, what)
    inverse: Matrix = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            sub = [[matrix[r][c] for c in range(n) if c != i] for r in range(n) if r != j]
            cof = determinant(sub) if sub else ONE
            inverse[i][j] = cof / det if (i + j) % 2 == 0 else -cof / det
    return inverse


def dual_coframe(frame: Frame, engine: Optional[ValidationEngine] = None) -> Coframe:
    """
    Coframe eta with eta^i(v_j) = delta^i_j

    Args:
        frame: Frame (v_1, ..., v_n)
        engine: Validation engine for the invertibility check

    Returns:
        Coframe whose form i is row i of the inverse frame matrix
    """
    chart = frame.chart
    inverse = invert_matrix(chart, frame.matrix(), engine, "frame")
    logger.debug(f"Dual coframe computed on chart '{chart.name}'")
    return Coframe(chart, tuple(KForm.one_form(chart, row) for row in inverse))


def dual_frame(coframe: Coframe, engine: Optional[ValidationEngine] = None) -> Frame:
    """Frame v with eta^i(v_j) = delta^i_j"""
    chart = coframe.chart
    inverse = invert_matrix(chart, coframe.matrix(), engine, "coframe")
    n = chart.dim
    return Frame(chart, tuple(VectorField(chart, tuple(inverse[i][j] for i in range(n))) for j in range(n)))


# --------------------------------------------------------------------------
# Maps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffeoMap:
    """
    Diffeomorphism between charts given by explicit forward and inverse formulas

    Args:
        source: Chart of the domain (variables x)
        target: Chart of the image (variables y)
        forward: y^k as Expressions in x
        inverse: x^i as Expressions in y
    """
    source: Chart
    target: Chart
    forward: Tuple[Expression, ...]
    inverse: Tuple[Expression, ...]
    _checked: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        forward = tuple(as_expression(e) for e in self.forward)
        inverse = tuple(as_expression(e) for e in self.inverse)
        if self.source.dim != self.target.dim:
            raise DimensionMismatchError(
                f"Map between charts of dimension {self.source.dim} and {self.target.dim}"
            )
        if len(forward) != self.target.dim or len(inverse) != self.source.dim:
            raise DimensionMismatchError("Map needs one forward and one inverse expression per coordinate")
        object.__setattr__(self, 'forward', forward)
        object.__setattr__(self, 'inverse', inverse)

    @classmethod
    def from_strings(cls, source: Chart, target: Chart, forward: Sequence[str],
                     inverse: Sequence[str]) -> "DiffeoMap":
        return cls(source, target,
                   tuple(parse(t, source) for t in forward),
                   tuple(parse(t, target) for t in inverse))

    @classmethod
    def identity(cls, chart: Chart, target: Optional[Chart] = None) -> "DiffeoMap":
        target = target or chart
        return cls(chart, target,
                   tuple(parse(v, chart) for v in chart.variables),
                   tuple(parse(v, target) for v in target.variables))

    def forward_substitution(self) -> Dict[str, Expression]:
        """target variable -> forward expression, for composing with the map"""
        return dict(zip(self.target.variables, self.forward))

    def inverse_substitution(self) -> Dict[str, Expression]:
        return dict(zip(self.source.variables, self.inverse))

    def jacobian(self) -> Matrix:
        """J[k][i] = d forward^k / d x^i"""
        return [[differentiate(f, x) for x in self.source.variables] for f in self.forward]

    def image(self, env: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Target-chart environment of the images of source samples (parameters carried over)"""
        out = {name: values for name, values in env.items() if name not in self.source.variables}
        for name, expr in zip(self.target.variables, self.forward):
            out[name] = evaluate_array(expr, env)[0]
        return out

    def check(self, engine: Optional[ValidationEngine] = None) -> float:
        """
        Verify inverse(forward(x)) = x at sampled source points

        Returns:
            Largest residual found

        Raises:
            MapInconsistencyError: residual above the refutation threshold
        """
        engine = engine or ValidationEngine()
        env = engine.sample_points(self.source, list(self.forward))
        target_env = self.image(env)
        worst = 0.0
        worst_idx = 0
        for name, expr in zip(self.source.variables, self.inverse):
            back, bad = evaluate_array(expr, target_env)
            residual = np.where(bad, np.inf, np.abs(back - env[name]))
            idx = int(np.argmax(residual))
            if residual[idx] > worst:
                worst, worst_idx = float(residual[idx]), idx
        verdict = hysteresis(worst, engine.cfg.tol)
        if verdict == REFUTED:
            raise MapInconsistencyError(
                f"Inverse does not undo forward map (residual {worst:.3e})", point_at(env, worst_idx), worst
            )
        if verdict == INCONCLUSIVE:
            logger.warning(f"Map inverse residual {worst:.3e} is within the tolerance band")
        logger.debug(f"Map {self.source.name} -> {self.target.name} checked, residual {worst:.3e}")
        object.__setattr__(self, '_checked', True)
        return worst

    def ensure_consistent(self, cfg: Optional[SamplingConfig] = None) -> None:
        """Run check() once per map before its inverse is used"""
        if not self._checked:
            self.check(ValidationEngine(cfg))

    def compose(self, other: "DiffeoMap") -> "DiffeoMap":
        """other ∘ self, for self: X -> Y and other: Y -> Z"""
        if other.source != self.target:
            raise ChartMismatchError(
                f"Cannot compose: '{self.target.name}' is not the source '{other.source.name}'"
            )
        forward = tuple(substitute(e, self.forward_substitution()) for e in other.forward)
        inverse = tuple(substitute(e, other.inverse_substitution()) for e in self.inverse)
        return DiffeoMap(self.source, other.target, forward, inverse)

    def inverted(self) -> "DiffeoMap":
        return DiffeoMap(self.target, self.source, self.inverse, self.forward)


def pushforward(psi: DiffeoMap, v: VectorField, cfg: Optional[SamplingConfig] = None) -> VectorField:
    """
    psi_* v on the target chart

    (psi_* v)^k(y) = sum_i d psi^k/dx^i (x) v^i(x) with x = inverse(y).

    Raises:
        MapInconsistencyError: psi's inverse does not undo its forward map
    """
    if v.chart != psi.source:
        raise ChartMismatchError(f"Field lives on '{v.chart.name}', map starts at '{psi.source.name}'")
    psi.ensure_consistent(cfg)
    back = psi.inverse_substitution()
    comps = []
    for row in psi.jacobian():
        total = ZERO
        for entry, comp in zip(row, v.components):
            if not entry.is_zero_exact() and not comp.is_zero_exact():
                total = total + entry * comp
        comps.append(substitute(total, back))
    return VectorField(psi.target, tuple(comps))


def pullback(psi: DiffeoMap, omega: KForm, cfg: Optional[SamplingConfig] = None) -> KForm:
    """psi^* omega on the source chart, after the map's inverse check"""
    if omega.chart != psi.target:
        raise ChartMismatchError(f"Form lives on '{omega.chart.name}', map ends at '{psi.target.name}'")
    psi.ensure_consistent(cfg)
    source = psi.source
    there = psi.forward_substitution()
    if omega.degree == 0:
        return KForm.function(source, substitute(omega.coefficient(()), there))
    differentials = [gradient(f, source) for f in psi.forward]
    out = KForm.zero(source, omega.degree)
    for index, c in omega.coeffs.items():
        piece = KForm.function(source, substitute(c, there))
        for i in index:
            piece = wedge(piece, differentials[i])
        out = out + piece
    return out

