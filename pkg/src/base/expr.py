"""
Expression kernel - Charts, symbolic scalar expressions, parsing, printing,
differentiation and evaluation

Expressions are immutable trees. Every expression has a canonical rational
form (``canonical``) whose atoms are variables, parameters and function
applications with canonical arguments; arithmetic on expressions goes through
that form, so results come back flattened, collected and cancelled.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.base.errors import DomainError, ParseError, PafError, UnknownIdentifierError
from src.base.rational import Poly, RatFunc, mono_degree

logger = logging.getLogger(__name__)

FUNCTIONS = ('sin', 'cos', 'tan', 'exp', 'ln', 'sqrt')

# |cos(arg)| below this is treated as a pole of tan
TAN_POLE_EPS = 1e-15

Number = Union[int, Fraction]


# --------------------------------------------------------------------------
# Charts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Parameter:
    """Named constant with a sampling interval"""
    name: str
    low: float
    high: float
    nonzero: bool = False


@dataclass(frozen=True)
class Chart:
    """
    Coordinate chart with an open sampling box

    Args:
        name: Chart name
        variables: Ordered coordinate names x^1..x^n
        box: (low, high) per variable
        parameters: Named parameters with their own intervals
    """
    name: str
    variables: Tuple[str, ...]
    box: Tuple[Tuple[float, float], ...]
    parameters: Tuple[Parameter, ...] = ()

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise PafError(f"Chart '{self.name}': variable names must be unique")
        if len(self.box) != len(self.variables):
            raise PafError(f"Chart '{self.name}': box needs one interval per variable")
        pnames = [p.name for p in self.parameters]
        if len(set(pnames)) != len(pnames):
            raise PafError(f"Chart '{self.name}': parameter names must be unique")
        clash = set(pnames) & set(self.variables)
        if clash:
            raise PafError(f"Chart '{self.name}': names used as both variable and parameter: {sorted(clash)}")
        for name in list(self.variables) + pnames:
            if name in FUNCTIONS:
                raise PafError(f"Chart '{self.name}': '{name}' is a reserved function name")
        intervals = list(zip(self.variables, self.box)) + [(p.name, (p.low, p.high)) for p in self.parameters]
        for name, (low, high) in intervals:
            if not high > low:
                raise PafError(f"Chart '{self.name}': interval for '{name}' must have positive length")

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def index(self, variable: str) -> int:
        return self.variables.index(variable)

    def with_box(self, box: Sequence[Tuple[float, float]]) -> "Chart":
        return Chart(self.name, self.variables, tuple(tuple(b) for b in box), self.parameters)

    def sample(self, rng: np.random.Generator, count: int) -> Dict[str, np.ndarray]:
        """
        Draw points uniformly from the box and parameter intervals

        Nonzero parameters are redrawn while within 1e-3 of the interval width of zero.
        """
        points: Dict[str, np.ndarray] = {}
        for name, (low, high) in zip(self.variables, self.box):
            points[name] = rng.uniform(low, high, count)
        for p in self.parameters:
            values = rng.uniform(p.low, p.high, count)
            if p.nonzero:
                guard = 1e-3 * (p.high - p.low)
                for _ in range(100):
                    bad = np.abs(values) < guard
                    if not bad.any():
                        break
                    values[bad] = rng.uniform(p.low, p.high, int(bad.sum()))
            points[p.name] = values
        return points


# --------------------------------------------------------------------------
# Expression tree
# --------------------------------------------------------------------------

class Expression:
    """Base class of expression nodes"""

    __slots__ = ('_hash', '_rational', '_str', '_derivs')
    precedence = 5

    def __init__(self):
        self._hash = None
        self._rational = None
        self._str = None
        self._derivs = None

    # structure -----------------------------------------------------------
    def children(self) -> Tuple["Expression", ...]:
        return ()

    def _ident(self) -> tuple:
        raise NotImplementedError

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._ident())
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expression) or type(self) is not type(other):
            return False
        return hash(self) == hash(other) and self._ident() == other._ident()

    def __ne__(self, other) -> bool:
        return not self.__eq__(other)

    def __str__(self) -> str:
        if self._str is None:
            self._str = to_string(self)
        return self._str

    def __repr__(self) -> str:
        return f"{type(self).__name__}({str(self)})"

    # canonical form ------------------------------------------------------
    @property
    def rational(self) -> RatFunc:
        if self._rational is None:
            self._rational = _to_rational(self)
        return self._rational

    def canonical(self) -> "Expression":
        return from_rational(self.rational)

    def is_rational_only(self) -> bool:
        return all(not isinstance(a, Apply) for a in self.rational.atoms())

    def free_symbols(self) -> set:
        names = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, (Var, Param)):
                names.add(node.name)
            stack.extend(node.children())
        return names

    # arithmetic ----------------------------------------------------------
    def __add__(self, other) -> "Expression":
        return from_rational(self.rational + as_expression(other).rational)

    def __radd__(self, other) -> "Expression":
        return as_expression(other) + self

    def __sub__(self, other) -> "Expression":
        return from_rational(self.rational - as_expression(other).rational)

    def __rsub__(self, other) -> "Expression":
        return as_expression(other) - self

    def __mul__(self, other) -> "Expression":
        return from_rational(self.rational * as_expression(other).rational)

    def __rmul__(self, other) -> "Expression":
        return as_expression(other) * self

    def __truediv__(self, other) -> "Expression":
        other = as_expression(other)
        if other.rational.is_zero():
            raise DomainError("division by zero", str(other))
        return from_rational(self.rational / other.rational)

    def __rtruediv__(self, other) -> "Expression":
        return as_expression(other) / self

    def __neg__(self) -> "Expression":
        return from_rational(-self.rational)

    def __pow__(self, k: int) -> "Expression":
        if not isinstance(k, int) or k == 0:
            raise PafError("expression powers must be nonzero integers")
        if k < 0 and self.rational.is_zero():
            raise DomainError("division by zero", str(self))
        return from_rational(self.rational ** k)

    def is_zero_exact(self) -> bool:
        """Identically zero as a rational function of its atoms"""
        return self.rational.is_zero()


class Rational(Expression):
    __slots__ = ('value',)

    def __init__(self, value: Number):
        super().__init__()
        self.value = Fraction(value)

    @property
    def precedence(self) -> int:
        if self.value < 0:
            return 3
        return 5 if self.value.denominator == 1 else 2

    def _ident(self):
        return ('R', self.value)

    def sort_key(self):
        return (-1, str(self.value))


class Var(Expression):
    __slots__ = ('name',)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _ident(self):
        return ('V', self.name)

    def sort_key(self):
        return (0, self.name)


class Param(Expression):
    __slots__ = ('name',)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _ident(self):
        return ('P', self.name)

    def sort_key(self):
        return (1, self.name)


class Sum(Expression):
    __slots__ = ('terms',)
    precedence = 1

    def __init__(self, terms: Iterable[Expression]):
        super().__init__()
        self.terms = tuple(terms)

    def children(self):
        return self.terms

    def _ident(self):
        return ('S',) + self.terms


class Product(Expression):
    __slots__ = ('factors',)
    precedence = 2

    def __init__(self, factors: Iterable[Expression]):
        super().__init__()
        self.factors = tuple(factors)

    def children(self):
        return self.factors

    def _ident(self):
        return ('M',) + self.factors


class Quotient(Expression):
    __slots__ = ('num', 'den')
    precedence = 2

    def __init__(self, num: Expression, den: Expression):
        super().__init__()
        self.num = num
        self.den = den

    def children(self):
        return (self.num, self.den)

    def _ident(self):
        return ('Q', self.num, self.den)


class IntegerPower(Expression):
    __slots__ = ('base', 'exp')
    precedence = 4

    def __init__(self, base: Expression, exp: int):
        super().__init__()
        if not isinstance(exp, int) or exp == 0:
            raise PafError("IntegerPower exponent must be a nonzero integer")
        self.base = base
        self.exp = exp

    def children(self):
        return (self.base,)

    def _ident(self):
        return ('W', self.base, self.exp)


class Apply(Expression):
    __slots__ = ('fn', 'arg', '_key')

    def __init__(self, fn: str, arg: Expression):
        super().__init__()
        if fn not in FUNCTIONS:
            raise PafError(f"Unknown function '{fn}'")
        self.fn = fn
        self.arg = arg
        self._key = None

    def children(self):
        return (self.arg,)

    def _ident(self):
        return ('A', self.fn, self.arg)

    def sort_key(self):
        if self._key is None:
            self._key = (2, self.fn, str(self.arg))
        return self._key


def as_expression(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, Fraction)):
        return Rational(value)
    if isinstance(value, float):
        return Rational(Fraction(str(value)))
    raise TypeError(f"Cannot convert {type(value).__name__} to an expression")


ZERO = Rational(0)
ONE = Rational(1)


# --------------------------------------------------------------------------
# Canonical form
# --------------------------------------------------------------------------

def _is_square(n: int) -> bool:
    if n < 0:
        return False
    r = math.isqrt(n)
    return r * r == n


def _fold_apply(fn: str, value: Fraction) -> Optional[Fraction]:
    """Exact value of fn at a rational constant, when it is rational"""
    if value == 0 and fn in ('sin', 'tan', 'sqrt'):
        return Fraction(0)
    if value == 0 and fn in ('cos', 'exp'):
        return Fraction(1)
    if value == 1 and fn == 'ln':
        return Fraction(0)
    if fn == 'sqrt' and value > 0 and _is_square(value.numerator) and _is_square(value.denominator):
        return Fraction(math.isqrt(value.numerator), math.isqrt(value.denominator))
    return None


def apply_rational(fn: str, arg: RatFunc) -> RatFunc:
    """Canonical rational form of fn(arg)"""
    if arg.is_constant():
        folded = _fold_apply(fn, arg.constant_value())
        if folded is not None:
            return RatFunc.const(folded)
    node = Apply(fn, from_rational(arg))
    out = RatFunc.atom(node)
    node._rational = out
    return out


def call(fn: str, arg) -> Expression:
    """fn(arg) in canonical form, e.g. call('sqrt', e)"""
    return from_rational(apply_rational(fn, as_expression(arg).rational))


def _inverse_factorwise(den: Expression) -> RatFunc:
    if isinstance(den, Product):
        out = RatFunc.const(1)
        for f in den.factors:
            out = out * _inverse_factorwise(f)
        return out
    if isinstance(den, IntegerPower):
        return den.base.rational.inverse() ** den.exp
    return den.rational.inverse()


def _to_rational(e: Expression) -> RatFunc:
    try:
        if isinstance(e, Rational):
            return RatFunc.const(e.value)
        if isinstance(e, (Var, Param)):
            return RatFunc.atom(e)
        if isinstance(e, Sum):
            out = RatFunc.const(0)
            for t in e.terms:
                out = out + t.rational
            return out
        if isinstance(e, Product):
            out = RatFunc.const(1)
            for f in e.factors:
                out = out * f.rational
            return out
        if isinstance(e, IntegerPower):
            return e.base.rational ** e.exp
        if isinstance(e, Quotient):
            return e.num.rational * _inverse_factorwise(e.den)
        if isinstance(e, Apply):
            return apply_rational(e.fn, e.arg.rational)
    except ZeroDivisionError:
        raise DomainError("division by zero", to_string(e))
    raise TypeError(f"Unknown expression node {type(e).__name__}")


def _monomial_ast(mono, coeff: Fraction) -> Expression:
    factors: List[Expression] = []
    if coeff != 1 or not mono:
        factors.append(Rational(coeff))
    for atom, exp in mono:
        factors.append(atom if exp == 1 else IntegerPower(atom, exp))
    if len(factors) == 1:
        return factors[0]
    return Product(factors)


def _poly_ast(p: Poly) -> Expression:
    if p.is_zero():
        return Rational(0)
    terms = [_monomial_ast(m, c) for m, c in p.sorted_terms()]
    return terms[0] if len(terms) == 1 else Sum(terms)


def from_rational(r: RatFunc) -> Expression:
    """Expression tree for a canonical rational function"""
    num = _poly_ast(r.num)
    if not r.den:
        out = num
    else:
        dens: List[Expression] = []
        for f, e in r.den:
            base = _poly_ast(f)
            dens.append(base if e == 1 else IntegerPower(base, e))
        out = Quotient(num, dens[0] if len(dens) == 1 else Product(dens))
    out._rational = r
    return out


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------

def _wrap(e: Expression, min_prec: int) -> str:
    s = to_string(e)
    return f"({s})" if e.precedence < min_prec else s


def _negated(e: Expression) -> Optional[Expression]:
    """-e when e prints with a leading minus, else None"""
    if isinstance(e, Rational) and e.value < 0:
        return Rational(-e.value)
    if isinstance(e, Product) and e.factors and isinstance(e.factors[0], Rational) and e.factors[0].value < 0:
        c = -e.factors[0].value
        rest = list(e.factors[1:])
        if c != 1:
            rest.insert(0, Rational(c))
        if not rest:
            return Rational(c)
        return rest[0] if len(rest) == 1 else Product(rest)
    if isinstance(e, Quotient):
        inner = _negated(e.num)
        if inner is not None:
            return Quotient(inner, e.den)
    return None


def _product_string(factors: Sequence[Expression]) -> str:
    parts = []
    for i, f in enumerate(factors):
        if i == 0:
            parts.append(_wrap(f, 2) if not isinstance(f, Rational) else _rational_string(f.value))
        else:
            parts.append(_wrap(f, 4) if isinstance(f, Rational) and f.value < 0 else _wrap(f, 2))
    return "*".join(parts)


def _rational_string(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def to_string(e: Expression) -> str:
    """Print in the parser's grammar; parse(to_string(e)) has the same canonical form"""
    if isinstance(e, Rational):
        return _rational_string(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Apply):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, IntegerPower):
        base = to_string(e.base)
        if e.base.precedence < 5:
            base = f"({base})"
        return f"{base}^{e.exp}"
    if isinstance(e, Sum):
        out = to_string(e.terms[0])
        for t in e.terms[1:]:
            neg = _negated(t)
            if neg is not None:
                out += " - " + _wrap(neg, 2)
            else:
                out += " + " + _wrap(t, 2)
        return out
    if isinstance(e, Product):
        first = e.factors[0]
        if isinstance(first, Rational) and first.value == -1 and len(e.factors) > 1:
            # unary minus binds tighter than '^', so "-x^2" would read as (-x)^2
            head = e.factors[1]
            head_s = f"-{to_string(head)}" if head.precedence == 5 else f"-({to_string(head)})"
            return "*".join([head_s] + [_wrap(f, 2) for f in e.factors[2:]])
        return _product_string(e.factors)
    if isinstance(e, Quotient):
        return f"{_wrap(e.num, 2)}/{_wrap(e.den, 3)}"
    raise TypeError(f"Unknown expression node {type(e).__name__}")


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

class ExpressionParser:
    """
    Recursive-descent parser for the scalar expression grammar

        expr   := term (('+'|'-') term)*
        term   := factor (('*'|'/') factor)*
        factor := base ('^' integer)?
        base   := number | identifier | fn '(' expr ')' | '(' expr ')' | '-' base
    """

    def __init__(self, text: str, chart: Chart):
        self.text = text
        self.chart = chart
        self.pos = 0
        self.length = len(text)
        self.variables = set(chart.variables)
        self.parameters = set(chart.parameter_names)

    def skip_whitespace(self):
        while self.pos < self.length and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_whitespace()
        return self.text[self.pos] if self.pos < self.length else ''

    def match(self, terminal: str) -> bool:
        self.skip_whitespace()
        if self.text.startswith(terminal, self.pos):
            self.pos += len(terminal)
            return True
        return False

    def expect(self, terminal: str):
        if not self.match(terminal):
            found = self.peek() or 'end of input'
            raise ParseError(f"Expected '{terminal}' but found '{found}'", self.pos)

    def parse(self) -> Expression:
        self.pos = 0
        if not self.text.strip():
            raise ParseError("Empty expression", 0)
        result = self.parse_expr()
        self.skip_whitespace()
        if self.pos < self.length:
            raise ParseError(f"Unexpected input '{self.text[self.pos]}'", self.pos)
        return result

    def parse_expr(self) -> Expression:
        terms = [self.parse_term()]
        while True:
            if self.match('+'):
                terms.append(self.parse_term())
            elif self.match('-'):
                terms.append(Product((Rational(-1), self.parse_term())))
            else:
                break
        return terms[0] if len(terms) == 1 else Sum(terms)

    def parse_term(self) -> Expression:
        node = self.parse_factor()
        factors = [node]
        while True:
            if self.match('*'):
                factors.append(self.parse_factor())
            elif self.match('/'):
                num = factors[0] if len(factors) == 1 else Product(factors)
                factors = [Quotient(num, self.parse_factor())]
            else:
                break
        return factors[0] if len(factors) == 1 else Product(factors)

    def parse_factor(self) -> Expression:
        base = self.parse_base()
        if self.match('^'):
            self.skip_whitespace()
            start = self.pos
            sign = -1 if self.match('-') else 1
            self.skip_whitespace()
            digits_start = self.pos
            while self.pos < self.length and self.text[self.pos].isdigit():
                self.pos += 1
            if self.pos == digits_start:
                raise ParseError("Exponent must be an integer", start)
            exp = sign * int(self.text[digits_start:self.pos])
            if exp == 0:
                raise ParseError("Exponent must be nonzero", start)
            return IntegerPower(base, exp)
        return base

    def parse_base(self) -> Expression:
        ch = self.peek()
        if not ch:
            raise ParseError("Unexpected end of input", self.pos)
        if ch == '-':
            self.pos += 1
            inner = self.parse_base()
            if isinstance(inner, Rational):
                return Rational(-inner.value)
            return Product((Rational(-1), inner))
        if ch == '(':
            self.pos += 1
            inner = self.parse_expr()
            self.expect(')')
            return inner
        if ch.isdigit() or ch == '.':
            return self.parse_number()
        if ch.isalpha() or ch == '_':
            return self.parse_identifier()
        raise ParseError(f"Unexpected character '{ch}'", self.pos)

    def parse_number(self) -> Rational:
        start = self.pos
        while self.pos < self.length and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos < self.length and self.text[self.pos] == '.':
            self.pos += 1
            while self.pos < self.length and self.text[self.pos].isdigit():
                self.pos += 1
        literal = self.text[start:self.pos]
        if literal == '.':
            raise ParseError("Malformed number", start)
        return Rational(Fraction(literal))

    def parse_identifier(self) -> Expression:
        start = self.pos
        while self.pos < self.length and (self.text[self.pos].isalnum() or self.text[self.pos] == '_'):
            self.pos += 1
        name = self.text[start:self.pos]
        if name in FUNCTIONS:
            if self.peek() != '(':
                raise ParseError(f"Function '{name}' must be followed by '('", self.pos)
            self.pos += 1
            arg = self.parse_expr()
            self.expect(')')
            return Apply(name, arg)
        if name in self.variables:
            return Var(name)
        if name in self.parameters:
            return Param(name)
        raise UnknownIdentifierError(name, start)


def parse(text: str, chart: Chart) -> Expression:
    """Parse text over a chart into an expression tree"""
    return ExpressionParser(text, chart).parse()


# --------------------------------------------------------------------------
# Differentiation and substitution
# --------------------------------------------------------------------------

def _atom_derivative(variable: str):
    def derive(atom) -> RatFunc:
        if isinstance(atom, Var):
            return RatFunc.const(1 if atom.name == variable else 0)
        if isinstance(atom, Param):
            return RatFunc.const(0)
        d_arg = differentiate(atom.arg, variable).rational
        if d_arg.is_zero():
            return d_arg
        arg = atom.arg.rational
        if atom.fn == 'sin':
            outer = apply_rational('cos', arg)
        elif atom.fn == 'cos':
            outer = -apply_rational('sin', arg)
        elif atom.fn == 'tan':
            outer = RatFunc.const(1) + RatFunc.atom(atom) ** 2
        elif atom.fn == 'exp':
            outer = RatFunc.atom(atom)
        elif atom.fn == 'ln':
            outer = arg.inverse()
        else:
            outer = RatFunc.atom(atom).inverse().scale(Fraction(1, 2))
        return outer * d_arg
    return derive


def differentiate(e: Expression, variable: str) -> Expression:
    """Partial derivative with respect to a chart variable, simplified"""
    if e._derivs is None:
        e._derivs = {}
    cached = e._derivs.get(variable)
    if cached is None:
        cached = from_rational(e.rational.derivative(_atom_derivative(variable)))
        e._derivs[variable] = cached
    return cached


def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions, re-canonicalising the result"""
    memo: Dict[Expression, RatFunc] = {}

    def walk(node: Expression) -> RatFunc:
        if node in memo:
            return memo[node]
        if isinstance(node, Var) and node.name in mapping:
            out = as_expression(mapping[node.name]).rational
        elif isinstance(node, (Rational, Var, Param)):
            out = node.rational
        elif isinstance(node, Sum):
            out = RatFunc.const(0)
            for t in node.terms:
                out = out + walk(t)
        elif isinstance(node, Product):
            out = RatFunc.const(1)
            for f in node.factors:
                out = out * walk(f)
        elif isinstance(node, IntegerPower):
            out = walk(node.base) ** node.exp
        elif isinstance(node, Quotient):
            den = walk(node.den)
            if den.is_zero():
                raise DomainError("division by zero after substitution", to_string(node))
            out = walk(node.num) / den
        else:
            out = apply_rational(node.fn, walk(node.arg))
        memo[node] = out
        return out

    return from_rational(walk(e.canonical()))


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

class _Evaluator:
    """Vectorised evaluation with a per-entry domain-error mask"""

    def __init__(self, env: Mapping[str, np.ndarray], size: int, strict: bool):
        self.env = env
        self.size = size
        self.strict = strict
        self.memo: Dict[Expression, Tuple[np.ndarray, np.ndarray]] = {}

    def fail(self, message: str, node: Expression, bad: np.ndarray, inherited: np.ndarray):
        fresh = bad & ~inherited
        if self.strict and fresh.any():
            raise DomainError(message, to_string(node))
        return bad

    def run(self, node: Expression) -> Tuple[np.ndarray, np.ndarray]:
        hit = self.memo.get(node)
        if hit is not None:
            return hit
        out = self._eval(node)
        self.memo[node] = out
        return out

    def _eval(self, node: Expression) -> Tuple[np.ndarray, np.ndarray]:
        none = np.zeros(self.size, dtype=bool)
        if isinstance(node, Rational):
            return np.full(self.size, float(node.value)), none
        if isinstance(node, (Var, Param)):
            if node.name not in self.env:
                raise PafError(f"No value supplied for '{node.name}'")
            return np.broadcast_to(np.asarray(self.env[node.name], dtype=float), (self.size,)), none
        with np.errstate(all='ignore'):
            if isinstance(node, Sum):
                vals, bad = self.run(node.terms[0])
                vals = vals.copy()
                for t in node.terms[1:]:
                    v, b = self.run(t)
                    vals = vals + v
                    bad = bad | b
                return vals, bad
            if isinstance(node, Product):
                vals, bad = self.run(node.factors[0])
                vals = vals.copy()
                for f in node.factors[1:]:
                    v, b = self.run(f)
                    vals = vals * v
                    bad = bad | b
                return vals, bad
            if isinstance(node, Quotient):
                n, bn = self.run(node.num)
                d, bd = self.run(node.den)
                inherited = bn | bd
                bad = self.fail("division by zero", node, inherited | (d == 0), inherited)
                return n / d, bad
            if isinstance(node, IntegerPower):
                b, bb = self.run(node.base)
                bad = bb
                if node.exp < 0:
                    bad = self.fail("division by zero", node, bb | (b == 0), bb)
                return b ** float(node.exp), bad
            if isinstance(node, Apply):
                a, ba = self.run(node.arg)
                fn = node.fn
                if fn == 'sin':
                    return np.sin(a), ba
                if fn == 'cos':
                    return np.cos(a), ba
                if fn == 'exp':
                    return np.exp(a), ba
                if fn == 'tan':
                    bad = self.fail("tan at a pole", node, ba | (np.abs(np.cos(a)) < TAN_POLE_EPS), ba)
                    return np.tan(a), bad
                if fn == 'ln':
                    bad = self.fail("ln of a nonpositive value", node, ba | (a <= 0), ba)
                    return np.log(a), bad
                bad = self.fail("sqrt of a negative value", node, ba | (a < 0), ba)
                return np.sqrt(a), bad
        raise TypeError(f"Unknown expression node {type(node).__name__}")


def evaluate_array(e: Expression, env: Mapping[str, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate at many points at once

    Args:
        e: Expression
        env: name -> array of values (all the same length)

    Returns:
        (values, bad) where bad marks domain errors or non-finite results;
        values is nan wherever bad is set
    """
    size = 1
    for v in env.values():
        size = max(size, np.size(v))
    vals, bad = _Evaluator(env, size, strict=False).run(e)
    vals = np.array(vals, dtype=float)
    bad = bad | ~np.isfinite(vals)
    vals[bad] = np.nan
    return vals, bad


def evaluate(e: Expression, point: Mapping[str, float]) -> float:
    """Evaluate at one point, raising DomainError with the offending subexpression"""
    env = {k: np.array([float(v)]) for k, v in point.items()}
    vals, bad = _Evaluator(env, 1, strict=True).run(e)
    value = float(vals[0])
    if bad[0] or not math.isfinite(value):
        raise DomainError("non-finite value", to_string(e))
    return value
