"""
Exact rational normal form - Polynomials and rational functions over atoms

Atoms are hashable objects exposing ``sort_key()``; expression variables,
parameters and function applications all qualify. Coefficients are
``Fraction``. Denominators are kept as a product of monic, content-free
factors so that repeated arithmetic on the same factors does not blow up.
"""
import logging
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

logger = logging.getLogger(__name__)

# A monomial is a tuple of (atom, exponent) pairs sorted by atom.sort_key().
Monomial = Tuple[Tuple[Any, int], ...]

ONE_MONOMIAL: Monomial = ()


def mono_key(mono: Monomial) -> tuple:
    return tuple((atom.sort_key(), exp) for atom, exp in mono)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    exps: Dict[Any, int] = dict(a)
    for atom, exp in b:
        exps[atom] = exps.get(atom, 0) + exp
    return tuple(sorted(((x, e) for x, e in exps.items() if e), key=lambda p: p[0].sort_key()))


def mono_div(a: Monomial, b: Monomial) -> Optional[Monomial]:
    """a / b when b divides a, else None"""
    exps: Dict[Any, int] = dict(a)
    for atom, exp in b:
        have = exps.get(atom, 0)
        if have < exp:
            return None
        exps[atom] = have - exp
    return tuple(sorted(((x, e) for x, e in exps.items() if e), key=lambda p: p[0].sort_key()))


def mono_degree(mono: Monomial) -> int:
    return sum(exp for _, exp in mono)


class Poly:
    """Sparse multivariate polynomial with Fraction coefficients"""

    __slots__ = ('terms', '_key', '_hash')

    def __init__(self, terms: Optional[Dict[Monomial, Fraction]] = None, prune: bool = True):
        if terms is None:
            self.terms: Dict[Monomial, Fraction] = {}
        elif prune:
            self.terms = {m: Fraction(c) for m, c in terms.items() if c != 0}
        else:
            self.terms = terms
        self._key = None
        self._hash = None

    @classmethod
    def const(cls, value) -> "Poly":
        value = Fraction(value)
        return cls({ONE_MONOMIAL: value} if value else {}, False)

    @classmethod
    def atom(cls, atom: Any, exp: int = 1) -> "Poly":
        return cls({((atom, exp),): Fraction(1)}, False)

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and ONE_MONOMIAL in self.terms)

    def constant_value(self) -> Fraction:
        return self.terms.get(ONE_MONOMIAL, Fraction(0))

    def atoms(self) -> set:
        found = set()
        for mono in self.terms:
            for atom, _ in mono:
                found.add(atom)
        return found

    def key(self) -> tuple:
        if self._key is None:
            self._key = tuple(sorted(((mono_key(m), c) for m, c in self.terms.items()),
                                     key=lambda item: item[0]))
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.key() == other.key()

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def __add__(self, other: "Poly") -> "Poly":
        res = self.terms.copy()
        for m, c in other.terms.items():
            v = res.get(m, 0) + c
            if v:
                res[m] = v
            else:
                res.pop(m, None)
        return Poly(res, False)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()}, False)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, factor) -> "Poly":
        factor = Fraction(factor)
        if not factor:
            return Poly()
        return Poly({m: c * factor for m, c in self.terms.items()}, False)

    def __mul__(self, other: "Poly") -> "Poly":
        res: Dict[Monomial, Fraction] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = mono_mul(ma, mb)
                v = res.get(m, 0) + ca * cb
                if v:
                    res[m] = v
                else:
                    res.pop(m, None)
        return Poly(res, False)

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("Polynomial powers must be non-negative")
        result = Poly.const(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def _dense_order(self, atoms: Iterable[Any]) -> List[Any]:
        return sorted(atoms, key=lambda a: a.sort_key())

    @staticmethod
    def _lex_vector(mono: Monomial, order: List[Any]) -> Tuple[int, ...]:
        exps = dict(mono)
        return tuple(exps.get(a, 0) for a in order)

    def leading(self, order: Optional[List[Any]] = None) -> Tuple[Monomial, Fraction]:
        """Leading term in lex order (first atom in sort order dominates)"""
        if order is None:
            order = self._dense_order(self.atoms())
        mono = max(self.terms, key=lambda m: self._lex_vector(m, order))
        return mono, self.terms[mono]

    def divide(self, other: "Poly") -> Optional["Poly"]:
        """Exact quotient self / other, or None if other does not divide self"""
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        if self.is_zero():
            return Poly()
        if other.is_constant():
            return self.scale(1 / other.constant_value())
        order = self._dense_order(self.atoms() | other.atoms())
        lead_m, lead_c = other.leading(order)
        remainder = self
        quotient: Dict[Monomial, Fraction] = {}
        while not remainder.is_zero():
            m, c = remainder.leading(order)
            t = mono_div(m, lead_m)
            if t is None:
                return None
            coeff = c / lead_c
            quotient[t] = quotient.get(t, 0) + coeff
            remainder = remainder - Poly({t: coeff}, False) * other
        return Poly(quotient)

    def content_monomial(self) -> Monomial:
        """Largest monomial dividing every term"""
        monos = list(self.terms)
        if not monos:
            return ONE_MONOMIAL
        common = dict(monos[0])
        for mono in monos[1:]:
            exps = dict(mono)
            for atom in list(common):
                common[atom] = min(common[atom], exps.get(atom, 0))
                if not common[atom]:
                    del common[atom]
        return tuple(sorted(common.items(), key=lambda p: p[0].sort_key()))

    def partial(self, atom: Any) -> "Poly":
        """Formal partial derivative with respect to one atom"""
        res: Dict[Monomial, Fraction] = {}
        for mono, c in self.terms.items():
            exps = dict(mono)
            e = exps.get(atom, 0)
            if not e:
                continue
            if e == 1:
                del exps[atom]
            else:
                exps[atom] = e - 1
            m = tuple(sorted(exps.items(), key=lambda p: p[0].sort_key()))
            res[m] = res.get(m, 0) + c * e
        return Poly(res)

    def sorted_terms(self) -> List[Tuple[Monomial, Fraction]]:
        """Terms in display order: higher total degree first, then by atom order"""
        return sorted(self.terms.items(), key=lambda item: (-mono_degree(item[0]), mono_key(item[0])))


Factor = Tuple[Poly, int]


def normalize_factor(p: Poly) -> Tuple[Fraction, List[Factor]]:
    """
    Split a nonzero polynomial into constant * monomial content * monic rest

    Returns:
        (constant, factors) with every factor monic and content-free
    """
    if p.is_zero():
        raise ZeroDivisionError("cannot normalize the zero polynomial")
    factors: List[Factor] = []
    content = p.content_monomial()
    if content:
        for atom, exp in content:
            factors.append((Poly.atom(atom), exp))
        p = Poly({mono_div(m, content): c for m, c in p.terms.items()}, False)
    if p.is_constant():
        return p.constant_value(), factors
    _, lc = p.leading()
    factors.append((p.scale(1 / lc), 1))
    return lc, factors


def _sorted_den(den: Dict[Poly, int]) -> Tuple[Factor, ...]:
    return tuple(sorted(((f, e) for f, e in den.items() if e), key=lambda fe: fe[0].key()))


class RatFunc:
    """
    Rational function num / prod(f_i^e_i)

    The numerator is never divisible by a denominator factor; the zero
    function has an empty denominator.
    """

    __slots__ = ('num', 'den', '_hash')

    def __init__(self, num: Poly, den: Tuple[Factor, ...] = ()):
        self.num = num
        self.den = den
        self._hash = None

    @classmethod
    def make(cls, num: Poly, den: Dict[Poly, int]) -> "RatFunc":
        if num.is_zero():
            return cls(Poly())
        den = {f: e for f, e in den.items() if e}
        for f in list(den):
            while den[f]:
                q = num.divide(f)
                if q is None:
                    break
                num = q
                den[f] -= 1
        return cls(num, _sorted_den(den))

    @classmethod
    def const(cls, value) -> "RatFunc":
        return cls(Poly.const(value))

    @classmethod
    def atom(cls, atom: Any) -> "RatFunc":
        return cls(Poly.atom(atom))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return not self.den

    def is_constant(self) -> bool:
        return not self.den and self.num.is_constant()

    def constant_value(self) -> Fraction:
        return self.num.constant_value()

    def atoms(self) -> set:
        found = self.num.atoms()
        for f, _ in self.den:
            found |= f.atoms()
        return found

    def key(self) -> tuple:
        return (self.num.key(), tuple((f.key(), e) for f, e in self.den))

    def __eq__(self, other) -> bool:
        return isinstance(other, RatFunc) and self.key() == other.key()

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def _den_poly(self, exps: Dict[Poly, int]) -> Poly:
        out = Poly.const(1)
        for f, e in exps.items():
            if e:
                out = out * (f ** e)
        return out

    def __add__(self, other: "RatFunc") -> "RatFunc":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if not self.den and not other.den:
            return RatFunc(self.num + other.num)
        mine = dict(self.den)
        theirs = dict(other.den)
        common = {f: max(mine.get(f, 0), theirs.get(f, 0)) for f in set(mine) | set(theirs)}
        left = self.num * self._den_poly({f: e - mine.get(f, 0) for f, e in common.items()})
        right = other.num * self._den_poly({f: e - theirs.get(f, 0) for f, e in common.items()})
        return RatFunc.make(left + right, common)

    def __neg__(self) -> "RatFunc":
        return RatFunc(-self.num, self.den)

    def __sub__(self, other: "RatFunc") -> "RatFunc":
        return self + (-other)

    def scale(self, factor) -> "RatFunc":
        factor = Fraction(factor)
        if not factor:
            return RatFunc(Poly())
        return RatFunc(self.num.scale(factor), self.den)

    def __mul__(self, other: "RatFunc") -> "RatFunc":
        if self.is_zero() or other.is_zero():
            return RatFunc(Poly())
        if not self.den and not other.den:
            return RatFunc(self.num * other.num)
        den = dict(self.den)
        for f, e in other.den:
            den[f] = den.get(f, 0) + e
        return RatFunc.make(self.num * other.num, den)

    def inverse(self) -> "RatFunc":
        if self.is_zero():
            raise ZeroDivisionError("division by an identically zero rational function")
        constant, factors = normalize_factor(self.num)
        den: Dict[Poly, int] = {}
        for f, e in factors:
            _insert_factor(den, f, e)
        num = self._den_poly(dict(self.den)).scale(1 / constant)
        return RatFunc.make(num, den)

    def __truediv__(self, other: "RatFunc") -> "RatFunc":
        return self * other.inverse()

    def __pow__(self, k: int) -> "RatFunc":
        if k == 0:
            return RatFunc.const(1)
        if k < 0:
            return self.inverse() ** (-k)
        num = self.num ** k
        return RatFunc.make(num, {f: e * k for f, e in self.den})

    def derivative(self, atom_derivative: Callable[[Any], "RatFunc"]) -> "RatFunc":
        """
        Derivation extended from atoms by the chain and quotient rules

        Args:
            atom_derivative: Derivative of each atom as a rational function

        Returns:
            Derivative of this rational function
        """
        cache: Dict[Any, RatFunc] = {}

        def d_atom(atom):
            if atom not in cache:
                cache[atom] = atom_derivative(atom)
            return cache[atom]

        def d_poly(p: Poly) -> RatFunc:
            total = RatFunc(Poly())
            for atom in sorted(p.atoms(), key=lambda a: a.sort_key()):
                da = d_atom(atom)
                if da.is_zero():
                    continue
                total = total + RatFunc(p.partial(atom)) * da
            return total

        d_num = d_poly(self.num)
        if not self.den:
            return d_num
        inv_den = RatFunc(Poly.const(1), self.den)
        result = d_num * inv_den
        for f, e in self.den:
            df = d_poly(f)
            if df.is_zero():
                continue
            term = RatFunc(self.num.scale(e)) * df * RatFunc.make(Poly.const(1), {f: 1})
            result = result - term * inv_den
        return result


def _insert_factor(den: Dict[Poly, int], q: Poly, exp: int) -> None:
    """Add monic content-free factor q^exp, reusing existing factors that divide it"""
    for f in list(den):
        while not q.is_constant():
            r = q.divide(f)
            if r is None:
                break
            den[f] += exp
            q = r
    if not q.is_constant():
        den[q] = den.get(q, 0) + exp
