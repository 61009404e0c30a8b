"""
Distributions and derived flags

Implements the bracket-closure side of the analysis:
1. Linear and affine derived flags with growth vectors
2. Bracket-generating / almost bracket-generating classification
3. Strictness and constant-type checks with witness points
4. Frobenius, Engel and contact predicates
5. Pfaff rank of a 1-form
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import SamplingConfig
from src.base.errors import ChartMismatchError, DimensionMismatchError, NonConstantTypeError
from src.base.expr import Chart, Expression, evaluate_array
from src.base.forms import (
    DiffeoMap, KForm, VectorField, determinant, exterior_derivative, field_matrix,
    lie_bracket, pushforward, wedge, wedge_power
)
from src.base.validation import RankResult, ValidationEngine, point_at

logger = logging.getLogger(__name__)

BRACKET_GENERATING = 'BracketGenerating'
ALMOST_BRACKET_GENERATING = 'AlmostBracketGenerating'
NEITHER = 'Neither'

# bisection steps when locating a sign change between two samples
BISECTION_STEPS = 60


@dataclass(frozen=True)
class LinearDistribution:
    """Distribution spanned pointwise by its generators"""
    chart: Chart
    generators: Tuple[VectorField, ...]

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise DimensionMismatchError("A distribution needs at least one generator")
        for g in gens:
            if g.chart != self.chart:
                raise ChartMismatchError(f"Generator lives on '{g.chart.name}', not '{self.chart.name}'")
        object.__setattr__(self, 'generators', gens)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def pushed(self, psi: DiffeoMap, cfg: Optional[SamplingConfig] = None) -> "LinearDistribution":
        return LinearDistribution(psi.target, tuple(pushforward(psi, g, cfg) for g in self.generators))


@dataclass(frozen=True)
class AffineDistribution:
    """
    Point-affine distribution a0 + span(a1, ..., as)

    Args:
        chart: Chart
        drift: Distinguished vector field a0
        generators: Direction generators a1..as
    """
    chart: Chart
    drift: VectorField
    generators: Tuple[VectorField, ...]

    def __post_init__(self):
        gens = tuple(self.generators)
        if not gens:
            raise DimensionMismatchError("An affine distribution needs at least one control field")
        for g in (self.drift,) + gens:
            if g.chart != self.chart:
                raise ChartMismatchError(f"Field lives on '{g.chart.name}', not '{self.chart.name}'")
        object.__setattr__(self, 'generators', gens)

    @classmethod
    def from_strings(cls, chart: Chart, drift: Sequence[str], controls: Sequence[Sequence[str]]) -> "AffineDistribution":
        return cls(chart, VectorField.from_strings(chart, drift),
                   tuple(VectorField.from_strings(chart, c) for c in controls))

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def rank(self) -> int:
        """Number of control fields s"""
        return len(self.generators)

    def direction(self) -> LinearDistribution:
        """Direction distribution L_F"""
        return LinearDistribution(self.chart, self.generators)

    def pushed(self, psi: DiffeoMap, cfg: Optional[SamplingConfig] = None) -> "AffineDistribution":
        return AffineDistribution(psi.target, pushforward(psi, self.drift, cfg),
                                  tuple(pushforward(psi, g, cfg) for g in self.generators))

    def expressions(self) -> List[Expression]:
        return [c for f in (self.drift,) + self.generators for c in f.components]


@dataclass
class Flag:
    """Derived flag with its growth vector"""
    stages: List[List[VectorField]]
    growth: List[int]
    stabilized: bool
    completion: List[int] = field(default_factory=list)
    consistent: bool = True
    witnesses: List[Dict[str, Any]] = field(default_factory=list)
    votes: List[RankResult] = field(default_factory=list)
    completion_votes: List[RankResult] = field(default_factory=list)

    @property
    def step(self) -> int:
        return len(self.growth)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            'growth_vector': list(self.growth),
            'step': self.step,
            'stabilized': self.stabilized,
            'consistent': self.consistent,
        }
        if self.completion:
            out['completion_ranks'] = list(self.completion)
        if self.witnesses:
            out['witnesses'] = self.witnesses
        return out


@dataclass(frozen=True)
class BracketClass:
    """Bracket classification with the rank of the stabilized direction distribution"""
    label: str
    rank: int
    completion_rank: int

    def to_dict(self) -> Dict[str, Any]:
        return {'label': self.label, 'rank': self.rank, 'completion_rank': self.completion_rank}


@dataclass
class CheckResult:
    """One pass/fail check with witnesses"""
    name: str
    passed: bool
    witnesses: List[Dict[str, Any]] = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {'name': self.name, 'passed': self.passed}
        if self.witnesses:
            out['witnesses'] = self.witnesses
        if self.detail:
            out['detail'] = self.detail
        return out


@dataclass
class ConstantTypeReport:
    """Outcome of the constant-type check"""
    passed: bool
    checks: List[CheckResult]

    @property
    def witnesses(self) -> List[Dict[str, Any]]:
        return [w for c in self.checks for w in c.witnesses]

    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'checks': [c.to_dict() for c in self.checks]}


# --------------------------------------------------------------------------
# Sampling helpers
# --------------------------------------------------------------------------

def _sample(engine: ValidationEngine, chart: Chart, fields: Sequence[VectorField]) -> Dict[str, np.ndarray]:
    exprs = [c for f in fields for c in f.components]
    return engine.sample_points(chart, exprs, rng=engine.cfg.rng())


def _rank(engine: ValidationEngine, fields: Sequence[VectorField], env: Dict[str, np.ndarray]) -> RankResult:
    return engine.numeric_rank(field_matrix(fields, env), env)


def _sign_change_witness(e: Expression, env: Dict[str, np.ndarray], engine: ValidationEngine) -> Optional[Dict[str, Any]]:
    """
    Locate a zero of e between two samples where it takes opposite signs

    The segment between the samples stays in the (convex) sampling box, so a sign
    change means e vanishes on the box. Returns None when there is no sign change
    and no vanishing sample.
    """
    values, bad = evaluate_array(e, env)
    ok = ~bad
    small = np.where(ok & ~(np.abs(values) > engine.cfg.tol))[0]
    if len(small):
        idx = int(small[0])
        return {'point': point_at(env, idx), 'value': float(values[idx])}
    pos = np.where(ok & (values > 0))[0]
    neg = np.where(ok & (values < 0))[0]
    if not len(pos) or not len(neg):
        return None
    a = point_at(env, int(pos[0]))
    b = point_at(env, int(neg[0]))
    value = float('nan')
    for _ in range(BISECTION_STEPS):
        mid = {k: 0.5 * (a[k] + b[k]) for k in a}
        v, vbad = evaluate_array(e, {k: np.array([x]) for k, x in mid.items()})
        value = float(v[0])
        if vbad[0] or value == 0.0:
            a = mid
            break
        if value > 0:
            a = mid
        else:
            b = mid
    return {'point': a, 'value': value}


# --------------------------------------------------------------------------
# Flags
# --------------------------------------------------------------------------

def _grow(engine: ValidationEngine, chart: Chart, stage: List[VectorField],
          candidates: List[VectorField], current: int) -> Tuple[List[VectorField], RankResult]:
    """Append the candidates that raise the sampled rank of the stage"""
    candidates = [c for c in candidates if not c.is_zero_exact()]
    new = list(stage)
    env = _sample(engine, chart, new + candidates)
    result = _rank(engine, new, env)
    for c in candidates:
        if current >= chart.dim:
            break
        trial = _rank(engine, new + [c], env)
        if trial.rank > current:
            new.append(c)
            current = trial.rank
            result = trial
    return new, result


def _finish(flag: Flag, strict: bool, what: str) -> Flag:
    votes = flag.votes + flag.completion_votes
    flag.consistent = all(v.consistent for v in votes)
    flag.witnesses = [w for v in votes for w in v.witnesses][:5]
    if strict and not flag.consistent:
        raise NonConstantTypeError(f"{what} rank is not constant across samples", flag.witnesses)
    return flag


def linear_flag(D: LinearDistribution, cfg: Optional[SamplingConfig] = None, strict: bool = True) -> Flag:
    """
    Derived flag D^{i+1} = D^i + [D, D^i]

    Args:
        D: Linear distribution
        cfg: Sampling configuration
        strict: Raise NonConstantTypeError on a non-unanimous rank vote

    Returns:
        Flag; only brackets that raise the sampled rank are kept as generators
    """
    engine = ValidationEngine(cfg)
    chart = D.chart
    first = list(D.generators)
    env = _sample(engine, chart, first)
    vote = _rank(engine, first, env)
    flag = Flag([first], [vote.rank], vote.rank >= chart.dim, votes=[vote])
    stage = first
    while not flag.stabilized:
        candidates = [lie_bracket(g, h) for g in first for h in stage if g != h]
        new, vote = _grow(engine, chart, stage, candidates, flag.growth[-1])
        if vote.rank == flag.growth[-1]:
            flag.stabilized = True
            break
        stage = new
        flag.stages.append(stage)
        flag.growth.append(vote.rank)
        flag.votes.append(vote)
        logger.debug(f"Linear flag stage {len(flag.growth)}: rank {vote.rank}")
        if vote.rank >= chart.dim:
            flag.stabilized = True
    logger.info(f"Growth vector {tuple(flag.growth)} on chart '{chart.name}'")
    return _finish(flag, strict, "Linear flag")


def affine_flag(F: AffineDistribution, cfg: Optional[SamplingConfig] = None, strict: bool = True) -> Flag:
    """
    Derived flag F^{i+1} = F^i + [F, F^i]

    Stage i+1 directions are stage i plus [a0, h] and [g, h] for g in the first
    stage and h in stage i. The affine rank n_i is the rank of L_{F^i}; the
    completion rank dim span(a0, L_{F^i}) is recorded next to it.
    """
    engine = ValidationEngine(cfg)
    chart = F.chart
    a0 = F.drift
    first = list(F.generators)
    env = _sample(engine, chart, [a0] + first)
    vote = _rank(engine, first, env)
    done = _rank(engine, [a0] + first, env)
    flag = Flag([first], [vote.rank], vote.rank >= chart.dim, [done.rank],
                votes=[vote], completion_votes=[done])
    stage = first
    while not flag.stabilized:
        candidates = [lie_bracket(a0, h) for h in stage]
        candidates += [lie_bracket(g, h) for g in first for h in stage if g != h]
        new, vote = _grow(engine, chart, stage, candidates, flag.growth[-1])
        if vote.rank == flag.growth[-1]:
            flag.stabilized = True
            break
        stage = new
        env = _sample(engine, chart, [a0] + stage)
        done = _rank(engine, [a0] + stage, env)
        flag.stages.append(stage)
        flag.growth.append(vote.rank)
        flag.completion.append(done.rank)
        flag.votes.append(vote)
        flag.completion_votes.append(done)
        logger.debug(f"Affine flag stage {len(flag.growth)}: rank {vote.rank}, with drift {done.rank}")
        if vote.rank >= chart.dim:
            flag.stabilized = True
    logger.info(f"Affine growth vector {tuple(flag.growth)}, completion ranks {tuple(flag.completion)}")
    return _finish(flag, strict, "Affine flag")


def classify_bracket(F: AffineDistribution, cfg: Optional[SamplingConfig] = None,
                     flag: Optional[Flag] = None) -> BracketClass:
    """
    Classify F by its stabilized flag

    BracketGenerating when rank L_{F^inf} = n, AlmostBracketGenerating when it is
    n-1 and the drift completes the span, Neither otherwise.
    """
    flag = flag or affine_flag(F, cfg)
    n = F.dim
    rank = flag.growth[-1]
    completion = flag.completion[-1] if flag.completion else rank
    if rank >= n:
        label = BRACKET_GENERATING
    elif rank == n - 1 and completion == n:
        label = ALMOST_BRACKET_GENERATING
    else:
        label = NEITHER
    logger.info(f"Bracket class {label} (rank {rank}, with drift {completion})")
    return BracketClass(label, rank, completion)


def strictness_check(F: AffineDistribution, cfg: Optional[SamplingConfig] = None) -> CheckResult:
    """
    Check that a0(x) stays outside span(a1(x), ..., as(x))

    Besides the per-sample rank comparison, a square [a0 | A] is tested for sign
    changes of its determinant, which exposes a violation between samples.
    """
    engine = ValidationEngine(cfg)
    chart = F.chart
    fields = [F.drift] + list(F.generators)
    env = _sample(engine, chart, fields)
    plain = _rank(engine, list(F.generators), env)
    full = _rank(engine, fields, env)
    bad = [i for i, (a, b) in enumerate(zip(plain.per_sample, full.per_sample)) if b <= a]
    witnesses = [{'point': point_at(env, i)} for i in bad[:3]]
    if not bad and len(fields) == chart.dim:
        det = determinant([[f.components[i] for f in fields] for i in range(chart.dim)])
        found = _sign_change_witness(det, env, engine)
        if found is not None:
            witnesses.append(found)
    passed = not witnesses
    if not passed:
        logger.warning(f"Drift falls into the control span on chart '{chart.name}'")
    return CheckResult('strictly_affine', passed, witnesses,
                       "" if passed else "drift lies in the span of the controls somewhere on the box")


def _vote_check(name: str, vote: RankResult) -> CheckResult:
    return CheckResult(name, vote.consistent, list(vote.witnesses),
                       "" if vote.consistent else f"majority rank {vote.rank}, per-sample ranks differ")


def constant_type_check(F: AffineDistribution, cfg: Optional[SamplingConfig] = None,
                        flag: Optional[Flag] = None) -> ConstantTypeReport:
    """
    Constant-type check: strictness plus constant ranks of L_{F^i} and span(a0, L_{F^i})

    Failures are report content, never exceptions.
    """
    engine = ValidationEngine(cfg)
    chart = F.chart
    checks = [strictness_check(F, cfg)]
    flag = flag or affine_flag(F, cfg, strict=False)
    for i, (vote, done) in enumerate(zip(flag.votes, flag.completion_votes), start=1):
        checks.append(_vote_check(f"direction_rank_{i}", vote))
        checks.append(_vote_check(f"completion_rank_{i}", done))
        stage = flag.stages[i - 1]
        for label, fields in ((f"direction_rank_{i}", stage), (f"completion_rank_{i}", [F.drift] + stage)):
            if len(fields) != chart.dim or not vote.consistent:
                continue
            env = _sample(engine, chart, fields)
            det = determinant([[f.components[r] for f in fields] for r in range(chart.dim)])
            found = _sign_change_witness(det, env, engine)
            if found is not None:
                checks.append(CheckResult(f"{label}_between_samples", False, [found],
                                          "rank drops between samples"))
    passed = all(c.passed for c in checks)
    logger.info(f"Constant type check {'passed' if passed else 'failed'} on chart '{chart.name}'")
    return ConstantTypeReport(passed, checks)


# --------------------------------------------------------------------------
# Predicates
# --------------------------------------------------------------------------

def is_frobenius(D: LinearDistribution, cfg: Optional[SamplingConfig] = None) -> bool:
    """True iff every bracket of generators stays in their span at the samples"""
    engine = ValidationEngine(cfg)
    gens = list(D.generators)
    brackets = [lie_bracket(g, h) for i, g in enumerate(gens) for h in gens[i + 1:]]
    brackets = [b for b in brackets if not b.is_zero_exact()]
    if not brackets:
        return True
    env = _sample(engine, D.chart, gens + brackets)
    base = _rank(engine, gens, env).rank
    for b in brackets:
        if _rank(engine, gens + [b], env).rank > base:
            return False
    return True


def is_engel(D: LinearDistribution, cfg: Optional[SamplingConfig] = None) -> bool:
    """Rank-2 distribution on a 4-manifold with growth vector (2, 3, 4)"""
    if D.dim != 4:
        return False
    return linear_flag(D, cfg).growth == [2, 3, 4]


def is_contact(D: LinearDistribution, cfg: Optional[SamplingConfig] = None) -> bool:
    """Rank-2 distribution on a 3-manifold whose bracket escapes"""
    if D.dim != 3:
        return False
    return linear_flag(D, cfg).growth == [2, 3]


def _form_vanishes(form: KForm, engine: ValidationEngine) -> bool:
    return all(engine.is_zero(c, form.chart).is_zero for c in form.coeffs.values())


def _form_norm(form: KForm, env: Dict[str, np.ndarray]) -> np.ndarray:
    size = len(next(iter(env.values())))
    total = np.zeros(size)
    for c in form.coeffs.values():
        values, _ = evaluate_array(c, env)
        total = np.maximum(total, np.abs(values))
    return total


def pfaff_rank(theta: KForm, cfg: Optional[SamplingConfig] = None) -> Tuple[int, bool]:
    """
    Pfaff rank of a 1-form

    Args:
        theta: Nonvanishing 1-form
        cfg: Sampling configuration

    Returns:
        (k, top_power_vanishes): k is the smallest integer with
        theta∧(dtheta)^(k+1) = 0; the flag says whether (dtheta)^(k+1) = 0

    Raises:
        NonConstantTypeError: theta vanishes at a sample, or theta∧(dtheta)^k
            vanishes at some samples but not others
    """
    if theta.degree != 1:
        raise DimensionMismatchError("Pfaff rank is defined for 1-forms")
    engine = ValidationEngine(cfg)
    chart = theta.chart
    exprs = list(theta.coeffs.values())
    env = engine.sample_points(chart, exprs) if exprs else chart.sample(engine.cfg.rng(), engine.cfg.samples)
    small = np.where(~(_form_norm(theta, env) > engine.cfg.tol))[0]
    if len(small):
        raise NonConstantTypeError("1-form vanishes at some samples", [point_at(env, int(i)) for i in small[:3]])
    if chart.dim == 1:
        return 0, True
    d_theta = exterior_derivative(theta)
    k = 0
    while True:
        if 2 * k + 3 > chart.dim:
            top = wedge_power(d_theta, k + 1)
            break
        candidate = wedge(theta, wedge_power(d_theta, k + 1))
        if _form_vanishes(candidate, engine):
            top = wedge_power(d_theta, k + 1)
            break
        k += 1
    if k > 0:
        # theta∧(dtheta)^k must vanish nowhere for the rank to be constant
        lower = wedge(theta, wedge_power(d_theta, k))
        env = engine.sample_points(chart, list(lower.coeffs.values()))
        small = np.where(~(_form_norm(lower, env) > engine.cfg.tol))[0]
        if len(small):
            raise NonConstantTypeError(f"Pfaff rank drops below {k} at some samples",
                                       [point_at(env, int(i)) for i in small[:3]])
    top_vanishes = top.degree > chart.dim or top.is_zero_exact() or _form_vanishes(top, engine)
    logger.info(f"Pfaff rank k={k}, top power {'vanishes' if top_vanishes else 'does not vanish'}")
    return k, top_vanishes
