"""
Validation mechanism - Sampling, zero verdicts and numeric rank

Implements the numeric side of every check in the library:
1. Sampling valid points of a chart box (resampling domain errors)
2. Zero testing (exact for rational expressions, sampled otherwise)
3. Pointwise numeric rank with a majority vote across samples
4. Tolerance hysteresis for verify/refute decisions
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.config import SamplingConfig
from src.base.errors import NonConstantTypeError, SamplingExhaustedError
from src.base.expr import Chart, Expression, evaluate_array

logger = logging.getLogger(__name__)

EXACT_ZERO = 'ExactZero'
EXACT_NONZERO = 'ExactNonzero'
NUMERIC_ZERO = 'NumericZero'
NUMERIC_NONZERO = 'NumericNonzero'

VERIFIED = 'verified'
REFUTED = 'refuted'
INCONCLUSIVE = 'inconclusive'

# refutation needs a residual this many times the tolerance
HYSTERESIS_FACTOR = 10.0


@dataclass(frozen=True)
class ZeroVerdict:
    """Outcome of a zero test"""
    kind: str
    samples: int = 0
    tolerance: float = 0.0
    witness: Optional[Dict[str, float]] = None
    value: Optional[float] = None

    @property
    def is_zero(self) -> bool:
        return self.kind in (EXACT_ZERO, NUMERIC_ZERO)

    @property
    def is_exact(self) -> bool:
        return self.kind in (EXACT_ZERO, EXACT_NONZERO)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {'kind': self.kind}
        if not self.is_exact:
            out['samples'] = self.samples
            out['tolerance'] = self.tolerance
        if self.witness is not None:
            out['witness'] = self.witness
            out['value'] = self.value
        return out


@dataclass
class RankResult:
    """Numeric rank across samples"""
    rank: int
    per_sample: List[int]
    consistent: bool
    witnesses: List[Dict[str, Any]] = field(default_factory=list)


def point_at(env: Dict[str, np.ndarray], index: int) -> Dict[str, float]:
    """Single sample point out of a column environment"""
    return {name: float(values[index]) for name, values in env.items()}


def hysteresis(residual: float, tol: float) -> str:
    """verified at tol, refuted beyond HYSTERESIS_FACTOR * tol, inconclusive between"""
    if residual <= tol:
        return VERIFIED
    if residual > HYSTERESIS_FACTOR * tol:
        return REFUTED
    return INCONCLUSIVE


class ValidationEngine:
    """
    Validation Engine

    Args:
        cfg: Sampling configuration; every call draws from a fresh generator
             seeded by cfg.seed unless one is passed in
    """

    def __init__(self, cfg: Optional[SamplingConfig] = None):
        self.cfg = cfg or SamplingConfig()
        logger.debug(f"Initialized validation engine - seed {self.cfg.seed}, samples {self.cfg.samples}")

    def sample_points(
        self,
        chart: Chart,
        exprs: Sequence[Expression],
        count: Optional[int] = None,
        rng: Optional[np.random.Generator] = None
    ) -> Dict[str, np.ndarray]:
        """
        Sample points where every expression evaluates to a finite value

        Args:
            chart: Chart whose box and parameters are sampled
            exprs: Expressions that must be defined at each point
            count: Number of points (cfg.samples by default)
            rng: Generator to draw from

        Returns:
            name -> array of sampled values
        """
        count = count or self.cfg.samples
        rng = rng if rng is not None else self.cfg.rng()
        names = list(chart.variables) + list(chart.parameter_names)
        kept: Dict[str, List[np.ndarray]] = {name: [] for name in names}
        have = 0
        drawn = 0
        cap = count * self.cfg.max_retries
        while have < count and drawn < cap:
            want = count - have
            batch = chart.sample(rng, want)
            drawn += want
            ok = np.ones(want, dtype=bool)
            for e in exprs:
                _, bad = evaluate_array(e, batch)
                ok &= ~bad
            if not ok.all():
                logger.debug(f"Resampling {int((~ok).sum())} points with domain errors on chart '{chart.name}'")
            for name in names:
                kept[name].append(batch[name][ok])
            have += int(ok.sum())
        if have == 0:
            raise SamplingExhaustedError(f"No valid sample point on chart '{chart.name}'", drawn)
        if have < count:
            logger.warning(f"Only {have}/{count} valid points found on chart '{chart.name}'")
        return {name: np.concatenate(parts)[:count] for name, parts in kept.items()}

    def evaluate_many(self, exprs: Sequence[Expression], env: Dict[str, np.ndarray]) -> np.ndarray:
        """Stack values of several expressions: shape (len(exprs), samples)"""
        size = len(next(iter(env.values())))
        if not exprs:
            return np.zeros((0, size))
        return np.vstack([evaluate_array(e, env)[0] for e in exprs])

    def is_zero(self, e: Expression, chart: Chart, rng: Optional[np.random.Generator] = None) -> ZeroVerdict:
        """
        Zero test

        Purely rational expressions are decided on the canonical form;
        anything else is sampled at cfg.zero_samples points.
        """
        if e.is_rational_only():
            return ZeroVerdict(EXACT_ZERO if e.is_zero_exact() else EXACT_NONZERO)
        env = self.sample_points(chart, [e], self.cfg.zero_samples, rng)
        return self.zero_on_samples(e, env)

    def zero_on_samples(self, e: Expression, env: Dict[str, np.ndarray]) -> ZeroVerdict:
        """Zero test on an already drawn set of points"""
        if e.is_zero_exact():
            return ZeroVerdict(EXACT_ZERO)
        values, bad = evaluate_array(e, env)
        size = len(values)
        over = np.where(bad | (np.abs(values) > self.cfg.tol))[0]
        if len(over) == 0:
            return ZeroVerdict(NUMERIC_ZERO, size, self.cfg.tol)
        idx = int(over[0])
        return ZeroVerdict(NUMERIC_NONZERO, size, self.cfg.tol, point_at(env, idx), float(values[idx]))

    def nonvanishing(self, e: Expression, env: Dict[str, np.ndarray], what: str) -> None:
        """Require e to stay away from zero at every sample"""
        values, _ = evaluate_array(e, env)
        small = np.where(~(np.abs(values) > self.cfg.tol))[0]
        if len(small):
            witnesses = [point_at(env, int(i)) for i in small[:3]]
            raise NonConstantTypeError(f"{what} vanishes at some samples", witnesses)

    def sign_of(self, e: Expression, env: Dict[str, np.ndarray], what: str) -> int:
        """Common sign of e across samples; mixed or vanishing signs are non-constant type"""
        values, _ = evaluate_array(e, env)
        self.nonvanishing(e, env, what)
        positive = values > 0
        if positive.all():
            return 1
        if (~positive).all():
            return -1
        flip = int(np.where(positive != positive[0])[0][0])
        raise NonConstantTypeError(f"{what} changes sign across samples",
                                   [point_at(env, 0), point_at(env, flip)])

    def numeric_rank(self, matrices: np.ndarray, env: Optional[Dict[str, np.ndarray]] = None) -> RankResult:
        """
        Pointwise rank of a stack of matrices with a majority vote

        Args:
            matrices: shape (samples, rows, cols)
            env: Sample points, used to report witnesses of minority ranks

        Returns:
            RankResult with the majority rank
        """
        if matrices.shape[1] == 0 or matrices.shape[2] == 0:
            return RankResult(0, [0] * matrices.shape[0], True)
        singular = np.linalg.svd(matrices, compute_uv=False)
        top = singular[:, :1]
        ranks = np.sum(singular > self.cfg.rank_rtol * np.where(top > 0, top, np.inf), axis=1)
        ranks = [int(r) for r in ranks]
        counts = np.bincount(ranks)
        majority = int(np.argmax(counts))
        minority = [i for i, r in enumerate(ranks) if r != majority]
        witnesses = []
        if minority:
            logger.warning(f"Rank vote not unanimous: {len(minority)}/{len(ranks)} samples differ from {majority}")
            for i in minority[:3]:
                w: Dict[str, Any] = {'rank': ranks[i]}
                if env is not None:
                    w['point'] = point_at(env, i)
                witnesses.append(w)
        return RankResult(majority, ranks, not minority, witnesses)

    def span_residuals(self, basis: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """
        Least-squares distance of target vectors from a column span, per sample

        Args:
            basis: shape (samples, n, k)
            targets: shape (samples, n)

        Returns:
            shape (samples,) residual norms
        """
        out = np.zeros(basis.shape[0])
        for i in range(basis.shape[0]):
            coeffs, *_ = np.linalg.lstsq(basis[i], targets[i], rcond=None)
            out[i] = float(np.linalg.norm(basis[i] @ coeffs - targets[i]))
        return out


def is_zero(e: Expression, chart: Chart, cfg: Optional[SamplingConfig] = None) -> ZeroVerdict:
    """Zero test with a fresh generator from cfg"""
    return ValidationEngine(cfg).is_zero(e, chart)
