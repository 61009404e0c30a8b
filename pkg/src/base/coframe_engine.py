"""
Coframe Engine - Structure functions and equivalence-method reductions

Implements staged reductions of a point-affine distribution to an adapted frame:
1. Admissible frame - drift first, then controls, then completing brackets
2. Normalization - algebraic solves for the group parameters that fix torsion
3. Case split - zero verdicts of the relative invariants pick the case
4. Invariants - remaining structure functions, sampled on the box

Convention: for a frame (v_1, ..., v_n) with dual coframe eta, the structure
functions are c^k_ij = -eta^k([v_i, v_j]), so that d eta^k = sum_{i<j} c^k_ij eta^i∧eta^j.
Indices are 0-based in code and 1-based in invariant names.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import SamplingConfig
from src.base.errors import (
    ClassificationRejected, MissingPfaffCoordinatesError,
    SingularFrameError, UnsupportedSystemError
)
from src.base.expr import Expression, ONE, ZERO, Var, as_expression, call, differentiate, evaluate_array
from src.base.flags import (
    ALMOST_BRACKET_GENERATING, NEITHER, AffineDistribution, LinearDistribution,
    classify_bracket, is_frobenius, pfaff_rank
)
from src.base.forms import (
    Coframe, Frame, KForm, VectorField, apply, dual_coframe, dual_frame,
    exterior_derivative, gradient, lie_bracket, wedge
)
from src.base.validation import ValidationEngine, point_at

logger = logging.getLogger(__name__)

DIM2_RANK1 = 'Dim2Rank1'
DIM3_RANK1 = 'Dim3Rank1'
CORANK_ONE = 'CorankOne'

SUPPORTED_SYSTEMS = "n=2 with one control, n=3 with one control, or n-1 controls on an n-manifold"


def torsion_name(k: int, i: int, j: int) -> str:
    """Invariant name of c^k_ij with 0-based indices, e.g. T2_13"""
    return f"T{k + 1}_{i + 1}{j + 1}"


@dataclass
class StructureFunctions:
    """
    Structure functions of a coframe

    Args:
        frame: Frame dual to the coframe
        coframe: Coframe eta
        table: (k, i, j) with i < j -> c^k_ij
    """
    frame: Frame
    coframe: Coframe
    table: Dict[Tuple[int, int, int], Expression]

    def c(self, k: int, i: int, j: int) -> Expression:
        """c^k_ij with antisymmetry in (i, j)"""
        if i == j:
            return ZERO
        if i < j:
            return self.table.get((k, i, j), ZERO)
        return -self.table.get((k, j, i), ZERO)

    def reconstruction(self) -> List[KForm]:
        """d eta^k - sum_{i<j} c^k_ij eta^i∧eta^j for each k; zero when the table is right"""
        out = []
        forms = self.coframe.forms
        n = len(forms)
        for k in range(n):
            residual = exterior_derivative(forms[k])
            for i in range(n):
                for j in range(i + 1, n):
                    c = self.c(k, i, j)
                    if not c.is_zero_exact():
                        residual = residual - wedge(forms[i], forms[j]).scale(c)
            out.append(residual)
        return out

    def to_dict(self) -> Dict[str, str]:
        return {torsion_name(k, i, j): str(c) for (k, i, j), c in sorted(self.table.items())
                if not c.is_zero_exact()}


def frame_structure(frame: Frame, engine: Optional[ValidationEngine] = None) -> StructureFunctions:
    """Structure functions from brackets of the frame fields"""
    engine = engine or ValidationEngine()
    coframe = dual_coframe(frame, engine)
    fields = frame.fields
    n = len(fields)
    table: Dict[Tuple[int, int, int], Expression] = {}
    for i in range(n):
        for j in range(i + 1, n):
            bracket = lie_bracket(fields[i], fields[j])
            if bracket.is_zero_exact():
                continue
            for k in range(n):
                table[(k, i, j)] = -apply(coframe.forms[k], [bracket])
    return StructureFunctions(frame, coframe, table)


def structure_functions(cf: Coframe, cfg: Optional[SamplingConfig] = None) -> StructureFunctions:
    """
    Structure functions c^k_ij = d eta^k(v_i, v_j) of a coframe, via its dual frame

    Raises:
        SingularFrameError: coframe not invertible on the samples
    """
    engine = ValidationEngine(cfg)
    frame = dual_frame(cf, engine)
    n = cf.chart.dim
    table: Dict[Tuple[int, int, int], Expression] = {}
    for k, eta in enumerate(cf.forms):
        d_eta = exterior_derivative(eta)
        if d_eta.is_zero_exact():
            continue
        for i in range(n):
            for j in range(i + 1, n):
                table[(k, i, j)] = apply(d_eta, [frame.fields[i], frame.fields[j]])
    return StructureFunctions(frame, cf, table)


@dataclass(frozen=True)
class CaseLabel:
    """Which reduction applied and which case it ended in"""
    theorem: str
    case: int
    epsilon: Optional[int] = None
    pfaff_k: Optional[int] = None
    top_power_vanishes: Optional[bool] = None
    three_manifold_case: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {'theorem': self.theorem, 'case': self.case}
        if self.epsilon is not None:
            out['epsilon'] = self.epsilon
        if self.pfaff_k is not None:
            out['pfaff_k'] = self.pfaff_k
            out['top_power_vanishes'] = self.top_power_vanishes
        if self.three_manifold_case is not None:
            out['three_manifold_case'] = self.three_manifold_case
        return out

    def __str__(self) -> str:
        text = f"{self.theorem} case {self.case}"
        if self.epsilon is not None:
            text += f" (epsilon={self.epsilon})"
        if self.pfaff_k is not None:
            text += f" (k={self.pfaff_k})"
        return text


@dataclass
class InvariantReport:
    """Case label, named invariants and their sampled values"""
    label: CaseLabel
    invariants: Dict[str, Expression] = field(default_factory=dict)
    samples: Dict[str, List[float]] = field(default_factory=dict)
    points: List[Dict[str, float]] = field(default_factory=list)
    frame: Optional[Frame] = None
    structure: Optional[StructureFunctions] = None
    checks: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def coframe(self) -> Optional[Coframe]:
        return self.structure.coframe if self.structure is not None else None

    def to_dict(self, verbose: bool = False) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            'case': self.label.to_dict(),
            'invariants': {name: str(e) for name, e in self.invariants.items()},
            'samples': self.samples,
            'checks': self.checks,
            'notes': self.notes,
        }
        if self.frame is not None:
            out['adapted_frame'] = [f.to_strings() for f in self.frame.fields]
        if self.structure is not None:
            out['structure_functions'] = self.structure.to_dict()
        if verbose:
            out['points'] = self.points
        return out


class CoframeEngine:
    """
    Coframe Engine

    Runs the reduction matching the (n, s) shape of a point-affine distribution.

    Args:
        cfg: Sampling configuration shared by every zero test and rank vote
    """

    def __init__(self, cfg: Optional[SamplingConfig] = None):
        self.cfg = cfg or SamplingConfig()
        self.engine = ValidationEngine(self.cfg)
        logger.debug(f"Initialized coframe engine - seed {self.cfg.seed}")

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _env(self, frame: Frame, extra: Sequence[Expression] = ()) -> Dict[str, np.ndarray]:
        exprs = [c for f in frame.fields for c in f.components] + list(extra)
        return self.engine.sample_points(frame.chart, exprs, rng=self.cfg.rng())

    def _vanishes(self, e: Expression, frame: Frame, what: str) -> bool:
        """Zero verdict for a relative invariant; mixed behaviour is non-constant type"""
        verdict = self.engine.is_zero(e, frame.chart, self.cfg.rng())
        logger.debug(f"{what}: {verdict.kind}")
        if verdict.is_zero:
            return True
        self.engine.nonvanishing(e, self._env(frame, [e]), what)
        return False

    def _structure(self, frame: Frame) -> StructureFunctions:
        return frame_structure(frame, self.engine)

    def _sample_invariants(self, report: InvariantReport) -> InvariantReport:
        if not report.invariants:
            return report
        chart = report.frame.chart
        names = list(report.invariants)
        env = self.engine.sample_points(chart, [report.invariants[n] for n in names], rng=self.cfg.rng())
        for name in names:
            values, _ = evaluate_array(report.invariants[name], env)
            report.samples[name] = [float(v) for v in values]
        size = len(next(iter(env.values())))
        report.points = [point_at(env, i) for i in range(size)]
        return report

    # ------------------------------------------------------------------
    # n = 2, one control
    # ------------------------------------------------------------------

    def dim2_rank1(self, F: AffineDistribution) -> InvariantReport:
        """
        Reduction for a rank-one affine distribution on a surface

        Case 1 when T1_12 vanishes; otherwise v2 is rescaled so that T1_12 = 1 and
        T2_12 of the resulting e-structure is the invariant.
        """
        if F.dim != 2 or F.rank != 1:
            raise UnsupportedSystemError(f"Surface reduction needs n=2, s=1, got n={F.dim}, s={F.rank}")
        logger.info("Stage 1: 0-adapted frame (a0, a1)")
        frame = Frame(F.chart, (F.drift, F.generators[0]))
        sf = self._structure(frame)
        torsion = sf.c(0, 0, 1)
        if self._vanishes(torsion, frame, "T1_12"):
            logger.info("T1_12 vanishes: case 1")
            report = InvariantReport(CaseLabel(DIM2_RANK1, 1), frame=frame, structure=sf)
            report.notes.append("no invariants: locally equivalent to the flat normal form")
            return report
        logger.info("Stage 2: normalize T1_12 = 1")
        v2 = frame.fields[1].scale(ONE / torsion)
        frame = Frame(F.chart, (frame.fields[0], v2))
        sf = self._structure(frame)
        report = InvariantReport(CaseLabel(DIM2_RANK1, 2), {'T2_12': sf.c(1, 0, 1)}, frame=frame, structure=sf)
        report.checks['normalized_T1_12'] = self.engine.is_zero(sf.c(0, 0, 1) - ONE, F.chart).to_dict()
        return self._sample_invariants(report)

    # ------------------------------------------------------------------
    # n = 3, one control
    # ------------------------------------------------------------------

    def _normalize_dim3(self, F: AffineDistribution) -> Tuple[Frame, StructureFunctions]:
        """Admissible frame reduced to T3_12 = 1, T1_12 = 0, T2_12 = T3_13"""
        chart = F.chart
        v1, v2 = F.drift, F.generators[0]
        v3 = lie_bracket(v1, v2)
        logger.info("Stage 1: admissible frame (a0, a1, [a0, a1])")
        try:
            frame = Frame(chart, (v1, v2, v3))
            sf = self._structure(frame)
        except SingularFrameError as e:
            raise ClassificationRejected(f"Frame (a0, a1, [a0, a1]) is singular: {e}", NEITHER) from e
        c312 = sf.c(2, 0, 1)
        if self._vanishes(c312, frame, "T3_12"):
            raise ClassificationRejected("T3_12 vanishes: the distribution is neither bracket-generating "
                                         "nor almost bracket-generating", NEITHER)

        logger.info("Stage 2: normalize T3_12 = 1, T1_12 = 0")
        v3 = v3.scale(c312) + v1.scale(sf.c(0, 0, 1))
        frame = Frame(chart, (v1, v2, v3))
        sf = self._structure(frame)

        logger.info("Stage 3: absorb T2_12 - T3_13")
        b3 = (sf.c(1, 0, 1) - sf.c(2, 0, 2)) / 2
        if not b3.is_zero_exact():
            frame = Frame(chart, (v1, v2, v3 + v2.scale(b3)))
            sf = self._structure(frame)
        return frame, sf

    def _rescale(self, frame: Frame, b: Expression) -> Tuple[Frame, StructureFunctions]:
        v1, v2, v3 = frame.fields
        frame = Frame(frame.chart, (v1, v2.scale(b), v3.scale(b)))
        return frame, self._structure(frame)

    def dim3_rank1(self, F: AffineDistribution) -> InvariantReport:
        """
        Reduction for a rank-one affine distribution on a 3-manifold

        Branches on T1_23 and T1_13 of the normalized frame:
            case 1: both vanish; invariant T2_13
            case 2: T1_23 vanishes; normalize T1_13 = 1
            case 3: normalize T1_23 = epsilon = sign(T1_23)
        """
        if F.dim != 3 or F.rank != 1:
            raise UnsupportedSystemError(f"3-manifold reduction needs n=3, s=1, got n={F.dim}, s={F.rank}")
        chart = F.chart
        frame, sf = self._normalize_dim3(F)
        t123 = sf.c(0, 1, 2)
        t113 = sf.c(0, 0, 2)
        logger.info("Stage 4: case split on T1_23, T1_13")
        if self._vanishes(t123, frame, "T1_23"):
            if self._vanishes(t113, frame, "T1_13"):
                report = InvariantReport(CaseLabel(DIM3_RANK1, 1), {'T2_13': sf.c(1, 0, 2)},
                                         frame=frame, structure=sf)
                report.notes.append("invariants beyond T2_13 need prolongation")
                return self._sample_invariants(report)
            frame, sf = self._rescale(frame, ONE / t113)
            report = InvariantReport(CaseLabel(DIM3_RANK1, 2), {
                'T2_12': sf.c(1, 0, 1),
                'T2_13': sf.c(1, 0, 2),
                'T2_23': sf.c(1, 1, 2),
            }, frame=frame, structure=sf)
            report.checks['normalized_T1_13'] = self.engine.is_zero(sf.c(0, 0, 2) - ONE, chart).to_dict()
            return self._sample_invariants(report)

        epsilon = self.engine.sign_of(t123, self._env(frame, [t123]), "T1_23")
        logger.info(f"Case 3 with epsilon={epsilon}")
        b2 = as_expression(-epsilon) / call('sqrt', t123 * epsilon)
        frame, sf = self._rescale(frame, b2)
        report = InvariantReport(CaseLabel(DIM3_RANK1, 3, epsilon=epsilon), {
            'B': sf.c(0, 0, 2),
            'T2_12': sf.c(1, 0, 1),
            'T2_13': sf.c(1, 0, 2),
            'T2_23': sf.c(1, 1, 2),
            'T3_23': sf.c(2, 1, 2),
        }, frame=frame, structure=sf)
        report.checks['normalized_T1_23'] = self.engine.is_zero(sf.c(0, 1, 2) - epsilon, chart).to_dict()
        report.notes.append("B, T3_23 and J change sign on the other sheet of the double cover")
        self._coordinate_extras(F, report, epsilon)
        return self._sample_invariants(report)

    def _coordinate_extras(self, F: AffineDistribution, report: InvariantReport, epsilon: int) -> None:
        """H, lambda and the derived J when a1 = x3 d1 + d2 + H d3 and a0 - d1 = J a1"""
        chart = F.chart
        x1, x2, x3 = chart.variables
        a1 = F.generators[0]
        if not (a1.components[0] - Var(x3)).is_zero_exact() or not (a1.components[1] - ONE).is_zero_exact():
            return
        h = a1.components[2]
        rest = F.drift - VectorField.coordinate(chart, 0)
        j_input = rest.components[1]
        if not (rest - a1.scale(j_input)).is_zero_exact():
            return
        h1 = differentiate(h, x1)
        root = call('sqrt', h1 * (-epsilon))
        env = self.engine.sample_points(chart, [h1], rng=self.cfg.rng())
        values, _ = evaluate_array(h1 * (-epsilon), env)
        if not (values > self.cfg.tol).all():
            report.notes.append("-epsilon*H_x1 is not positive on the box; coordinate invariants skipped")
            return
        j_derived = -report.invariants['B'] / root
        report.invariants['H'] = h
        report.invariants['J_input'] = j_input
        report.invariants['lambda'] = ONE / root
        report.invariants['J'] = j_derived
        same = self.engine.is_zero(j_derived - j_input, chart)
        flipped = self.engine.is_zero(j_derived + j_input, chart)
        report.checks['J_consistent'] = {
            'verdict': same.is_zero or flipped.is_zero,
            'sign': 1 if same.is_zero else (-1 if flipped.is_zero else 0),
        }

    # ------------------------------------------------------------------
    # s = n - 1
    # ------------------------------------------------------------------

    def corank1(self, F: AffineDistribution, pfaff: Optional[Sequence[Expression]] = None,
                require_invariants: bool = False) -> InvariantReport:
        """
        Reduction for n-1 controls on an n-manifold

        Args:
            F: Affine distribution with s = n - 1
            pfaff: Pfaff coordinates X^1..X^m for the 1-form annihilating the controls
            require_invariants: Raise when pfaff is missing instead of reporting k and the case only

        Returns:
            InvariantReport with k, the case and, given Pfaff coordinates, the J's
        """
        n = F.dim
        if F.rank != n - 1:
            raise UnsupportedSystemError(f"Corank-one reduction needs s=n-1, got n={n}, s={F.rank}")
        chart = F.chart
        logger.info("Stage 1: 0-adapted coframe from (a0, a1, ..., as)")
        frame = Frame(chart, (F.drift,) + F.generators)
        sf = self._structure(frame)
        eta1 = sf.coframe.forms[0]
        logger.info("Stage 2: Pfaff rank of eta1")
        k, top_vanishes = pfaff_rank(eta1, self.cfg)
        case = 1 if top_vanishes else 2
        three_manifold = None
        if n == 3:
            three_manifold = 3 if k == 1 else case
        label = CaseLabel(CORANK_ONE, case, pfaff_k=k, top_power_vanishes=top_vanishes, three_manifold_case=three_manifold)
        report = InvariantReport(label, frame=frame, structure=sf)
        report.checks['eta1'] = str(eta1)
        if pfaff is None:
            if require_invariants and (k > 0 or case == 2):
                raise MissingPfaffCoordinatesError(
                    f"Invariant extraction for k={k}, case {case} needs Pfaff coordinates"
                )
            report.notes.append("no Pfaff coordinates supplied: invariants not extracted")
            return report

        logger.info("Stage 3: verify Pfaff coordinates and extract invariants")
        xs = [as_expression(x) for x in pfaff]
        needed = 2 * k + 1 if case == 1 else 2 * k + 2
        if len(xs) < needed:
            raise MissingPfaffCoordinatesError(f"Need at least {needed} Pfaff coordinates, got {len(xs)}")
        dx = [gradient(x, chart) for x in xs]
        model = dx[0]
        for r in range(1, k + 1):
            model = model - dx[r].scale(xs[k + r])
        if case == 2:
            model = model.scale(ONE / xs[2 * k + 1])
        residual = eta1 - model
        verdicts = [self.engine.is_zero(c, chart) for c in residual.coeffs.values()]
        matched = all(v.is_zero for v in verdicts)
        report.checks['pfaff_coordinates'] = {
            'verified': matched,
            'residuals': [v.to_dict() for v in verdicts if not v.is_zero],
        }
        if not matched:
            raise MissingPfaffCoordinatesError("Supplied Pfaff coordinates do not reproduce eta1")
        v1 = F.drift
        invariants: Dict[str, Expression] = {}
        if case == 2:
            invariants['J1'] = -v1(xs[2 * k + 1])
        for s in range(1, k + 1):
            invariants[f"J{s + 1}"] = -v1(xs[k + s])
            invariants[f"J{k + s + 1}"] = v1(xs[s])
        report.invariants = dict(sorted(invariants.items(), key=lambda item: int(item[0][1:])))
        if case == 1:
            for j in range(needed, len(xs)):
                report.checks[f"drift_X{j + 1}"] = self.engine.is_zero(v1(xs[j]), chart).to_dict()
        return self._sample_invariants(report)

    # ------------------------------------------------------------------
    # Dispatch
    # ------------------------------------------------------------------

    def reduce(self, F: AffineDistribution, pfaff: Optional[Sequence[Expression]] = None) -> InvariantReport:
        """Run the reduction that matches (n, s)"""
        n, s = F.dim, F.rank
        if s == 1 and n == 2:
            return self.dim2_rank1(F)
        if s == 1 and n == 3:
            return self.dim3_rank1(F)
        if s == n - 1 and n >= 2:
            return self.corank1(F, pfaff)
        raise UnsupportedSystemError(f"No reduction for n={n}, s={s}; supported: {SUPPORTED_SYSTEMS}")


def adapt_dim2_rank1(F: AffineDistribution, cfg: Optional[SamplingConfig] = None) -> InvariantReport:
    return CoframeEngine(cfg).dim2_rank1(F)


def adapt_dim3_rank1(F: AffineDistribution, cfg: Optional[SamplingConfig] = None) -> InvariantReport:
    return CoframeEngine(cfg).dim3_rank1(F)


def adapt_corank1(F: AffineDistribution, cfg: Optional[SamplingConfig] = None,
                  pfaff: Optional[Sequence[Expression]] = None,
                  require_invariants: bool = False) -> InvariantReport:
    return CoframeEngine(cfg).corank1(F, pfaff, require_invariants)


def elkin_case(F: AffineDistribution, cfg: Optional[SamplingConfig] = None) -> int:
    """
    Three-case label of a rank-one affine distribution on a 3-manifold

    1: almost bracket-generating
    2: bracket-generating with span(a1, [a0, a1]) Frobenius
    3: bracket-generating otherwise

    Raises:
        ClassificationRejected: Neither class
    """
    if F.dim != 3 or F.rank != 1:
        raise UnsupportedSystemError(f"Three-case label needs n=3, s=1, got n={F.dim}, s={F.rank}")
    bracket_class = classify_bracket(F, cfg)
    if bracket_class.label == NEITHER:
        raise ClassificationRejected("Distribution is neither bracket-generating nor almost bracket-generating",
                                     NEITHER)
    if bracket_class.label == ALMOST_BRACKET_GENERATING:
        return 1
    a1 = F.generators[0]
    second = LinearDistribution(F.chart, (a1, lie_bracket(F.drift, a1)))
    return 2 if is_frobenius(second, cfg) else 3
