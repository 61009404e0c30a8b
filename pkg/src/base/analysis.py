"""
Analysis pipeline - Runs every check on a system and collects a report

Stages:
1. Strictness and constant type
2. Derived flag and bracket class
3. Three-case label (n = 3, s = 1)
4. Reduction and invariants
"""
import logging
from typing import Any, Dict, List, Optional

from src.config import SamplingConfig
from src.base.errors import ClassificationRejected, NonConstantTypeError, PafError, UnsupportedSystemError
from src.base.flags import affine_flag, classify_bracket, constant_type_check
from src.base.coframe_engine import DIM3_RANK1, SUPPORTED_SYSTEMS, CoframeEngine, elkin_case
from src.base.equiv import (
    INCONCLUSIVE_VERDICT, REFUTED_WITH_WITNESS, VERIFIED_AT_SAMPLES,
    check_point_affine_equiv, invariant_signature_compare
)
from src.utils.system_format import SystemSpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

STATUS_OK = 'ok'
STATUS_REJECTED = 'rejected'


def _supported(n: int, s: int) -> bool:
    return (s == 1 and n in (2, 3)) or (n >= 2 and s == n - 1)


def _header(spec: SystemSpec, cfg: SamplingConfig) -> Dict[str, Any]:
    return {
        'schema': SCHEMA_VERSION,
        'system': spec.name,
        'seed': cfg.seed,
        'config': cfg.to_dict(),
        'warnings': [],
    }


def _reject(report: Dict[str, Any], error: PafError) -> Dict[str, Any]:
    report['status'] = STATUS_REJECTED
    rejection: Dict[str, Any] = {'type': type(error).__name__, 'message': str(error)}
    if isinstance(error, NonConstantTypeError):
        rejection['witnesses'] = error.witnesses
    if isinstance(error, ClassificationRejected):
        rejection['bracket_class'] = error.bracket_class
    report['rejection'] = rejection
    logger.warning(f"System '{report['system']}' rejected: {error}")
    return report


def analyze(spec: SystemSpec, cfg: Optional[SamplingConfig] = None, verbose: bool = False) -> Dict[str, Any]:
    """
    Analyze one system

    Args:
        spec: Parsed system
        cfg: Sampling configuration
        verbose: Include sample points with every sampled table

    Returns:
        Report dictionary; 'status' is 'rejected' for non-constant type or Neither-class input

    Raises:
        UnsupportedSystemError: (n, s) has no reduction
    """
    cfg = cfg or SamplingConfig()
    F = spec.distribution()
    n, s = F.dim, F.rank
    report = _header(spec, cfg)
    report.update({'dimension': n, 'controls': s})
    if not _supported(n, s):
        raise UnsupportedSystemError(f"No reduction for n={n}, s={s}; supported: {SUPPORTED_SYSTEMS}")

    logger.info(f"Analyzing '{spec.name}' (n={n}, s={s})")
    flag = affine_flag(F, cfg, strict=False)
    report['flag'] = flag.to_dict()
    constant_type = constant_type_check(F, cfg, flag)
    report['constant_type'] = constant_type.to_dict()
    report['strictly_affine'] = constant_type.checks[0].passed
    report['bracket_class'] = classify_bracket(F, cfg, flag).to_dict()
    if not constant_type.passed:
        failed = ", ".join(c.name for c in constant_type.failed())
        return _reject(report, NonConstantTypeError(f"Constant-type check failed: {failed}",
                                                    constant_type.witnesses[:5]))

    try:
        if n == 3 and s == 1:
            report['elkin_case'] = elkin_case(F, cfg)
        invariants = CoframeEngine(cfg).reduce(F, spec.pfaff)
    except (ClassificationRejected, NonConstantTypeError) as e:
        return _reject(report, e)

    report['case'] = invariants.label.to_dict()
    report['invariants'] = invariants.to_dict(verbose)
    if 'elkin_case' in report and invariants.label.theorem == DIM3_RANK1:
        if report['elkin_case'] != invariants.label.case:
            report['warnings'].append(
                f"three-case label {report['elkin_case']} disagrees with reduction case {invariants.label.case}"
            )
    report['status'] = STATUS_OK
    logger.info(f"'{spec.name}': {invariants.label}")
    return report


def equiv_check(spec: SystemSpec, cfg: Optional[SamplingConfig] = None) -> Dict[str, Any]:
    """
    Check the bundled map between the two systems of a file, then compare invariant signatures

    Returns:
        Report with the map verdict, the signature verdict and a combined verdict
    """
    cfg = cfg or SamplingConfig()
    if spec.system2 is None or spec.map is None:
        raise PafError(f"'{spec.name}' needs [map] and [system2] sections for an equivalence check")
    report = _header(spec, cfg)
    report['system2'] = spec.system2.name
    FX = spec.distribution()
    FY = spec.system2.distribution()
    mapped = check_point_affine_equiv(spec.diffeo(), FX, FY, cfg)
    report['map'] = mapped.to_dict()
    try:
        signature = invariant_signature_compare(FX, FY, cfg, spec.pfaff, spec.system2.pfaff)
        report['signature'] = signature.to_dict()
        signature_refuted = signature.verdict == REFUTED_WITH_WITNESS
    except (ClassificationRejected, NonConstantTypeError, UnsupportedSystemError) as e:
        report['signature'] = {'verdict': 'Skipped', 'reason': str(e)}
        report['warnings'].append(f"signature comparison skipped: {e}")
        signature_refuted = False

    if mapped.verdict == REFUTED_WITH_WITNESS or signature_refuted:
        verdict = REFUTED_WITH_WITNESS
    elif mapped.verdict == VERIFIED_AT_SAMPLES:
        verdict = VERIFIED_AT_SAMPLES
    else:
        verdict = INCONCLUSIVE_VERDICT
    report['verdict'] = verdict
    report['status'] = STATUS_OK
    logger.info(f"Equivalence '{spec.name}' vs '{spec.system2.name}': {verdict}")
    return report


def case_key(record: Dict[str, Any]) -> str:
    """Histogram key of a batch record"""
    report = record.get('report') or {}
    if not record.get('success'):
        return 'error'
    if report.get('status') == STATUS_REJECTED:
        return 'rejected'
    case = report.get('case')
    if case:
        return f"{case['theorem']} case {case['case']}"
    return report.get('verdict', 'unknown')


def summarize_batch(records: List[Dict[str, Any]], total_time: float = 0.0) -> Dict[str, Any]:
    """
    Totals, case histogram and failures of a batch run

    Args:
        records: One record per system, as written to results.jsonl
        total_time: Wall time of the run

    Returns:
        Summary dictionary
    """
    total = len(records)
    successful = sum(1 for r in records if r.get('success'))
    rejected = sum(1 for r in records if case_key(r) == 'rejected')
    cases: Dict[str, int] = {}
    for r in records:
        key = case_key(r)
        cases[key] = cases.get(key, 0) + 1
    times = [r.get('processing_time', 0.0) for r in records]
    return {
        'total': total,
        'successful': successful,
        'rejected': rejected,
        'failed': total - successful,
        'success_rate': round(successful / total, 4) if total else 0.0,
        'average_time': round(sum(times) / total, 4) if total else 0.0,
        'total_time': round(total_time, 2),
        'cases': cases,
        'failures': [{'system': r.get('system'), 'error': r.get('error')} for r in records if not r.get('success')],
    }
