"""
Report templates - JSON and text rendering of analysis reports
"""
import json
from typing import Any, Dict, List


class ReportTemplates:
    """
    Report Template Manager

    JSON output is canonical (sorted keys); text output is one section per stage.
    """

    @staticmethod
    def render_json(report: Dict[str, Any]) -> str:
        return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False)

    @staticmethod
    def render(report: Dict[str, Any], fmt: str = "json") -> str:
        if fmt == "text":
            if 'map' in report:
                return ReportTemplates.format_equivalence(report)
            return ReportTemplates.format_analysis(report)
        return ReportTemplates.render_json(report)

    @staticmethod
    def _header(report: Dict[str, Any]) -> List[str]:
        cfg = report.get('config', {})
        return [
            f"# System: {report.get('system', '?')}",
            f"seed={report.get('seed')} samples={cfg.get('samples')} tol={cfg.get('tol')}",
            "",
        ]

    @staticmethod
    def _table(samples: Dict[str, List[float]], limit: int = 5) -> List[str]:
        lines = []
        for name, values in samples.items():
            shown = ", ".join(f"{v:.6g}" for v in values[:limit])
            more = f", ... ({len(values)} samples)" if len(values) > limit else ""
            lines.append(f"    {name}: {shown}{more}")
        return lines

    @staticmethod
    def format_analysis(report: Dict[str, Any]) -> str:
        """
        Text rendering of an analyze report

        Args:
            report: Dictionary returned by analyze()

        Returns:
            Multi-line text
        """
        lines = ReportTemplates._header(report)
        lines.append(f"## Shape\n  n={report.get('dimension')} s={report.get('controls')}")
        lines.append(f"## Strictly affine\n  {report.get('strictly_affine')}")
        ctype = report.get('constant_type', {})
        lines.append(f"## Constant type\n  passed={ctype.get('passed')}")
        for check in ctype.get('checks', []):
            if not check.get('passed'):
                lines.append(f"  failed: {check['name']} {check.get('detail', '')}")
                for w in check.get('witnesses', [])[:3]:
                    lines.append(f"    witness: {w}")
        flag = report.get('flag', {})
        lines.append(f"## Flag\n  growth vector {tuple(flag.get('growth_vector', []))}")
        if flag.get('completion_ranks'):
            lines.append(f"  with drift {tuple(flag['completion_ranks'])}")
        bracket = report.get('bracket_class', {})
        lines.append(f"## Bracket class\n  {bracket.get('label')} (rank {bracket.get('rank')})")
        if 'elkin_case' in report:
            lines.append(f"## Three-case label\n  case {report['elkin_case']}")
        if report.get('status') == 'rejected':
            rejection = report.get('rejection', {})
            lines.append(f"## Rejected\n  {rejection.get('type')}: {rejection.get('message')}")
        if 'case' in report:
            case = report['case']
            extras = {k: v for k, v in case.items() if k not in ('theorem', 'case')}
            lines.append(f"## Case\n  {case['theorem']} case {case['case']} {extras if extras else ''}".rstrip())
            inv = report.get('invariants', {})
            if inv.get('invariants'):
                lines.append("## Invariants")
                for name, expr in inv['invariants'].items():
                    lines.append(f"  {name} = {expr}")
                lines.append("  sampled:")
                lines += ReportTemplates._table(inv.get('samples', {}))
            for name, check in inv.get('checks', {}).items():
                lines.append(f"  check {name}: {check}")
            for note in inv.get('notes', []):
                lines.append(f"  note: {note}")
        for warning in report.get('warnings', []):
            lines.append(f"warning: {warning}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_equivalence(report: Dict[str, Any]) -> str:
        """Text rendering of an equiv report"""
        lines = ReportTemplates._header(report)
        lines.append(f"## Map check ({report.get('system')} -> {report.get('system2')})")
        mapped = report.get('map', {})
        lines.append(f"  {mapped.get('verdict')}")
        for name, value in mapped.get('residuals', {}).items():
            lines.append(f"  residual {name}: {value:.3e}")
        if mapped.get('witness'):
            lines.append(f"  witness: {mapped['witness']}")
        signature = report.get('signature', {})
        lines.append(f"## Invariant signature\n  {signature.get('verdict')}")
        if 'distance' in signature:
            lines.append(f"  distance {signature['distance']:.3e} (threshold {signature['threshold']:.3e})")
        if signature.get('witness'):
            lines.append(f"  witness: {signature['witness']}")
        lines.append(f"## Verdict\n  {report.get('verdict')}")
        for warning in report.get('warnings', []):
            lines.append(f"warning: {warning}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_summary(summary: Dict[str, Any]) -> str:
        """Text rendering of a batch summary"""
        lines = [
            "# Batch summary",
            f"total={summary.get('total', 0)} successful={summary.get('successful', 0)} "
            f"rejected={summary.get('rejected', 0)} failed={summary.get('failed', 0)}",
            f"success rate {summary.get('success_rate', 0.0):.1%}",
            f"average time {summary.get('average_time', 0.0):.2f}s",
            "",
            "## Cases",
        ]
        for case, count in sorted(summary.get('cases', {}).items()):
            lines.append(f"  {case}: {count}")
        failures = summary.get('failures', [])
        if failures:
            lines.append("## Failures")
            for f in failures:
                lines.append(f"  {f.get('system')}: {f.get('error')}")
        return "\n".join(lines) + "\n"
