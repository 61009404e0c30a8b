#!/usr/bin/env python3
"""
Generate a batch summary from results.jsonl
Case histogram, success rate and failures
"""
import sys
import argparse
import json
from pathlib import Path
from typing import List, Dict, Any

import jsonlines

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.base.analysis import summarize_batch
from src.utils.report_templates import ReportTemplates


def load_results(jsonl_path: str) -> List[Dict[str, Any]]:
    """Load batch records, skipping blank lines"""
    with jsonlines.open(jsonl_path, mode='r') as reader:
        return [record for record in reader.iter(skip_empty=True)]


def main() -> None:
    parser = argparse.ArgumentParser(description='Summarize a batch results file')
    parser.add_argument('--results_jsonl', type=str, required=True, help='Batch results JSONL')
    parser.add_argument('--output_json', type=str, default=None, help='Optional summary JSON path')
    args = parser.parse_args()

    results = load_results(args.results_jsonl)
    summary = summarize_batch(results, sum(r.get('processing_time', 0.0) for r in results))
    if args.output_json:
        with open(args.output_json, 'w', encoding='utf-8') as f:
            json.dump(summary, f, ensure_ascii=False, indent=2, sort_keys=True)
    sys.stdout.write(ReportTemplates.format_summary(summary))


if __name__ == "__main__":
    main()
