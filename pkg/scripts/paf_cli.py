#!/usr/bin/env python3
"""
Point-affine distribution analyzer - command line interface

Subcommands:
    analyze <file>     flags, classification, reduction and invariants of one system
    equiv <file>       check the bundled map between the two systems of a file
    examples [name]    list the bundled systems, or print one
    batch <dir>        analyze every .paf file of a directory with a process pool
"""
import sys
import os
import argparse
import json
import logging
import time
import concurrent.futures
from pathlib import Path
from typing import List, Dict, Any, Optional, Tuple
import traceback
import datetime

import jsonlines
from tqdm import tqdm

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.config import Config, SamplingConfig
from src.base.errors import ClassificationRejected, NonConstantTypeError, PafError
from src.base.analysis import STATUS_REJECTED, analyze, equiv_check, summarize_batch
from src.utils.report_templates import ReportTemplates
from src.utils.system_format import load_system

SYSTEMS_DIR = PROJECT_ROOT / "data" / "systems"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


def setup_logging(log_level: str = "WARNING", log_file: Optional[str] = None) -> logging.Logger:
    """Configure root logging on stderr, optionally also to a file"""
    numeric_level = getattr(logging, log_level.upper(), None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.WARNING

    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode='a'))

    logging.basicConfig(
        level=numeric_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )
    return logging.getLogger(__name__)


logger = logging.getLogger(__name__)


def _add_sampling_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--samples', type=int, default=None,
                        help='Sample points per check (default: PAF_SAMPLES or 100)')
    parser.add_argument('--tol', type=float, default=None,
                        help='Absolute zero tolerance (default: PAF_TOL or 1e-9)')
    parser.add_argument('--seed', type=int, default=None,
                        help='RNG seed, echoed in the report (default: PAF_SEED or 42)')
    parser.add_argument('--format', dest='output_format', choices=['json', 'text'], default=None,
                        help='Report format (default: json)')
    parser.add_argument('--verbose', action='store_true',
                        help='Debug logging and sample points in every table')
    parser.add_argument('--log_level', type=str, default=None,
                        help='Log level (default: PAF_LOG_LEVEL or WARNING)')


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(prog='paf', description='Point-affine distribution analyzer')
    sub = parser.add_subparsers(dest='command', required=True)

    p_analyze = sub.add_parser('analyze', help='Analyze one system file')
    p_analyze.add_argument('file', type=str, help='Path to a .paf file')
    _add_sampling_args(p_analyze)

    p_equiv = sub.add_parser('equiv', help='Check the map between the two systems of a file')
    p_equiv.add_argument('file', type=str, help='Path to a .paf file with [map] and [system2]')
    _add_sampling_args(p_equiv)

    p_examples = sub.add_parser('examples', help='List or print the bundled systems')
    p_examples.add_argument('name', type=str, nargs='?', default=None, help='Bundled system name')

    p_batch = sub.add_parser('batch', help='Analyze every .paf file of a directory')
    p_batch.add_argument('directory', type=str, help='Directory of .paf files')
    p_batch.add_argument('--output_dir', type=str, required=True, help='Output directory')
    p_batch.add_argument('--num_processors', type=int, default=None,
                         help='Worker processes (default: PAF_NUM_PROCESSORS or 4)')
    _add_sampling_args(p_batch)

    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Environment defaults overridden by command line flags"""
    config = Config.get_default_config()
    for key in ('samples', 'tol', 'seed', 'output_format', 'num_processors', 'log_level'):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, 'verbose', False):
        config['log_level'] = 'DEBUG'
        config['verbose'] = True
    Config.validate_config(config)
    return config


def run_system(path: str, config: Dict[str, Any]) -> Dict[str, Any]:
    """Analyze a file, or check its map when it carries a second system"""
    spec = load_system(path)
    cfg = SamplingConfig.from_config(config)
    if spec.system2 is not None and spec.map is not None:
        return equiv_check(spec, cfg)
    return analyze(spec, cfg, verbose=config.get('verbose', False))


def process_single_system(args: Tuple[str, Dict[str, Any]]) -> Dict[str, Any]:
    """Batch worker: one record per system, never raising"""
    path, config = args
    result: Dict[str, Any] = {
        'path': path,
        'system': Path(path).stem,
        'timestamp': datetime.datetime.now().isoformat(),
        'success': False,
        'error': None
    }

    start_time = time.time()
    try:
        report = run_system(path, config)
        result.update({
            'success': True,
            'status': report.get('status'),
            'report': report,
        })
        logger.info(f"Processed {result['system']}: {report.get('status')}")
    except Exception as e:
        logger.error(f"Processing {result['system']} failed: {e}")
        logger.error(f"Stack trace:\n{traceback.format_exc()}")
        result.update({
            'error': str(e),
            'error_type': type(e).__name__,
            'stack_trace': traceback.format_exc(),
        })
    result['processing_time'] = round(time.time() - start_time, 4)
    return result


def process_systems_batch(paths: List[str], config: Dict[str, Any], output_jsonl: str) -> List[Dict[str, Any]]:
    """Run process_single_system over a pool, appending each record as it finishes"""
    results: List[Dict[str, Any]] = []
    num_processors = max(1, min(config['num_processors'], len(paths)))
    logger.info(f"Starting batch of {len(paths)} systems on {num_processors} processes")

    with concurrent.futures.ProcessPoolExecutor(max_workers=num_processors) as executor:
        future_to_path = {
            executor.submit(process_single_system, (path, config)): path
            for path in paths
        }
        with jsonlines.open(output_jsonl, mode='a') as writer:
            for future in tqdm(concurrent.futures.as_completed(future_to_path),
                               total=len(future_to_path), desc='systems', file=sys.stderr):
                path = future_to_path[future]
                try:
                    result = future.result()
                except Exception as e:
                    logger.error(f"Worker for {path} crashed: {e}")
                    result = {
                        'path': path,
                        'system': Path(path).stem,
                        'success': False,
                        'error': str(e),
                        'stack_trace': traceback.format_exc(),
                        'processing_time': 0.0,
                    }
                results.append(result)
                writer.write(result)

    logger.info(f"Batch finished, successful: {sum(1 for r in results if r.get('success'))}/{len(results)}")
    return results


def list_examples() -> List[str]:
    return sorted(p.stem for p in SYSTEMS_DIR.glob('*.paf'))


def cmd_examples(args: argparse.Namespace) -> int:
    if args.name is None:
        for name in list_examples():
            print(name)
        return EXIT_OK
    path = SYSTEMS_DIR / f"{Path(args.name).stem}.paf"
    if not path.exists():
        print(f"error: no bundled system '{args.name}'; available: {', '.join(list_examples())}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(path.read_text(encoding='utf-8'))
    return EXIT_OK


def cmd_single(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    cfg = SamplingConfig.from_config(config)
    spec = load_system(args.file)
    if args.command == 'equiv':
        report = equiv_check(spec, cfg)
    else:
        report = analyze(spec, cfg, verbose=config.get('verbose', False))
    sys.stdout.write(ReportTemplates.render(report, config['output_format']))
    if config['output_format'] == 'json':
        sys.stdout.write("\n")
    return EXIT_REJECTED if report.get('status') == STATUS_REJECTED else EXIT_OK


def cmd_batch(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    if not os.path.isdir(args.directory):
        print(f"error: input directory does not exist: {args.directory}", file=sys.stderr)
        return EXIT_ERROR
    os.makedirs(args.output_dir, exist_ok=True)
    paths = sorted(str(p) for p in Path(args.directory).glob('*.paf'))
    if not paths:
        print(f"error: no .paf files in {args.directory}", file=sys.stderr)
        return EXIT_ERROR

    output_jsonl = os.path.join(args.output_dir, 'results.jsonl')
    if os.path.exists(output_jsonl):
        logger.info(f"Clearing existing results file: {output_jsonl}")
        open(output_jsonl, 'w').close()

    start_time = time.time()
    results = process_systems_batch(paths, config, output_jsonl)
    total_time = time.time() - start_time

    summary = summarize_batch(results, total_time)
    summary.update({
        'timestamp': datetime.datetime.now().isoformat(),
        'config': {k: v for k, v in config.items() if k != 'verbose'},
    })
    summary_file = os.path.join(args.output_dir, 'summary.json')
    with open(summary_file, 'w', encoding='utf-8') as f:
        json.dump(summary, f, ensure_ascii=False, indent=2, sort_keys=True)

    sys.stdout.write(ReportTemplates.format_summary(summary))
    logger.info(f"Results saved to: {output_jsonl}")
    logger.info(f"Summary saved to: {summary_file}")
    return EXIT_OK if summary['failed'] == 0 else EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code"""
    args = parse_args(argv)
    config = build_config(args)
    log_file = None
    if args.command == 'batch':
        os.makedirs(args.output_dir, exist_ok=True)
        log_file = os.path.join(args.output_dir, 'processing.log')
    setup_logging(config['log_level'], log_file)

    try:
        if args.command == 'examples':
            return cmd_examples(args)
        if args.command == 'batch':
            return cmd_batch(args, config)
        return cmd_single(args, config)
    except (ClassificationRejected, NonConstantTypeError) as e:
        print(f"rejected: {e}", file=sys.stderr)
        return EXIT_REJECTED
    except (PafError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
