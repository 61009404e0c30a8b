#!/usr/bin/env python3
"""
paf - Point-affine distribution analyzer

Usage:
    python main.py analyze data/systems/boat.paf --format text
    python main.py equiv data/systems/dim2_flat_pair.paf
    python main.py examples [name]
    python main.py batch data/systems --output_dir output
"""
import sys

from scripts.paf_cli import main

if __name__ == "__main__":
    sys.exit(main())
