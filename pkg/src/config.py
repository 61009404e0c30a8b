"""
Configuration Management - Sampling and runtime parameters
"""
import os
import logging
from dataclasses import dataclass, asdict
from typing import Dict, Any

import numpy as np

logger = logging.getLogger(__name__)

class Config:
    """System configuration class"""

    @staticmethod
    def get_default_config() -> Dict[str, Any]:
        """Get default configuration"""
        return {
            # Sampling configuration
            'samples': int(os.getenv('PAF_SAMPLES', '100')),
            'tol': float(os.getenv('PAF_TOL', '1e-9')),
            'seed': int(os.getenv('PAF_SEED', '42')),
            'zero_samples': int(os.getenv('PAF_ZERO_SAMPLES', '50')),
            'max_retries': int(os.getenv('PAF_MAX_RETRIES', '20')),
            'rank_rtol': float(os.getenv('PAF_RANK_RTOL', '1e-8')),

            # Processing configuration
            'num_processors': int(os.getenv('PAF_NUM_PROCESSORS', '4')),

            # Output configuration
            'output_format': os.getenv('PAF_OUTPUT_FORMAT', 'json'),

            # Logging configuration
            'log_level': os.getenv('PAF_LOG_LEVEL', 'WARNING'),
        }

    @staticmethod
    def validate_config(config: Dict[str, Any]) -> bool:
        """Validate configuration validity, clamping bad values in place"""
        if config.get('samples', 0) < 1:
            logger.warning("Sample count must be at least 1")
            config['samples'] = 1

        if config.get('zero_samples', 0) < 1:
            logger.warning("Zero-test sample count must be at least 1")
            config['zero_samples'] = 1

        if not config.get('tol', 0) > 0:
            logger.warning("Tolerance must be positive, using 1e-9")
            config['tol'] = 1e-9

        if not config.get('rank_rtol', 0) > 0:
            logger.warning("Rank threshold must be positive, using 1e-8")
            config['rank_rtol'] = 1e-8

        if config.get('max_retries', 0) < 1:
            logger.warning("Retry cap must be at least 1")
            config['max_retries'] = 1

        if config.get('num_processors', 0) < 1:
            logger.warning("Number of processors must be at least 1")
            config['num_processors'] = 1

        if config.get('output_format') not in ('json', 'text'):
            logger.warning(f"Unknown output format '{config.get('output_format')}', using json")
            config['output_format'] = 'json'

        return True


@dataclass(frozen=True)
class SamplingConfig:
    """
    Sampling parameters shared by every numeric check

    Args:
        samples: Points used for ranks, flags and invariant tables
        tol: Absolute tolerance for zero verdicts
        seed: RNG seed, echoed in every report
        zero_samples: Points used by a single zero test
        max_retries: Resampling cap multiplier for domain errors
        rank_rtol: Singular values below rank_rtol * max count as zero
    """
    samples: int = 100
    tol: float = 1e-9
    seed: int = 42
    zero_samples: int = 50
    max_retries: int = 20
    rank_rtol: float = 1e-8

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "SamplingConfig":
        """Build from a Config dictionary, ignoring unrelated keys"""
        return cls(
            samples=int(config.get('samples', 100)),
            tol=float(config.get('tol', 1e-9)),
            seed=int(config.get('seed', 42)),
            zero_samples=int(config.get('zero_samples', 50)),
            max_retries=int(config.get('max_retries', 20)),
            rank_rtol=float(config.get('rank_rtol', 1e-8)),
        )

    def rng(self) -> np.random.Generator:
        """Fresh generator seeded from this config"""
        return np.random.default_rng(self.seed)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
