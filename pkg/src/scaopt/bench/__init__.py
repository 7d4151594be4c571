"""
Benchmark harness: configuration files, trace recording, reference
oracles, experiment runners, the acceptance battery and the CLI.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .oracles import oracle_grid_local_minima, oracle_gridmin, oracle_proxgrad
from .trace import (ENV_OUTPUT_DIR, SCHEMA, Trace, TraceWriter, default_output_dir,
                    read_summary, read_trace)

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config",
           "oracle_grid_local_minima", "oracle_gridmin", "oracle_proxgrad",
           "ENV_OUTPUT_DIR", "SCHEMA", "Trace", "TraceWriter", "default_output_dir",
           "read_summary", "read_trace"]
