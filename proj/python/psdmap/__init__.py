"""Spectrum map estimation from quantized, compressed power measurements."""

from ._core import (
    Config,
    ConfigError,
    DimensionError,
    Error,
    IoError,
    MapEstimate,
    SolverError,
    evaluate,
    fit,
    online_trace,
    run_cli,
    simulate,
    sweep_csv,
)

__all__ = [
    "Config",
    "ConfigError",
    "DimensionError",
    "Error",
    "IoError",
    "MapEstimate",
    "SolverError",
    "evaluate",
    "fit",
    "online_trace",
    "run_cli",
    "simulate",
    "sweep_csv",
]
