"""Config parsing, experiment orchestration, and the fpforge CLI.

Submodules import lazily so `--threads` can cap the BLAS pool before numpy
loads; import from fpforge.cli_harness.config / .experiment / .tables
directly, or use the attributes below.
"""

from __future__ import annotations

_EXPORTS = {
    "ConfigError": "config",
    "ExperimentConfig": "config",
    "parse_config": "config",
    "validate_config_dict": "config",
    "EXPERIMENT_KINDS": "config",
    "ARMS": "config",
    "run_experiment": "experiment",
    "RunRecord": "experiment",
    "StageError": "experiment",
    "emit_table": "tables",
    "main": "main",
    "build_parser": "main",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        import importlib
        mod = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(mod, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
