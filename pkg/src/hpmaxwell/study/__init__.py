"""Convergence and pollution studies: configuration, sweeps, CSV and SVG output."""

from .config import ConfigError, StudyConfig, format_k, load_config, parse_complex, parse_config
from .report import CSV_COLUMNS, csv_name, emit_csv, emit_plot, read_csv
from .runner import (
    RunRecord,
    StudyError,
    check_dof_cap,
    fitted_slope,
    projected_dofs,
    required_nk,
    run_study,
    solve_on,
)

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "RunRecord",
    "StudyConfig",
    "StudyError",
    "check_dof_cap",
    "csv_name",
    "emit_csv",
    "emit_plot",
    "fitted_slope",
    "format_k",
    "load_config",
    "parse_complex",
    "parse_config",
    "projected_dofs",
    "read_csv",
    "required_nk",
    "run_study",
    "solve_on",
]
