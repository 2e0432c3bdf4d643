"""Python bindings for the FPGA runtime simulator."""

from ._fos import (
    Board,
    Client,
    Daemon,
    FosError,
    Scenario,
    canonical_accelerator,
    canonical_shell,
    diff_traces,
    encode_run_request,
    load_scenario,
    oracle_trace,
    parse_accelerator,
    parse_scenario,
    parse_shell,
    run_scenario,
    run_suite,
    within_oracle_limits,
)

__all__ = [
    "Board",
    "Client",
    "Daemon",
    "FosError",
    "Scenario",
    "canonical_accelerator",
    "canonical_shell",
    "diff_traces",
    "encode_run_request",
    "load_scenario",
    "oracle_trace",
    "parse_accelerator",
    "parse_scenario",
    "parse_shell",
    "run_scenario",
    "run_suite",
    "within_oracle_limits",
]
