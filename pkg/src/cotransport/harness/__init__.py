from .scenario import (
    Scenario,
    ScenarioError,
    ValidationReport,
    build_constraint_sets,
    load_scenario,
    parse_scenario,
    validate_scenario,
)
from .runner import RunResult, Violation, run
from .bench import BenchReport, run_bench
from .telemetry import TelemetryRecord, emit_plot_bundles, write_telemetry
