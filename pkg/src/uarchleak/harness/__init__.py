from .config import ConfigError, defaults, parse_file, parse_text
from .hexdump import emit_latency_csv, format_hexdump, parse_hexdump
from .scenario import Report, Scenario, ScenarioError, run_scenario

__all__ = [
    "ConfigError",
    "defaults",
    "parse_file",
    "parse_text",
    "emit_latency_csv",
    "format_hexdump",
    "parse_hexdump",
    "Report",
    "Scenario",
    "ScenarioError",
    "run_scenario",
]
