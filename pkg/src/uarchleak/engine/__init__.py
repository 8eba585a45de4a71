from ..machine import WindowModel
from ._program import CompiledProgram, compile_program
from ._select import backend_name, set_backend
from .api import (
    DEFAULT_MAX_UOPS,
    ExecutionTrace,
    TransactionUnsupportedError,
    run,
    run_transaction,
)

__all__ = [
    "WindowModel",
    "CompiledProgram",
    "compile_program",
    "backend_name",
    "set_backend",
    "DEFAULT_MAX_UOPS",
    "ExecutionTrace",
    "TransactionUnsupportedError",
    "run",
    "run_transaction",
]
