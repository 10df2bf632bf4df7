"""Dense semidefinite programming: problem container, interior-point solver, modeling helpers."""

from .builder import ProgramBuilder, block_value
from .problem import (
    InconsistentConstraints,
    SdpOptions,
    SdpProblem,
    SdpSolution,
    Status,
    independent_rows,
    preprocess,
)
from .sdpa import read_sdpa, write_sdpa
from .solver import solve

__all__ = [
    "InconsistentConstraints",
    "ProgramBuilder",
    "SdpOptions",
    "SdpProblem",
    "SdpSolution",
    "Status",
    "block_value",
    "independent_rows",
    "preprocess",
    "read_sdpa",
    "solve",
    "write_sdpa",
]
