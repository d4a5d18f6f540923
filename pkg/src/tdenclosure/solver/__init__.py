"""Yee-lattice FDTD forward solver with a staircase impedance boundary."""

from .fdtd import (FREE_SPACE, WITH_OBSTACLE, FieldState, RunRecord, apply_impedance_bc,
                   check_pair, new_state, observe, run, step)
from .grid import YeeGrid, build_grid, impedance_coefficients, minimal_box, plan_box
from .kernels import BACKEND, BACKENDS, get_backend

__all__ = [
    "BACKEND", "BACKENDS", "FREE_SPACE", "WITH_OBSTACLE", "FieldState", "RunRecord", "YeeGrid",
    "apply_impedance_bc", "build_grid", "check_pair", "get_backend", "impedance_coefficients",
    "minimal_box", "new_state", "observe", "plan_box", "run", "step",
]
