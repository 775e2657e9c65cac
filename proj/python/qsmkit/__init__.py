"""Desk-scale QSM toolkit: dipole physics, classical baselines, and the
INR-completed kernel trainer, bound from the C++ core.

Arrays are C-ordered ``(nz, ny, nx)`` so the fastest axis is x, matching the
native volume layout.
"""

from ._core import (
    QsmError,
    cone_mask,
    cosmos,
    dipole_kernel,
    forward,
    load_volume,
    metrics,
    orientation_sweep,
    phantom_from_config,
    save_volume,
    set_thread_count,
    tkd,
    train_from_config,
    weight_mask,
)

__all__ = [
    "QsmError",
    "cone_mask",
    "cosmos",
    "dipole_kernel",
    "forward",
    "load_volume",
    "metrics",
    "orientation_sweep",
    "phantom_from_config",
    "save_volume",
    "set_thread_count",
    "tkd",
    "train_from_config",
    "weight_mask",
]

__version__ = "0.1.0"
