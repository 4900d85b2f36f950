"""Discrete-event router/link model.

Two engine backends share one contract: a compiled extension
(``_engine_cy``) and the pure Python reference (``_engine_py``).  The
compiled one is used when it has been built, unless ``DFPSIM_PURE_PYTHON``
is set to a non-empty value other than ``0``.
"""

import os

from ..errors import ArgumentError
from ._engine_py import Engine as PyEngine
from .events import CHUNK_ARRIVE, CHUNK_DEPART, INJECT, EventQueue
from .plan import EngineConfig, EnginePlan, EngineResult, SimulationReport
from .state import Chunk, RouterState, TerminalState, port_score, transmit_time

try:
    from ._engine_cy import Engine as CyEngine
except ImportError:  # extension not built
    CyEngine = None

BACKENDS = {"python": PyEngine}
if CyEngine is not None:
    BACKENDS["compiled"] = CyEngine

if CyEngine is not None and os.environ.get("DFPSIM_PURE_PYTHON", "") in ("", "0"):
    Engine = CyEngine
else:
    Engine = PyEngine


def get_engine(backend=None):
    """Engine class for ``backend`` (``"python"``, ``"compiled"``, or the default)."""
    if backend is None:
        return Engine
    try:
        return BACKENDS[backend]
    except KeyError:
        raise ArgumentError(f"engine backend {backend!r} unavailable; have {sorted(BACKENDS)}") from None


__all__ = [
    "BACKENDS",
    "CHUNK_ARRIVE",
    "CHUNK_DEPART",
    "Chunk",
    "CyEngine",
    "Engine",
    "EngineConfig",
    "EnginePlan",
    "EngineResult",
    "EventQueue",
    "INJECT",
    "PyEngine",
    "RouterState",
    "SimulationReport",
    "TerminalState",
    "get_engine",
    "port_score",
    "transmit_time",
]
