"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the pure
numpy twin takes over. Both expose the same three entry points with
bit-identical output, so the choice only affects speed. ``use()`` exists
for tests and benchmarks that need to pin a side explicitly.
"""
from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the install
    _ckernels = None

_active: ModuleType = _ckernels if _ckernels is not None else _pykernels


def available() -> tuple[str, ...]:
    return ("pure", "compiled") if _ckernels is not None else ("pure",)


def name() -> str:
    return "compiled" if _active is _ckernels else "pure"


def active() -> ModuleType:
    return _active


def use(which: str) -> str:
    """Pin the backend ('pure', 'compiled', or 'auto'). Returns the name."""
    global _active
    if which == "auto":
        _active = _ckernels if _ckernels is not None else _pykernels
    elif which == "pure":
        _active = _pykernels
    elif which == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not installed")
        _active = _ckernels
    else:
        raise ValueError(f"unknown backend {which!r}")
    return name()


def posterior_tables(*args, **kwargs):
    return _active.posterior_tables(*args, **kwargs)


def step_states(*args, **kwargs):
    return _active.step_states(*args, **kwargs)


def sample_exact(*args, **kwargs):
    return _active.sample_exact(*args, **kwargs)
