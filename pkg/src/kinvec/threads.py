"""Thread-count control through the ``KINVEC_NUM_THREADS`` environment variable."""

from __future__ import annotations

import contextlib
import os

ENV_VAR = "KINVEC_NUM_THREADS"


def num_threads() -> int:
    """Threads requested by the environment (default: 1, for reproducible timings)."""
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


@contextlib.contextmanager
def thread_limits(n: int | None = None):
    """Cap BLAS/OpenMP pools at ``n`` (default from the environment) inside the block."""
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n or num_threads()):
        yield
