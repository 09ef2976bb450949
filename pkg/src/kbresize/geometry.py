"""Origin-anchored maps and distances on the unit Poincare ball (curvature 1).

All functions accept a single vector of shape ``(dim,)`` or a batch of
shape ``(n, dim)`` and always compute in float64.
"""

import threading

import numpy as np

from .errors import DomainError, InvalidInputError

#: Largest norm an embedded point may have.  ``tanh`` saturates to 1.0 in
#: float64 for arguments above ~19, where the distance formula diverges.
MAX_NORM = 1.0 - 1e-12


class _Counter:
    def __init__(self):
        self._lock = threading.Lock()
        self.value = 0

    def add(self, n):
        with self._lock:
            self.value += int(n)


_distance_counter = _Counter()


def distance_evaluations():
    """Total number of hyperbolic distances computed so far in this process."""
    return _distance_counter.value


def reset_distance_evaluations():
    with _distance_counter._lock:
        _distance_counter.value = 0


def _record_distances(n):
    _distance_counter.add(n)


def as_float_array(x, name, copy=False):
    """``x`` as a float64 array; ragged or non-numeric input raises :class:`InvalidInputError`."""
    try:
        return np.array(x, dtype=np.float64, copy=True) if copy else np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not a numeric array: {exc}") from None


def _as_points(x, name):
    arr = as_float_array(x, name)
    if arr.ndim not in (1, 2) or arr.shape[-1] < 1:
        raise InvalidInputError(f"{name} must have shape (dim,) or (n, dim) with dim >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def _norms(arr):
    sq = np.einsum("...i,...i->...", arr, arr)[..., None]
    tiny = sq < 1e-280
    if np.any(tiny):
        # the sum of squares underflows; rescale by the largest component
        m = np.max(np.abs(arr), axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            safe = np.linalg.norm(np.where(m > 0, arr / m, 0.0), axis=-1, keepdims=True) * m
        return np.where(tiny, safe, np.sqrt(sq))
    return np.sqrt(sq)


def exp_map(v):
    """Project Euclidean vector(s) onto the Poincare ball from the origin.

    ``tanh(|v|) * v / |v|``, with ``0 -> 0`` and the result norm clamped to
    :data:`MAX_NORM`.

    Raises
    ------
    InvalidInputError
        If ``v`` contains NaN or infinite values.
    """
    v = _as_points(v, "v")
    n = _norms(v)
    radius = np.minimum(np.tanh(n), MAX_NORM)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(n > 0, radius / n, 0.0)
    return v * scale


def log_map(p):
    """Inverse of :func:`exp_map`: ``artanh(|p|) * p / |p|``, with ``0 -> 0``.

    Raises
    ------
    DomainError
        If any point has norm >= 1.
    """
    p = _as_points(p, "p")
    n = _norms(p)
    if np.any(n >= 1.0):
        raise DomainError("log_map requires |p| < 1")
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(n > 0, np.arctanh(n) / n, 0.0)
    return p * scale


def _check_ball(p, name):
    sq = np.einsum("...i,...i->...", p, p)
    if np.any(sq >= 1.0):
        raise DomainError(f"{name} must lie strictly inside the unit ball")
    return sq


def arcosh1p(delta):
    """``arccosh(1 + delta)`` without the cancellation of forming ``1 + delta``."""
    delta = np.asarray(delta, dtype=np.float64)
    return np.log1p(delta + np.sqrt(delta * (delta + 2.0)))


def hyperbolic_distance(p, q):
    """Geodesic distance between points of the Poincare ball.

    ``arccosh(1 + 2|p-q|^2 / ((1-|p|^2)(1-|q|^2)))``.  Inputs broadcast
    row-wise, so a single point may be compared against a batch.
    """
    p = _as_points(p, "p")
    q = _as_points(q, "q")
    if p.shape[-1] != q.shape[-1]:
        raise InvalidInputError(f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    sp = _check_ball(p, "p")
    sq = _check_ball(q, "q")
    diff = p - q
    num = np.einsum("...i,...i->...", diff, diff)
    delta = 2.0 * num / ((1.0 - sp) * (1.0 - sq))
    out = arcosh1p(delta)
    _record_distances(out.size)
    return float(out) if out.ndim == 0 else out


def distance_to_origin(p):
    """``d(0, p) = 2 artanh(|p|)``, the closed form of the distance to the origin."""
    p = _as_points(p, "p")
    n = np.linalg.norm(p, axis=-1)
    if np.any(n >= 1.0):
        raise DomainError("p must lie strictly inside the unit ball")
    out = 2.0 * np.arctanh(n)
    _record_distances(out.size)
    return float(out) if out.ndim == 0 else out
