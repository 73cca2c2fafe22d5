"""Square and rectangle rotations of the plane, in closed form.

The square rotation slides every sup-norm level square's boundary along
itself: with boundary coordinate theta in R/4Z (one unit per edge) the flow
is ``theta -> theta + 4 t``, so ``t = 1`` is one full turn and the arc speed
on the level-``rho`` square is ``8 rho``, matching the generating field.
The rectangle rotation is the conjugate under ``p(x) = (x1, 2 x2)``, which
maps the 2:1 rectangle onto the square.

Everything here is evaluated by exact boundary-coordinate advance; there is
no numerical integration.  All maps accept ``(n, 2)`` arrays (with scalar
or per-point ``t``) and scalar convenience wrappers are provided.
"""

from __future__ import annotations

import numpy as np

Vec2 = tuple[float, float]

_HALF = 0.5


def to_square_coords(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sup-norm radius and boundary coordinate of each point.

    theta runs counterclockwise in [0, 4): edge 0 is the right edge from
    (rho, -rho) upward, then top, left, bottom.  The origin gets theta = 0.
    """
    x, y = pts[..., 0], pts[..., 1]
    rho = np.maximum(np.abs(x), np.abs(y))
    safe = np.where(rho > 0.0, rho, 1.0)
    right = (y >= -x) & (y < x)
    top = (x <= y) & (x > -y)
    left = (y <= -x) & (y > x)
    # bottom is the remainder (y <= x and y < -x), plus the origin
    theta = np.where(
        right, (y + rho) / (2.0 * safe),
        np.where(
            top, 1.0 + (rho - x) / (2.0 * safe),
            np.where(left, 2.0 + (rho - y) / (2.0 * safe),
                     3.0 + (x + rho) / (2.0 * safe))))
    theta = np.where(rho > 0.0, theta % 4.0, 0.0)
    return rho, theta


def from_square_coords(rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta) % 4.0
    # tiny negative inputs can round the modulus up to exactly 4.0
    theta = np.where(theta >= 4.0, 0.0, theta)
    rho = np.asarray(rho)
    edge = np.floor(theta).astype(np.int64)
    s = 2.0 * rho * (theta - edge)
    x = np.select(
        [edge == 0, edge == 1, edge == 2, edge == 3],
        [rho, rho - s, -rho, -rho + s])
    y = np.select(
        [edge == 0, edge == 1, edge == 2, edge == 3],
        [-rho + s, rho, rho - s, -rho])
    return np.stack([x, y], axis=-1)


def square_rot_flow_batch(t, pts: np.ndarray) -> np.ndarray:
    """xi_c: advance theta by 4t on each level square inside (-1/2, 1/2)^2."""
    pts = np.asarray(pts, dtype=float)
    rho, theta = to_square_coords(pts)
    moving = (rho > 0.0) & (rho < _HALF)
    out = from_square_coords(rho, theta + 4.0 * np.asarray(t))
    return np.where(moving[..., None], out, pts)


def rect_rot_flow_batch(t, pts: np.ndarray) -> np.ndarray:
    """xi_d: the square rotation conjugated by p(x) = (x1, 2 x2)."""
    pts = np.asarray(pts, dtype=float)
    stretched = pts * np.array([1.0, 2.0])
    rotated = square_rot_flow_batch(t, stretched)
    return rotated * np.array([1.0, 0.5])


def field_c_batch(pts: np.ndarray) -> np.ndarray:
    """Generator of the square rotation: (0, 8 x1) / (-8 x2, 0) wedges."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    ax, ay = np.abs(x), np.abs(y)
    horiz = (ay < ax) & (ax < _HALF)   # right/left wedges: vertical motion
    vert = (ax < ay) & (ay < _HALF)    # top/bottom wedges: horizontal motion
    vx = np.where(vert, -8.0 * y, 0.0)
    vy = np.where(horiz, 8.0 * x, 0.0)
    return np.stack([vx, vy], axis=-1)


def field_d_batch(pts: np.ndarray) -> np.ndarray:
    """Generator of the rectangle rotation, Dp^-1 . c(p(x)) with p=(x1, 2 x2).

    Branches: (0, 4 x1) when |2 x2| < |x1| < 1/2 and (-16 x2, 0) when
    |x1| < |2 x2| < 1/2.  (The -16 coefficient is forced by the conjugation
    identity and by the period-1 flow; see the d-branch ODE residual test.)
    """
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    ax, ay2 = np.abs(x), np.abs(2.0 * y)
    horiz = (ay2 < ax) & (ax < _HALF)
    vert = (ax < ay2) & (ay2 < _HALF)
    vx = np.where(vert, -16.0 * y, 0.0)
    vy = np.where(horiz, 4.0 * x, 0.0)
    return np.stack([vx, vy], axis=-1)


# -- scalar wrappers --------------------------------------------------------

def _scalar(fn, *args) -> Vec2:
    out = fn(*args)
    return float(out[0, 0]), float(out[0, 1])


def field_c(p: Vec2) -> Vec2:
    return _scalar(field_c_batch, np.array([p], dtype=float))


def field_d(p: Vec2) -> Vec2:
    return _scalar(field_d_batch, np.array([p], dtype=float))


def square_rot_flow(t: float, p: Vec2) -> Vec2:
    return _scalar(lambda a: square_rot_flow_batch(t, a),
                   np.array([p], dtype=float))


def rect_rot_flow(t: float, p: Vec2) -> Vec2:
    return _scalar(lambda a: rect_rot_flow_batch(t, a),
                   np.array([p], dtype=float))
