"""The planar non-autonomous construction: run the collapse, then run it back.

The field is b for t < 1 and -b(2 - t, .) for t > 1, supported in
[0, 2] x [0,1]^2.  Flows carry a start-time parameter alpha: phi follows
the b-flow to the collapse time and then retraces it, so phi(2, 0, .) is
the identity; psi instead re-enters through the mirror image of the
starting point, so psi(2, 0, x) = (1 - x1, x2) on the unit square.  The
two-parameter group law is phi(t1, alpha + t2, phi(t2, alpha, x)) =
phi(t1 + t2, alpha, x) away from the collapse slice alpha + t = 1.

Start times alpha > 1 reduce to alpha' = 2 - alpha with time reversed:
if y solves y' = a(t + alpha, y) then y(-t) solves the system started at
2 - alpha, because a(t, .) = -a(2 - t, .).  (The printed reduction to
1 - alpha is off by the reflection center; the ODE residual check
arbitrates.)
"""

from __future__ import annotations

import numpy as np

from .depauw import DEFAULT_DEPTH, chi_flow_batch, field_b_batch

Vec2 = tuple[float, float]


def field_a2_batch(t: float, pts: np.ndarray) -> np.ndarray:
    """a(t, .) = b(t, .) for t < 1 and -b(2 - t, .) for t > 1.

    The slice t = 1 is a null set on which the field is left undefined;
    the evaluator returns 0 there (callers that care should test
    ``is_undefined_slice``).
    """
    pts = np.asarray(pts, dtype=float)
    if t < 1.0:
        return field_b_batch(t, pts)
    if t > 1.0:
        return -field_b_batch(2.0 - t, pts)
    return np.zeros_like(pts)


def is_undefined_slice(t: float) -> bool:
    return t == 1.0


def field_a2(t: float, p: Vec2) -> Vec2:
    v = field_a2_batch(t, np.array([p], dtype=float))[0]
    return float(v[0]), float(v[1])


def field_a2_tilde_batch(t: float, pts: np.ndarray) -> np.ndarray:
    """The no-flow variant: a(t, .) for t < 1, zero afterwards."""
    pts = np.asarray(pts, dtype=float)
    if t < 1.0:
        return field_b_batch(t, pts)
    return np.zeros_like(pts)


def field_a2_tilde(t: float, p: Vec2) -> Vec2:
    v = field_a2_tilde_batch(t, np.array([p], dtype=float))[0]
    return float(v[0]), float(v[1])


def flow_phi2_batch(t: float, alpha: float, pts: np.ndarray,
                    depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """phi(t, alpha, .): collapse forward, then exact retrace."""
    if alpha == 1.0:
        raise ValueError("flow undefined for start time alpha = 1")
    pts = np.asarray(pts, dtype=float)
    if alpha > 1.0:
        return flow_phi2_batch(-t, 2.0 - alpha, pts, depth)
    if t <= 1.0 - alpha:
        out, _ = chi_flow_batch(alpha, t, pts, depth)
    else:
        out, _ = chi_flow_batch(alpha, 2.0 - 2.0 * alpha - t, pts, depth)
    return out


def flow_psi2_batch(t: float, alpha: float, pts: np.ndarray,
                    depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """psi(t, alpha, .): after the collapse, re-enter through the mirror.

    The mirrored branch pulls the point back to time 0, reflects x1 about
    1/2, and pushes forward again.  The untouched set (pullbacks of
    heights in Z) is null and only distinguishable at the digit level;
    float callers always get the mirrored branch inside the unit square.
    """
    if alpha == 1.0:
        raise ValueError("flow undefined for start time alpha = 1")
    pts = np.asarray(pts, dtype=float)
    if alpha > 1.0:
        return flow_psi2_batch(-t, 2.0 - alpha, pts, depth)
    if t <= 1.0 - alpha:
        return flow_phi2_batch(t, alpha, pts, depth)
    inside = ((pts[:, 0] > 0.0) & (pts[:, 0] < 1.0)
              & (pts[:, 1] > 0.0) & (pts[:, 1] < 1.0))
    start = pts.copy()
    if np.any(inside):
        back = flow_phi2_batch(-alpha, alpha, pts[inside], depth)
        back[:, 0] = 1.0 - back[:, 0]
        start[inside] = flow_phi2_batch(alpha, 0.0, back, depth) \
            if alpha != 0.0 else back
    return flow_phi2_batch(t, alpha, start, depth)


def flow_phi2(t: float, alpha: float, p: Vec2,
              depth: int = DEFAULT_DEPTH) -> Vec2:
    out = flow_phi2_batch(t, alpha, np.array([p], dtype=float), depth)[0]
    return float(out[0]), float(out[1])


def flow_psi2(t: float, alpha: float, p: Vec2,
              depth: int = DEFAULT_DEPTH) -> Vec2:
    out = flow_psi2_batch(t, alpha, np.array([p], dtype=float), depth)[0]
    return float(out[0]), float(out[1])
