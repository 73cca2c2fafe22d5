"""The dyadically rescaled planar field b and its shifted flows.

Construction: on [0, 1/4) the field is the rectangle-rotation generator
recentred in the two horizontal halves of the unit square, on [1/4, 1/2) it
is minus the square-rotation generator recentred in the unit square, and on
each later stage window [t_i, t_{i+1}) with ``t_i = 1 - 2^-i`` the same
pattern runs, compressed by 2^i in time, inside every level-i dyadic square.
Each stage halves the horizontal extent of every fiber, so the time-1 limit
collapses the fiber over a non-dyadic height x2 to the single point whose
coordinates de-interleave x2's bits (odd-position bits -> first coordinate,
even-position bits -> second; the orientation is fixed by tracing the
half-time map, see ``gamma``).

Flows are exact compositions of partial rotations split at stage
boundaries.  Stages past ``depth`` are frozen; since the orbit after t_i
never leaves its level-i square, the truncation error is at most
sqrt(2) * 2^-depth and is reported, not silent.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .digits import (DEFAULT_DEPTH as _DIGIT_DEPTH, TAIL_UNKNOWN, DigitStream,
                     InsufficientDigitsError, base4_to_base2, deinterleave,
                     dyadic_level, has_degenerate_interleave_tail, in_Z,
                     interleave)
from .planar_rot import (field_c_batch, field_d_batch, rect_rot_flow_batch,
                         square_rot_flow_batch)

Vec2 = tuple[float, float]

DEFAULT_DEPTH = 30
MAX_DEPTH = 50

_QUARTER = 0.25
_HALF = 0.5


def stage_times(i: int) -> float:
    """Start of stage i: t_i = 1 - 2^-i (exact in binary)."""
    if i < 1:
        raise ValueError("stage index must be >= 1")
    return 1.0 - 0.5**i


def _stage_start(i: int) -> float:
    # stage 0 is the base pattern on [0, 1/2)
    return 1.0 - 0.5**i


def stage_index(t: float) -> int:
    """Index i with t_i <= t < t_{i+1}, for t in [0, 1)."""
    if not 0.0 <= t < 1.0:
        raise ValueError(f"no stage contains t={t}")
    i = 0
    while _stage_start(i + 1) <= t:
        i += 1
    return i


# -- the field ---------------------------------------------------------------

def _base_field(tloc: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Base pattern field at scaled times tloc in [0, 1/2) on the unit square."""
    tloc = np.broadcast_to(np.asarray(tloc, dtype=float), pts.shape[:-1])
    lower = pts[..., 1] <= _HALF
    centers = np.where(lower[..., None],
                       np.array([0.5, 0.25]), np.array([0.5, 0.75]))
    d_val = field_d_batch(pts - centers)
    c_val = -field_c_batch(pts - np.array([0.5, 0.5]))
    return np.where((tloc < _QUARTER)[..., None], d_val, c_val)


def field_b_batch(t, pts: np.ndarray) -> np.ndarray:
    """b(t, .) on an (n, 2) array; t scalar or per point.

    Zero outside [0,1]^2 and for t < 0; raises for t >= 1 where the stage
    index diverges.
    """
    pts = np.asarray(pts, dtype=float)
    out = np.zeros_like(pts)
    t = np.broadcast_to(np.asarray(t, dtype=float), pts.shape[:-1])
    if np.any(t >= 1.0):
        raise ValueError("stage index diverges at t >= 1")
    inside = ((pts[..., 0] >= 0.0) & (pts[..., 0] <= 1.0)
              & (pts[..., 1] >= 0.0) & (pts[..., 1] <= 1.0)
              & (t >= 0.0))
    if not np.any(inside):
        return out
    sub = pts[inside]
    tsub = t[inside]
    # stage index i with 1 - 2^-i <= t: i = floor(-log2(1 - t))
    i = np.floor(-np.log2(1.0 - tsub)).astype(np.int64)
    i = np.maximum(i, 0)
    # guard against log rounding at the exact stage boundaries
    i = np.where(1.0 - 0.5**(i + 1) <= tsub, i + 1, i)
    i = np.where(1.0 - 0.5**i > tsub, i - 1, i)
    scale = 2.0**i
    idx = np.clip(np.floor(sub * scale[:, None]), 0, scale[:, None] - 1)
    local = sub * scale[:, None] - idx
    tloc = scale * (tsub - (1.0 - 0.5**i))
    # range unchanged under rescaling: evaluate the base pattern at the
    # scaled point, no amplitude factor
    out[inside] = _base_field(tloc, local)
    return out


def field_b(t: float, p: Vec2) -> Vec2:
    v = field_b_batch(t, np.array([p], dtype=float))
    return float(v[0, 0]), float(v[0, 1])


# -- the flow ----------------------------------------------------------------

def _full_step(pts: np.ndarray) -> np.ndarray:
    """Exact action of one whole base window on the unit square.

    This is the half-time closed form: interior points map by
    (x/2 + floor(2y)/2, 2y - floor(2y)), the fiber y = 1/2 by (1/2, 1 - x),
    the boundary stays put.  All of it is exact float arithmetic (shifts,
    floors, Sterbenz subtractions) and the new y never depends on x, so
    points sharing a height keep bit-identical heights through every
    complete stage.  Evaluating the two rotations instead would inject an
    x-dependent ulp into y at every stage, which later stages double.
    """
    x, y = pts[..., 0], pts[..., 1]
    interior = (x > 0.0) & (x < 1.0) & (y > 0.0) & (y < 1.0)
    half = interior & (y == 0.5)
    k = np.floor(2.0 * y)
    gx = np.where(half, 0.5, 0.5 * x + 0.5 * k)
    gy = np.where(half, 1.0 - x, 2.0 * y - k)
    return np.where(interior[..., None],
                    np.stack([gx, gy], axis=-1), pts)


def _full_step_inv(pts: np.ndarray) -> np.ndarray:
    """Inverse of :func:`_full_step`; X = 1/2 only arises from y = 1/2."""
    x, y = pts[..., 0], pts[..., 1]
    interior = (x > 0.0) & (x < 1.0) & (y > 0.0) & (y < 1.0)
    half = interior & (x == 0.5)
    k = np.floor(2.0 * x)
    gx = np.where(half, 1.0 - y, 2.0 * x - k)
    gy = np.where(half, 0.5, 0.5 * y + 0.5 * k)
    return np.where(interior[..., None],
                    np.stack([gx, gy], axis=-1), pts)


def _base_window(t0: np.ndarray, t1: np.ndarray, pts: np.ndarray,
                 forward: bool) -> np.ndarray:
    """Base-pattern flow from scaled time t0 to t1 (both within [0, 1/2]).

    t0, t1 are per-point; all points must share the direction.  Complete
    windows take the exact closed-form step; partial windows compose the
    d-phase on [0, 1/4] and the (-c)-phase on [1/4, 1/2] with signed
    durations.
    """
    if forward:
        full = (t0 == 0.0) & (t1 == _HALF)
    else:
        full = (t0 == _HALF) & (t1 == 0.0)
    if np.all(full):
        return _full_step(pts) if forward else _full_step_inv(pts)
    if np.any(full):
        out = pts.copy()
        out[full] = (_full_step(pts[full]) if forward
                     else _full_step_inv(pts[full]))
        part = ~full
        out[part] = _base_window(t0[part], t1[part], pts[part], forward)
        return out

    d_dur = np.clip(t1, 0.0, _QUARTER) - np.clip(t0, 0.0, _QUARTER)
    c_dur = np.clip(t1, _QUARTER, _HALF) - np.clip(t0, _QUARTER, _HALF)

    def d_phase(q: np.ndarray, dur: np.ndarray) -> np.ndarray:
        lower = q[..., 1] <= _HALF
        centers = np.where(lower[..., None],
                           np.array([0.5, 0.25]), np.array([0.5, 0.75]))
        return rect_rot_flow_batch(dur, q - centers) + centers

    def c_phase(q: np.ndarray, dur: np.ndarray) -> np.ndarray:
        center = np.array([0.5, 0.5])
        return square_rot_flow_batch(-dur, q - center) + center

    if forward:
        pts = d_phase(pts, d_dur)
        pts = c_phase(pts, c_dur)
    else:
        pts = c_phase(pts, c_dur)
        pts = d_phase(pts, d_dur)
    return pts


def _chi_directed(s0: np.ndarray, s1: np.ndarray, pts: np.ndarray,
                  depth: int, forward: bool) -> np.ndarray:
    """Evolve through absolute b-time from s0 to s1 (one direction for all)."""
    t_cut = _stage_start(depth)
    lo = np.clip(np.minimum(s0, s1), 0.0, t_cut)
    hi = np.clip(np.maximum(s0, s1), 0.0, t_cut)
    live = hi > lo
    if not np.any(live):
        return pts
    inside = ((pts[..., 0] >= 0.0) & (pts[..., 0] <= 1.0)
              & (pts[..., 1] >= 0.0) & (pts[..., 1] <= 1.0))
    live &= inside

    i_first = stage_index(float(lo[live].min())) if np.any(live) else 0
    top = float(hi[live].max()) if np.any(live) else 0.0
    i_last = stage_index(top) if top < 1.0 else depth - 1
    i_last = min(i_last, depth - 1)
    order = range(i_first, i_last + 1)
    if not forward:
        order = reversed(order)

    for i in order:
        ti, tj = _stage_start(i), _stage_start(i + 1)
        a = np.maximum(lo, ti)
        b = np.minimum(hi, tj)
        act = live & (b > a)
        if not np.any(act):
            continue
        scale = float(2**i)
        sub = pts[act]
        idx = np.clip(np.floor(sub * scale), 0, scale - 1)
        local = sub * scale - idx
        ta = (a[act] - ti) * scale
        tb = (b[act] - ti) * scale
        if forward:
            local = _base_window(ta, tb, local, True)
        else:
            local = _base_window(tb, ta, local, False)
        pts = pts.copy()
        pts[act] = (idx + local) / scale
    return pts


def chi_flow_batch(z, t, pts: np.ndarray, depth: int = DEFAULT_DEPTH
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Flow of b shifted by z over elapsed time t, on an (n, 2) array.

    z and t may be scalars or per-point arrays.  Returns the image points
    and a boolean mask marking points whose absolute time window touched
    the untracked stages past ``depth`` (value frozen there; the error is
    bounded by sqrt(2) * 2^-depth by level-depth square confinement).
    """
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}]")
    pts = np.array(pts, dtype=float)
    n = pts.shape[0]
    s0 = np.broadcast_to(np.asarray(z, dtype=float), (n,)).copy()
    s1 = s0 + np.broadcast_to(np.asarray(t, dtype=float), (n,))
    t_cut = _stage_start(depth)
    truncated = (np.maximum(s0, s1) > t_cut) & (np.minimum(s0, s1) < 1.0)
    inside = ((pts[:, 0] > 0.0) & (pts[:, 0] < 1.0)
              & (pts[:, 1] > 0.0) & (pts[:, 1] < 1.0))
    truncated &= inside

    fwd = s1 >= s0
    if np.all(fwd):
        pts = _chi_directed(s0, s1, pts, depth, True)
    elif not np.any(fwd):
        pts = _chi_directed(s0, s1, pts, depth, False)
    else:
        pts[fwd] = _chi_directed(s0[fwd], s1[fwd], pts[fwd], depth, True)
        pts[~fwd] = _chi_directed(s0[~fwd], s1[~fwd], pts[~fwd], depth, False)
    return pts, truncated


def chi_flow_info(z: float, t: float, p: Vec2,
                  depth: int = DEFAULT_DEPTH) -> tuple[Vec2, bool]:
    """Scalar chi with its truncation flag."""
    out, trunc = chi_flow_batch(z, t, np.array([p], dtype=float), depth)
    return (float(out[0, 0]), float(out[0, 1])), bool(trunc[0])


def chi_flow(z: float, t: float, p: Vec2, depth: int = DEFAULT_DEPTH) -> Vec2:
    """chi^(z)(t, p): see :func:`chi_flow_info` for the truncation flag."""
    return chi_flow_info(z, t, p, depth)[0]


def chi_half_closed_form(p: Vec2) -> Vec2:
    """Closed form of chi^(0)(1/2, .) on (0,1)^2.

    (x1/2 + floor(2 x2)/2, 2 x2 - floor(2 x2)); the fiber x2 = 1/2 is fixed
    by both rectangle rotations and only the square rotation acts on it.
    """
    x1, x2 = p
    if not (0.0 < x1 < 1.0 and 0.0 < x2 < 1.0):
        raise ValueError("closed form defined on the open unit square")
    if x2 == 0.5:
        return (x2, 1.0 - x1)
    k = float(np.floor(2.0 * x2))
    return (0.5 * x1 + 0.5 * k, 2.0 * x2 - k)


# -- fiber tracking and the collapsing map ------------------------------------

@dataclass(frozen=True)
class FiberBox:
    """Image of a full horizontal fiber at a stage boundary: a level-i
    horizontal segment (m, m + 2^-i) x {n}."""

    level: int
    m: Fraction
    n: Fraction

    @property
    def width(self) -> Fraction:
        return Fraction(1, 2**self.level)


def fiber_box_at_stage(x2: DigitStream, i: int) -> FiberBox:
    """Where chi^(0)(t_i, .) parks the fiber over height x2.

    Tracing the half-time map stage by stage: odd-position bits of x2
    accumulate into the left endpoint, even-position bits plus the unread
    tail make up the new height.
    """
    if i < 1:
        raise ValueError("stage index must be >= 1")
    s = x2 if x2.base == 2 else base4_to_base2(x2)
    if s.tail != TAIL_UNKNOWN and in_Z(s) and dyadic_level(s) <= 2 * i + 2:
        raise ValueError("fiber tracing breaks on a dyadic height at this depth")
    bits = s.prefix(2 * i)
    m = Fraction(0)
    n = Fraction(0)
    for k in range(i):
        m += Fraction(bits[2 * k], 2**(k + 1))
        n += Fraction(bits[2 * k + 1], 2**(k + 1))
    if s.tail != TAIL_UNKNOWN:
        shifted = (s.exact_value() * 2**(2 * i)) % 1
        n += shifted / 2**i
    else:
        # best effort from the remaining known digits
        rest = Fraction(0)
        j = 2 * i
        w = Fraction(1, 2**(i + 1))
        while True:
            try:
                rest += s.digit(j) * w
            except InsufficientDigitsError:
                break
            j += 1
            w /= 2
        n += rest
    return FiberBox(i, m, n)


@dataclass(frozen=True)
class GammaResult:
    """Digit-level value of the collapsing map."""

    coord_streams: tuple[DigitStream, DigitStream]
    point: Vec2
    degenerate: bool


def gamma(x2: DigitStream, depth: int = DEFAULT_DEPTH) -> GammaResult:
    """Collapse point of the fiber over x2: binary de-interleaving.

    First coordinate from odd-position bits, second from even-position
    bits.  (The printed rule with the coordinates swapped contradicts both
    the half-time closed form and the stage-by-stage trace; the orientation
    used here is cross-checked against the flow in the test suite.)
    Dyadic heights have no collapse point and raise; heights whose odd- or
    even-bit subsequence is eventually constant collapse onto the boundary
    and come back flagged ``degenerate``.
    """
    s = x2 if x2.base == 2 else base4_to_base2(x2)
    if s.tail != TAIL_UNKNOWN:
        if in_Z(s):
            raise ValueError("gamma is undefined on dyadic rationals")
        degenerate = has_degenerate_interleave_tail(s)
    else:
        degenerate = False
    g1, g2 = deinterleave(s, depth)
    return GammaResult((g1, g2), (g1.to_float(depth), g2.to_float(depth)),
                       degenerate)


def gamma_inverse(y1: DigitStream, y2: DigitStream,
                  depth: int = DEFAULT_DEPTH) -> DigitStream:
    """Interleave the two coordinate expansions back into a height."""
    return interleave(y1, y2, depth)


def _float_bits(x: np.ndarray, nbits: int) -> np.ndarray:
    """First nbits binary digits of each entry of x in (0, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (nbits,), dtype=np.int64)
    frac = x.copy()
    for k in range(nbits):
        frac = frac * 2.0
        bit = np.floor(frac)
        out[..., k] = bit.astype(np.int64)
        frac -= bit
    return out


def gamma_inverse_float(x1, x2, depth: int = 26):
    """Float version of the inverse collapse: interleave mantissa bits.

    depth is capped at 26 so the 2*depth interleaved bits still fit a
    double exactly.
    """
    if depth > 26:
        raise ValueError("float interleave supports depth <= 26")
    b1 = _float_bits(x1, depth)
    b2 = _float_bits(x2, depth)
    weights_odd = 0.5 ** (2 * np.arange(depth) + 1)
    weights_even = 0.5 ** (2 * np.arange(depth) + 2)
    return b1 @ weights_odd + b2 @ weights_even


# a double mantissa holds 53 bits; each stage consumes two bits of the
# height, so direct float evaluation is generic only up to this depth
_DIRECT_DEPTH = 25
_ANCHOR_SPAN = 21


def collapse_diameter(x2, depth: int = DEFAULT_DEPTH,
                      fiber_samples: int = 10) -> float:
    """Max pairwise distance of the fiber image at t_depth.

    Contract: <= sqrt(2) * 2^-depth for heights generic to 2*depth bits
    (the whole fiber sits inside one level-depth dyadic square by then).

    The evaluation tracks a representative real of the given prefix: the
    first 2*depth bits are kept and two generic guard bits "01" are
    appended so the final stage is non-degenerate.  Since a double carries
    only 53 bits and each stage eats two, depths past ``_DIRECT_DEPTH``
    anchor at an intermediate stage k built exactly from the digits, and
    only the remaining <= ``_ANCHOR_SPAN`` stages run in floats.
    """
    if not isinstance(x2, DigitStream):
        x2 = DigitStream.from_float_generic(float(x2), 52)
    need = 2 * depth
    padded = DigitStream(2, x2.prefix(need) + (0, 1), "unknown")
    us = (np.arange(fiber_samples) + 0.5) / fiber_samples
    if depth <= _DIRECT_DEPTH:
        h = padded.to_float(need + 2)
        pts = np.stack([us, np.full(fiber_samples, h)], axis=-1)
        img, _ = chi_flow_batch(0.0, stage_times(depth), pts, depth)
    else:
        anchor = depth - _ANCHOR_SPAN
        box = fiber_box_at_stage(padded, anchor)
        xs = float(box.m) + us * float(box.width)
        pts = np.stack([xs, np.full(fiber_samples, float(box.n))], axis=-1)
        img, _ = chi_flow_batch(stage_times(anchor),
                                stage_times(depth) - stage_times(anchor),
                                pts, depth)
    diff = img[:, None, :] - img[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def skeleton_image_check(x1: float, x2: DigitStream,
                         depth: int = DEFAULT_DEPTH) -> bool:
    """Dyadic heights land on the dyadic skeleton, not in the interior.

    For x2 = j/2^m the fiber freezes onto a grid line of level <= m after
    finitely many stages; the check measures the distance of the computed
    image to the level-min(m, depth) grid against the 2^-depth truncation
    bound.
    """
    if not in_Z(x2):
        raise ValueError("skeleton check expects a dyadic height")
    m = min(dyadic_level(x2), depth)
    p, _ = chi_flow_info(0.0, stage_times(depth),
                         (x1, x2.to_float(_DIGIT_DEPTH)), depth)
    spacing = 0.5**m
    d1 = abs(p[0] / spacing - round(p[0] / spacing)) * spacing
    d2 = abs(p[1] / spacing - round(p[1] / spacing)) * spacing
    return min(d1, d2) <= 0.5**depth
