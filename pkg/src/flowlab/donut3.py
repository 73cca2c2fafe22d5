"""The 3D autonomous construction: donut regions, stopping times, two flows.

The support S is a donut of seven regions A1..A7 glued along flat membranes
M0..M7.  A forward orbit cycles A7 -> A6 -> ... -> A1 and hits the critical
plane M0 = [0,1]^2 x {0} after a total time that is independent of the
starting point; one loop takes exactly 6 + 3*pi.  On A1 (descending) and A7
(ascending mirror) the horizontal motion is the dyadically rescaled planar
flow, so the downward passage through A1 collapses x1-fibers; the glued
orbit therefore closes through the critical plane and admits two distinct
measure-preserving periodic extensions: ``flow_phi`` (plain periodicity)
and ``flow_psi`` (re-entry through the mirror involution ``involution_h``).

Orbits are exact region-by-region closed forms: circle arcs at unit speed
(A2, A5), square-rotation lifts (A3, A6), vertical translation (A4), the
planar flow with a height-dependent shift (A1), and its time reflection
(A7).  There is no ODE integrator here.

Conventions (documented tie-breaks):
  - shared membrane points classify into the region a forward orbit is
    entering, i.e. priority A1 > A2 > ... > A7;
  - points of the open critical plane continue downward into A7
    (right-continuous orbit continuation);
  - the exceptional-set branch of psi (orbits through (0,1) x Z x {1})
    exists only at the digit level, where Z-membership is decidable;
    double-precision callers always get the generic branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .depauw import DEFAULT_DEPTH, chi_flow_batch, field_b_batch
from .depauw import gamma_inverse_float
from .planar_rot import field_c_batch, square_rot_flow_batch

Vec3 = tuple[float, float, float]

T_PERIOD = 6.0 + 3.0 * np.pi

_SNAP = 1e-9
_TIE = 1e-12
_MAX_HOPS = 10


class RegionId(IntEnum):
    OUTSIDE = 0
    A1 = 1
    A2 = 2
    A3 = 3
    A4 = 4
    A5 = 5
    A6 = 6
    A7 = 7
    CRITICAL_PLANE = 8


def _snap_to(v: np.ndarray, targets) -> np.ndarray:
    out = np.asarray(v, dtype=float).copy()
    for t in targets:
        out = np.where(np.abs(out - t) <= _SNAP, t, out)
    return out


def classify_region_batch(pts: np.ndarray) -> np.ndarray:
    """Region codes with the forward-entry tie-break on membranes.

    A 1e-9 snap band absorbs arithmetic noise at the membranes; the open
    critical plane (0,1)^2 x {0} gets its own code.
    """
    pts = np.asarray(pts, dtype=float)
    x1 = _snap_to(pts[..., 0], (0.0, 1.0))
    x2 = _snap_to(pts[..., 1], (-3.0, -2.0, 0.0, 1.0))
    x3 = _snap_to(pts[..., 2], (-2.0, -1.0, 0.0, 1.0))
    in_sq = (x1 >= 0.0) & (x1 <= 1.0) & (x2 >= 0.0) & (x2 <= 1.0)
    in_strip = (x1 >= 0.0) & (x1 <= 1.0) & (x2 >= -3.0) & (x2 <= -2.0)
    r_up = _snap_to(np.hypot(x2 + 1.0, x3 - 1.0), (1.0, 2.0))
    r_dn = _snap_to(np.hypot(x2 + 1.0, x3 + 2.0), (1.0, 2.0))

    crit = ((x3 == 0.0) & (x1 > 0.0) & (x1 < 1.0)
            & (x2 > 0.0) & (x2 < 1.0))
    a1 = in_sq & (x3 > 0.0) & (x3 <= 1.0)
    a2 = ((x1 >= 0.0) & (x1 <= 1.0) & (x3 >= 1.0)
          & (r_up >= 1.0) & (r_up <= 2.0))
    a3 = in_strip & (x3 >= 0.0) & (x3 <= 1.0)
    a4 = in_strip & (x3 >= -2.0) & (x3 <= 0.0)
    a5 = ((x1 >= 0.0) & (x1 <= 1.0) & (x3 <= -2.0)
          & (r_dn >= 1.0) & (r_dn <= 2.0))
    a6 = in_sq & (x3 >= -2.0) & (x3 <= -1.0)
    a7 = in_sq & (x3 >= -1.0) & (x3 < 0.0)

    return np.select([crit, a1, a2, a3, a4, a5, a6, a7],
                     [RegionId.CRITICAL_PLANE, 1, 2, 3, 4, 5, 6, 7],
                     default=0).astype(np.int64)


def classify_region(x: Vec3) -> RegionId:
    return RegionId(int(classify_region_batch(np.array([x], dtype=float))[0]))


# -- the fields ---------------------------------------------------------------

def field_a_batch(pts: np.ndarray) -> np.ndarray:
    """The donut field a; zero outside S.

    Sign conventions validated by ODE residuals: A4 carries (0, 0, +1) (the
    orbit there ascends M4 -> M3; the displayed branch sign is a typo) and
    A7 is the reflection -R3 a(R3 x) = (-b(1+x3, .), -1).  On the open
    critical plane only the normal component is defined; it is -1 from both
    sides and the horizontal part is reported as 0.
    """
    pts = np.asarray(pts, dtype=float)
    region = classify_region_batch(pts)
    out = np.zeros_like(pts)
    x1, x2, x3 = pts[..., 0], pts[..., 1], pts[..., 2]

    m = region == 1
    if np.any(m):
        horiz = field_b_batch(1.0 - x3[m], pts[m][:, :2])
        out[m, 0] = horiz[:, 0]
        out[m, 1] = horiz[:, 1]
        out[m, 2] = -1.0
    m = region == 2
    if np.any(m):
        r = np.hypot(x2[m] + 1.0, x3[m] - 1.0)
        out[m, 1] = (x3[m] - 1.0) / r
        out[m, 2] = -(x2[m] + 1.0) / r
    m = region == 3
    if np.any(m):
        loc = np.stack([x1[m] - 0.5, x2[m] + 2.5], axis=-1)
        c = field_c_batch(loc)
        out[m, 0] = 0.5 * c[:, 0]
        out[m, 1] = 0.5 * c[:, 1]
        out[m, 2] = 1.0
    m = region == 4
    if np.any(m):
        out[m, 2] = 1.0
    m = region == 5
    if np.any(m):
        r = np.hypot(x2[m] + 1.0, x3[m] + 2.0)
        out[m, 1] = (x3[m] + 2.0) / r
        out[m, 2] = -(x2[m] + 1.0) / r
    m = region == 6
    if np.any(m):
        loc = np.stack([x1[m] - 0.5, x2[m] - 0.5], axis=-1)
        c = field_c_batch(loc)
        out[m, 0] = -0.5 * c[:, 0]
        out[m, 1] = -0.5 * c[:, 1]
        out[m, 2] = -1.0
    m = region == 7
    if np.any(m):
        horiz = field_b_batch(1.0 + x3[m], pts[m][:, :2])
        out[m, 0] = -horiz[:, 0]
        out[m, 1] = -horiz[:, 1]
        out[m, 2] = -1.0
    m = region == RegionId.CRITICAL_PLANE
    if np.any(m):
        out[m, 2] = -1.0
    return out


def field_a_tilde_batch(pts: np.ndarray) -> np.ndarray:
    """Same as a except constant (0, 0, -1) on A7 (the no-flow variant)."""
    pts = np.asarray(pts, dtype=float)
    out = field_a_batch(pts)
    m = classify_region_batch(pts) == 7
    out[m] = np.array([0.0, 0.0, -1.0])
    return out


def field_a(x: Vec3) -> Vec3:
    v = field_a_batch(np.array([x], dtype=float))[0]
    return float(v[0]), float(v[1]), float(v[2])


def field_a_tilde(x: Vec3) -> Vec3:
    v = field_a_tilde_batch(np.array([x], dtype=float))[0]
    return float(v[0]), float(v[1]), float(v[2])


def reflect_r3(x):
    """R3(x) = (x1, x2, -x3); an isometry, hence measure preserving."""
    x = np.asarray(x, dtype=float)
    return x * np.array([1.0, 1.0, -1.0])


# -- orbit marching -----------------------------------------------------------

def _arc_coords(pts, center2, center3, upper: bool):
    r = np.hypot(pts[:, 1] - center2, pts[:, 2] - center3)
    raw = np.arctan2(pts[:, 2] - center3, pts[:, 1] - center2)
    if not upper:
        raw = np.where(raw > 0.0, raw, raw + 2.0 * np.pi)
    return r, raw


def _windows(region: np.ndarray, pts: np.ndarray
             ) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (backward entry, forward exit) times of the current segment."""
    n = len(pts)
    db = np.zeros(n)
    df = np.zeros(n)
    x3 = pts[:, 2]
    m = region == 1
    db[m], df[m] = x3[m] - 1.0, x3[m]
    m = region == 2
    if np.any(m):
        r, th = _arc_coords(pts[m], -1.0, 1.0, True)
        db[m], df[m] = r * (th - np.pi), r * th
    m = region == 3
    db[m], df[m] = -x3[m], 1.0 - x3[m]
    m = region == 4
    db[m], df[m] = -x3[m] - 2.0, -x3[m]
    m = region == 5
    if np.any(m):
        r, th = _arc_coords(pts[m], -1.0, -2.0, False)
        db[m], df[m] = r * (th - 2.0 * np.pi), r * (th - np.pi)
    m = region == 6
    db[m], df[m] = 1.0 + x3[m], 2.0 + x3[m]
    m = region == 7
    db[m], df[m] = x3[m], 1.0 + x3[m]
    return db, df


def _rot_lift(pts, tau, off2, sign):
    """xi_c lift used in A3 (sign +1) and A6 (sign -1)."""
    off = np.array([0.5, off2])
    loc = pts[:, :2] - off
    rot = square_rot_flow_batch(sign * 0.5 * tau, loc) + off
    return rot


def _seg_eval(region: np.ndarray, pts: np.ndarray, tau: np.ndarray,
              depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form position after time tau inside the current segment."""
    out = pts.copy()
    trunc = np.zeros(len(pts), dtype=bool)
    x3 = pts[:, 2]

    m = region == 1
    if np.any(m):
        horiz, tr = chi_flow_batch(1.0 - x3[m], tau[m], pts[m, :2], depth)
        out[m, :2] = horiz
        out[m, 2] = x3[m] - tau[m]
        trunc[m] = tr
    for code, c3, upper in ((2, 1.0, True), (5, -2.0, False)):
        m = region == code
        if np.any(m):
            r, th = _arc_coords(pts[m], -1.0, c3, upper)
            ang = th - tau[m] / r
            out[m, 1] = r * np.cos(ang) - 1.0
            out[m, 2] = r * np.sin(ang) + c3
    m = region == 3
    if np.any(m):
        out[m, :2] = _rot_lift(pts[m], tau[m], -2.5, +1.0)
        out[m, 2] = x3[m] + tau[m]
    m = region == 4
    if np.any(m):
        out[m, 2] = x3[m] + tau[m]
    m = region == 6
    if np.any(m):
        out[m, :2] = _rot_lift(pts[m], tau[m], 0.5, -1.0)
        out[m, 2] = x3[m] - tau[m]
    m = region == 7
    if np.any(m):
        horiz, tr = chi_flow_batch(1.0 + x3[m], -tau[m], pts[m, :2], depth)
        out[m, :2] = horiz
        out[m, 2] = x3[m] - tau[m]
        trunc[m] = tr
    return out, trunc


def _march(tau: np.ndarray, pts: np.ndarray, region: np.ndarray,
           depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Glued orbit evaluation; tau must lie within (t-, t+] per point."""
    out = pts.copy()
    rem = tau.astype(float).copy()
    reg = region.copy()
    trunc = np.zeros(len(pts), dtype=bool)
    done = np.zeros(len(pts), dtype=bool)

    for _ in range(_MAX_HOPS):
        active = ~done
        if not np.any(active):
            break
        db, df = _windows(reg, out)
        stay = active & (rem >= db - _TIE) & (rem <= df + _TIE)
        if np.any(stay):
            res, tr = _seg_eval(reg[stay], out[stay],
                                np.clip(rem[stay], db[stay], df[stay]), depth)
            out[stay] = res
            trunc[stay] |= tr
            done[stay] = True
        fwd = active & ~done & (rem > df + _TIE)
        if np.any(fwd):
            if np.any(reg[fwd] == 1):
                raise ValueError("time beyond t+ (orbit would cross M0)")
            res, tr = _seg_eval(reg[fwd], out[fwd], df[fwd], depth)
            # land exactly on the membrane the region exits through forward
            exit_h = {2: 1.0, 3: 1.0, 4: 0.0, 5: -2.0, 6: -2.0, 7: -1.0}
            for code, h in exit_h.items():
                res[reg[fwd] == code, 2] = h
            out[fwd] = res
            trunc[fwd] |= tr
            rem[fwd] -= df[fwd]
            reg[fwd] -= 1
        bwd = active & ~done & (rem < db - _TIE)
        if np.any(bwd):
            if np.any(reg[bwd] == 7):
                raise ValueError("time below t- (orbit would cross M0)")
            res, tr = _seg_eval(reg[bwd], out[bwd], db[bwd], depth)
            entry_h = {1: 1.0, 2: 1.0, 3: 0.0, 4: -2.0, 5: -2.0, 6: -1.0}
            for code, h in entry_h.items():
                res[reg[bwd] == code, 2] = h
            out[bwd] = res
            trunc[bwd] |= tr
            rem[bwd] -= db[bwd]
            reg[bwd] += 1
    else:
        if not np.all(done):
            raise RuntimeError("orbit marching did not terminate")
    return out, trunc


def _entry_regions(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Marching region per point plus the in-S mask (critical plane -> A7)."""
    codes = classify_region_batch(pts)
    inside = (codes >= 1) & (codes <= 7)
    crit = codes == RegionId.CRITICAL_PLANE
    reg = codes.copy()
    reg[crit] = 7
    return reg, inside | crit


def t_plus_batch(pts: np.ndarray, depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """First future time the orbit reaches the critical plane."""
    return _t_plus_impl(np.asarray(pts, dtype=float), depth)


def _t_plus_impl(pts: np.ndarray, depth: int) -> np.ndarray:
    reg, inside = _entry_regions(pts)
    if not np.all(inside):
        raise ValueError("t+ requested outside S")
    cur = pts.astype(float).copy()
    total = np.zeros(len(pts))
    active = np.ones(len(pts), dtype=bool)
    for _ in range(_MAX_HOPS):
        if not np.any(active):
            break
        sub = np.flatnonzero(active)
        db, df = _windows(reg[sub], cur[sub])
        total[sub] += df
        is_a1 = reg[sub] == 1
        active[sub[is_a1]] = False
        hop = sub[~is_a1]
        if len(hop):
            res, _ = _seg_eval(reg[hop], cur[hop], df[~is_a1], depth)
            exit_h = {2: 1.0, 3: 1.0, 4: 0.0, 5: -2.0, 6: -2.0, 7: -1.0}
            for code, h in exit_h.items():
                res[reg[hop] == code, 2] = h
            cur[hop] = res
            reg[hop] -= 1
    return total


def t_minus_backward_batch(pts: np.ndarray,
                           depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """Independent backward march to the critical plane (a t- oracle).

    The production stopping times set t- = t+ - (6 + 3 pi); this walks the
    orbit backwards instead so the constant-period identity can be checked
    rather than assumed.
    """
    pts = np.asarray(pts, dtype=float)
    reg, inside = _entry_regions(pts)
    if not np.all(inside):
        raise ValueError("t- requested outside S")
    crit = classify_region_batch(pts) == RegionId.CRITICAL_PLANE
    cur = pts.astype(float).copy()
    total = np.zeros(len(pts))
    active = ~crit
    for _ in range(_MAX_HOPS):
        if not np.any(active):
            break
        sub = np.flatnonzero(active)
        db, df = _windows(reg[sub], cur[sub])
        total[sub] += db
        is_a7 = reg[sub] == 7
        active[sub[is_a7]] = False
        hop = sub[~is_a7]
        if len(hop):
            res, _ = _seg_eval(reg[hop], cur[hop], db[~is_a7], depth)
            entry_h = {1: 1.0, 2: 1.0, 3: 0.0, 4: -2.0, 5: -2.0, 6: -1.0}
            for code, h in entry_h.items():
                res[reg[hop] == code, 2] = h
            cur[hop] = res
            reg[hop] += 1
    return total


@dataclass(frozen=True)
class StopTimes:
    t_minus: float
    t_plus: float


def stop_times(x: Vec3, depth: int = DEFAULT_DEPTH) -> StopTimes:
    """(t-, t+) for x in S; t- uses the constant-period identity.

    Computing t- as t+ - (6 + 3 pi) avoids marching backwards through the
    fiber collapse; :func:`t_minus_backward_batch` is the independent
    oracle used by the tests.
    """
    tp = float(_t_plus_impl(np.array([x], dtype=float), depth)[0])
    return StopTimes(tp - T_PERIOD, tp)


def varphi_batch(tau, pts: np.ndarray, depth: int = DEFAULT_DEPTH
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Windowed glued flow on S; tau per point within [t-, t+]."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
    reg, inside = _entry_regions(pts)
    if not np.all(inside):
        raise ValueError("varphi requested outside S")
    return _march(tau, pts, reg, depth)


def varphi(t: float, x: Vec3, depth: int = DEFAULT_DEPTH) -> Vec3:
    """Scalar windowed flow; raises if t is outside [t-(x), t+(x)]."""
    st = stop_times(x, depth)
    if not st.t_minus - 1e-9 <= t <= st.t_plus + 1e-9:
        raise ValueError(f"t={t} outside [{st.t_minus}, {st.t_plus}]")
    out, _ = varphi_batch(t, np.array([x], dtype=float), depth)
    return float(out[0, 0]), float(out[0, 1]), float(out[0, 2])


def involution_h_batch(pts: np.ndarray,
                       depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """h = varphi(1 - t+, mirror(varphi(t+ - 1, .))): orbit mirroring.

    Rides the orbit up to the plane x3 = 1, reflects x1 about 1/2 there,
    and rides back; h is an involution preserving x3 and the stop times.
    """
    pts = np.asarray(pts, dtype=float)
    tp = _t_plus_impl(pts, depth)
    up, _ = varphi_batch(tp - 1.0, pts, depth)
    up[:, 0] = 1.0 - up[:, 0]
    up[:, 2] = 1.0  # exact membrane height
    down, _ = varphi_batch(1.0 - tp, up, depth)
    return down


def involution_h(x: Vec3, depth: int = DEFAULT_DEPTH) -> Vec3:
    out = involution_h_batch(np.array([x], dtype=float), depth)[0]
    return float(out[0]), float(out[1]), float(out[2])


def _period_offsets(t: np.ndarray, tp: np.ndarray) -> np.ndarray:
    """Unique k with t - k T in (t+ - T, t+]."""
    k = np.ceil((t - tp) / T_PERIOD)
    tau = t - k * T_PERIOD
    # safety net against rounding of large multiples; sub-1e-9 overshoot
    # is clipped by the marching tie tolerance instead
    k = np.where(tau > tp + 1e-9, k + 1, k)
    k = np.where(tau < tp - T_PERIOD - 1e-9, k - 1, k)
    return k


def flow_phi_batch(t, pts: np.ndarray,
                   depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """The periodic flow: identity off S, varphi(t - k T, .) on S."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    reg, inside = _entry_regions(pts)
    out = pts.copy()
    if np.any(inside):
        sub = np.flatnonzero(inside)
        tp = _t_plus_impl(pts[sub], depth)
        k = _period_offsets(t[sub], tp)
        res, _ = _march(t[sub] - k * T_PERIOD, pts[sub], reg[sub], depth)
        out[sub] = res
    return out


def flow_psi_batch(t, pts: np.ndarray,
                   depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """The competing flow: outside the primary window, re-enter through h.

    Equals phi inside (t-, t+] and off S.  The W branch (orbits through
    (0,1) x Z x {1}) is a digit-level null set invisible to doubles; float
    callers always take this generic branch.
    """
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    reg, inside = _entry_regions(pts)
    out = pts.copy()
    if not np.any(inside):
        return out
    sub = np.flatnonzero(inside)
    tp = _t_plus_impl(pts[sub], depth)
    k = _period_offsets(t[sub], tp)
    tau = t[sub] - k * T_PERIOD
    start = pts[sub].copy()
    mirrored = k != 0
    if np.any(mirrored):
        start[mirrored] = involution_h_batch(pts[sub][mirrored], depth)
    reg2, _ = _entry_regions(start)
    res, _ = _march(tau, start, reg2, depth)
    out[sub] = res
    return out


def flow_phi(t: float, x: Vec3, depth: int = DEFAULT_DEPTH) -> Vec3:
    out = flow_phi_batch(t, np.array([x], dtype=float), depth)[0]
    return float(out[0]), float(out[1]), float(out[2])


def flow_psi(t: float, x: Vec3, depth: int = DEFAULT_DEPTH) -> Vec3:
    out = flow_psi_batch(t, np.array([x], dtype=float), depth)[0]
    return float(out[0]), float(out[1]), float(out[2])


def is_exceptional_time(x: Vec3, t: float, eps: float = 1e-6,
                        depth: int = DEFAULT_DEPTH) -> bool:
    """Whether t+(x) - t is within eps of the lattice Z * (6 + 3 pi).

    These are the times at which the orbit sits on the critical plane and
    the group property / invertibility statements are allowed to fail.
    """
    tp = float(_t_plus_impl(np.array([x], dtype=float), depth)[0])
    d = (tp - t) % T_PERIOD
    return bool(min(d, T_PERIOD - d) < eps)


def forced_flow_tilde_batch(t: float, pts: np.ndarray, y1,
                            depth: int = DEFAULT_DEPTH) -> np.ndarray:
    """What a measure-preserving flow of the no-flow field would have to do.

    Inside the slab (0,1)^2 x [-1, 0) the vertical branch is forced to be
    the rigid descent x - t (0,0,1); outside that window the horizontal
    part is pinned to (chi^(0)(1 + x3 - t, y1, y2), x3 - t) where y2 is the
    unique de-interleaving preimage of (x1, x2) and y1 is a free parameter.
    Whatever measurable choice of y1 is made, the time-3/2 image of the
    slab concentrates on a one-parameter family, which is the box-counting
    demonstration that no measure-preserving flow exists.
    """
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    y1 = np.broadcast_to(np.asarray(y1, dtype=float), (n,))
    x3 = pts[:, 2]
    out = pts.copy()
    out[:, 2] = x3 - t
    descent = (t >= x3) & (t <= 1.0 + x3)
    rest = ~descent
    if np.any(rest):
        y2 = gamma_inverse_float(pts[rest, 0], pts[rest, 1],
                                 min(depth, 26))
        s = np.minimum(1.0 + x3[rest] - t, 1.0)
        horiz, _ = chi_flow_batch(0.0, s, np.stack([y1[rest], y2], axis=-1),
                                  depth)
        out[rest, 0] = horiz[:, 0]
        out[rest, 1] = horiz[:, 1]
    return out


def forced_flow_tilde(t: float, x: Vec3, y1: float,
                      depth: int = DEFAULT_DEPTH) -> Vec3:
    out = forced_flow_tilde_batch(t, np.array([x], dtype=float), y1, depth)[0]
    return float(out[0]), float(out[1]), float(out[2])
