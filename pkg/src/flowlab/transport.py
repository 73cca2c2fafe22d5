"""Weak-solution machinery for the linear transport equation.

Candidate solutions are initial data pushed along a flow inverse,
u(t, x) = u0(flow(-t, x)); for a measure-preserving flow of a
divergence-free drift this solves d/dt u + <a, grad u> = 0 weakly, i.e.

    int_0^inf int u (dt_h + <a, grad h>) dx dt + int u0 h(0, .) dx = 0

for every smooth compactly supported h.  The solutions built from the two
competing flows differ on a set of positive measure while both drive the
residual to zero; their difference is the nontrivial solution with zero
initial data.

Residuals are estimated by Monte-Carlo: the solutions are discontinuous
along wild flow preimages, where tensor quadratures have no error model
but sample means still give an unbiased estimate with a computable sigma.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .depauw import DEFAULT_DEPTH, chi_flow_batch, field_b_batch
from .donut3 import field_a_batch, flow_phi_batch, flow_psi_batch


def thread_count() -> int:
    """Worker cap from FLOWLAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("FLOWLAB_THREADS", "1")))
    except ValueError:
        return 1


def sharded_samples(fn: Callable[[np.random.Generator], np.ndarray],
                    seed: int, shards: int) -> np.ndarray:
    """Deterministic shard-and-merge: per-shard RNG streams, ordered concat."""
    rngs = [np.random.default_rng(s)
            for s in np.random.SeedSequence(seed).spawn(shards)]
    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, rngs))
    else:
        parts = [fn(rng) for rng in rngs]
    return np.concatenate(parts)


# -- smooth test functions ----------------------------------------------------

def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    out[m] = np.exp(1.0 / (s[m] ** 2 - 1.0))
    return out


def _bump_prime(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    u = s[m] ** 2 - 1.0
    out[m] = np.exp(1.0 / u) * (-2.0 * s[m] / u ** 2)
    return out


def _ramp(s: np.ndarray) -> np.ndarray:
    """C-infinity ramp: 0 for s <= 0, 1 for s >= 1."""
    def f(u):
        out = np.zeros_like(u)
        m = u > 0
        out[m] = np.exp(-1.0 / u[m])
        return out
    s = np.asarray(s, dtype=float)
    a = f(s)
    b = f(1.0 - s)
    return a / (a + b)


@dataclass(frozen=True)
class TestFunction:
    """Product bump h(t, x) = prod_i g((z_i - c_i) / r_i) on a box.

    g(s) = exp(1/(s^2 - 1)) on |s| < 1; value, time derivative and spatial
    gradient are all closed form (checked against finite differences in
    the tests).
    """

    center: tuple[float, ...]
    radii: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.center) - 1

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        r = np.asarray(self.radii)
        return c - r, c + r

    def _scaled(self, tx: np.ndarray) -> np.ndarray:
        return (tx - np.asarray(self.center)) / np.asarray(self.radii)

    def value(self, tx: np.ndarray) -> np.ndarray:
        return np.prod(_bump(self._scaled(tx)), axis=-1)

    def dt(self, tx: np.ndarray) -> np.ndarray:
        s = self._scaled(tx)
        g = _bump(s)
        return (_bump_prime(s[..., 0]) / self.radii[0]
                * np.prod(g[..., 1:], axis=-1))

    def grad_x(self, tx: np.ndarray) -> np.ndarray:
        s = self._scaled(tx)
        g = _bump(s)
        out = np.empty_like(s[..., 1:])
        for j in range(1, s.shape[-1]):
            others = np.prod(np.delete(g, j, axis=-1), axis=-1)
            out[..., j - 1] = _bump_prime(s[..., j]) / self.radii[j] * others
        return out


# -- initial data --------------------------------------------------------------

def _plateau(pts: np.ndarray, lo, hi, margin: float) -> np.ndarray:
    """1 on [lo, hi], smoothly 0 outside the margin-fattened box."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    up = _ramp((pts - (lo - margin)) / margin)
    down = _ramp(((hi + margin) - pts) / margin)
    return np.prod(up * down, axis=-1)


def u0_linear_3d(pts: np.ndarray) -> np.ndarray:
    """Smooth compactly supported function equal to x1 on the donut S."""
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0] * _plateau(pts, (-0.05, -3.05, -4.05),
                                  (1.05, 1.05, 3.05), 0.5)


def u0_linear_2d(pts: np.ndarray) -> np.ndarray:
    """Smooth compactly supported function equal to x1 on the unit square."""
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0] * _plateau(pts, (-0.05, -0.05), (1.05, 1.05), 0.5)


# -- candidate solutions --------------------------------------------------------

def _backward_phi2_start0(t: np.ndarray, pts: np.ndarray,
                          depth: int) -> np.ndarray:
    """Rowwise inverse of x -> phi(t, 0, x) for the 2D flow.

    phi(t,0,.) is chi^(0)(t) for t <= 1, the retrace chi^(0)(2-t) for
    1 <= t <= 2 and the identity beyond, so the inverse is one chi call
    with per-point windows.
    """
    t = np.asarray(t, dtype=float)
    z = np.where(t <= 1.0, t, 2.0 - t)
    tau = np.where(t <= 1.0, -t, t - 2.0)
    idle = (t >= 2.0) | (t <= 0.0)
    z = np.where(idle, 0.0, z)
    tau = np.where(idle, 0.0, tau)
    out, _ = chi_flow_batch(z, tau, pts, depth)
    return out


def _mirror_inside(pts: np.ndarray) -> np.ndarray:
    out = pts.copy()
    inside = ((pts[:, 0] > 0.0) & (pts[:, 0] < 1.0)
              & (pts[:, 1] > 0.0) & (pts[:, 1] < 1.0))
    out[inside, 0] = 1.0 - out[inside, 0]
    return out


def _backward_psi2_start0(t: np.ndarray, pts: np.ndarray,
                          depth: int) -> np.ndarray:
    """Rowwise inverse of x -> psi(t, 0, x): mirror after the collapse."""
    t = np.asarray(t, dtype=float)
    base = _backward_phi2_start0(t, pts, depth)
    late = t > 1.0
    if np.any(late):
        base[late] = _mirror_inside(base[late])
    return base


@dataclass(frozen=True)
class CandidateSolution:
    """u(t, x) = u0(backward(t, x)), with backward(t_vec, pts) rowwise."""

    name: str
    u0: Callable[[np.ndarray], np.ndarray]
    backward: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def eval(self, t, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), pts.shape[:-1])
        return self.u0(self.backward(t, pts))


def solution_3d(flavor: str, depth: int = DEFAULT_DEPTH) -> CandidateSolution:
    """'phi' or 'psi' pushing u0(x) = x1-on-S."""
    fl = {"phi": flow_phi_batch, "psi": flow_psi_batch}[flavor]

    def backward(t, pts):
        return fl(-np.asarray(t, dtype=float), pts, depth)

    return CandidateSolution(flavor + "-3d", u0_linear_3d, backward)


def solution_2d(flavor: str, depth: int = DEFAULT_DEPTH) -> CandidateSolution:
    """'phi' or 'psi' (start time 0) pushing u0(x) = x1-on-square."""
    back = {"phi": _backward_phi2_start0, "psi": _backward_psi2_start0}[flavor]

    def backward(t, pts):
        return back(np.asarray(t, dtype=float), pts, depth)

    return CandidateSolution(flavor + "-2d", u0_linear_2d, backward)


def eval_solution(sol: CandidateSolution, t: float, x) -> float:
    return float(sol.eval(t, np.array([x], dtype=float))[0])


def drift_3d(t, pts: np.ndarray) -> np.ndarray:
    return field_a_batch(pts)


def drift_2d(t, pts: np.ndarray) -> np.ndarray:
    """a(t, x) rowwise with per-point times."""
    t = np.broadcast_to(np.asarray(t, dtype=float), pts.shape[:-1])
    early = t < 1.0
    out = np.zeros_like(pts)
    if np.any(early):
        out[early] = field_b_batch(t[early], pts[early])
    late = t > 1.0
    if np.any(late):
        out[late] = -field_b_batch(2.0 - t[late], pts[late])
    return out


# -- Monte-Carlo residuals -------------------------------------------------------

@dataclass(frozen=True)
class WeakResidual:
    estimate: float
    sigma: float
    interior: float
    initial: float
    samples: int
    seed: int = 0


def weak_residual(solution, drift: Callable[[np.ndarray, np.ndarray],
                                            np.ndarray],
                  h: TestFunction, samples: int, seed: int = 0,
                  shards: int = 16) -> WeakResidual:
    """MC estimate of the weak-form defect against the test function h.

    ``solution`` is a CandidateSolution or a (minuend, subtrahend) pair;
    for a pair the initial-data term cancels exactly ("u(0,.) = 0") and is
    skipped.  The estimate is

        vol * mean[ u (dt_h + <a, grad h>) ]  +  vol_x * mean[ u0 h(0,.) ]

    over h's support box clipped to t >= 0, with the combined standard
    error as sigma.
    """
    pair = isinstance(solution, tuple)
    sols = list(solution) if pair else [solution]
    signs = [1.0, -1.0] if pair else [1.0]

    lo, hi = h.support()
    lo = lo.copy()
    lo[0] = max(lo[0], 0.0)
    if np.any(hi <= lo):
        raise ValueError("test function support does not meet t >= 0")
    vol = float(np.prod(hi - lo))
    per = max(1, samples // shards)

    def one_shard(rng: np.random.Generator) -> np.ndarray:
        tx = rng.uniform(lo, hi, size=(per, len(lo)))
        t = tx[:, 0]
        pts = tx[:, 1:]
        u = sum(sg * sol.eval(t, pts) for sol, sg in zip(sols, signs))
        adv = np.sum(drift(t, pts) * h.grad_x(tx), axis=-1)
        return u * (h.dt(tx) + adv)

    vals = sharded_samples(one_shard, seed, shards)
    n = len(vals)
    interior = vol * float(vals.mean())
    sig_int = vol * float(vals.std(ddof=1)) / np.sqrt(n)

    initial = 0.0
    sig_ini = 0.0
    if not pair:
        u0 = sols[0].u0
        vol_x = float(np.prod(hi[1:] - lo[1:]))

        def init_shard(rng: np.random.Generator) -> np.ndarray:
            pts = rng.uniform(lo[1:], hi[1:], size=(per, len(lo) - 1))
            tx0 = np.concatenate([np.zeros((per, 1)), pts], axis=1)
            return u0(pts) * h.value(tx0)

        ivals = sharded_samples(init_shard, seed + 1, shards)
        initial = vol_x * float(ivals.mean())
        sig_ini = vol_x * float(ivals.std(ddof=1)) / np.sqrt(len(ivals))

    sigma = float(np.hypot(sig_int, sig_ini))
    return WeakResidual(interior + initial, sigma, interior, initial, n, seed)


def change_of_variables_check(flow: Callable[[np.ndarray], np.ndarray],
                              g: TestFunction, box_lo, box_hi,
                              samples: int, seed: int = 0,
                              shards: int = 16
                              ) -> tuple[float, float, float]:
    """MC check of int g(flow(x)) dx = int g(x) dx over a bounding box.

    Uses common samples on both sides so sigma is the standard error of
    the pointwise difference; returns (lhs, rhs, sigma).
    """
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    vol = float(np.prod(hi - lo))
    per = max(1, samples // shards)

    def one_shard(rng: np.random.Generator) -> np.ndarray:
        pts = rng.uniform(lo, hi, size=(per, len(lo)))
        pad = np.zeros((len(pts), 1))
        tx = np.concatenate([pad, pts], axis=1)
        txf = np.concatenate([pad, flow(pts)], axis=1)
        return np.stack([g.value(txf), g.value(tx)], axis=-1)

    vals = sharded_samples(one_shard, seed, shards)
    lhs = vol * float(vals[:, 0].mean())
    rhs = vol * float(vals[:, 1].mean())
    diff = vals[:, 0] - vals[:, 1]
    sigma = vol * float(diff.std(ddof=1)) / np.sqrt(len(diff))
    return lhs, rhs, sigma
