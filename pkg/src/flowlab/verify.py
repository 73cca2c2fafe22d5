"""Reusable numerical certification primitives.

Everything funnels into :class:`CheckReport`: a named statistic, an
explicit tolerance, and pass/fail defined as ``|statistic| <= tolerance``.
Reports are plain data, JSON-serializable, and deterministic for a fixed
seed.

The measure-preservation test works on preimage volumes: sample a
container box that the flow maps into itself, count hits of a probe box,
and compare against the probe volume with a 4-sigma binomial tolerance
(false-failure probability < 1e-4 per check).  This needs no knowledge of
the image set and no Jacobians, which matters because the flows under
test are not smooth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .transport import sharded_samples


@dataclass(frozen=True)
class ProbeBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi) or any(
                a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("degenerate probe box")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))


@dataclass(frozen=True)
class CheckReport:
    name: str
    statistic: float
    tolerance: float
    passed: bool
    samples: int = 0
    seed: int = 0
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "samples": self.samples,
            "seed": self.seed,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CheckReport":
        return cls(d["name"], d["statistic"], d["tolerance"], d["passed"],
                   d.get("samples", 0), d.get("seed", 0), d.get("notes", ""))


def report(name: str, statistic: float, tolerance: float, samples: int = 0,
           seed: int = 0, notes: str = "") -> CheckReport:
    return CheckReport(name, float(statistic), float(tolerance),
                       bool(abs(statistic) <= tolerance), samples, seed, notes)


def mc_preimage_volume(flow: Callable[[np.ndarray], np.ndarray],
                       probe: ProbeBox, container: ProbeBox,
                       samples: int, seed: int, name: str,
                       shards: int = 16) -> CheckReport:
    """|fraction-hit * vol(container) - vol(probe)| against 4 sigma.

    The container must hold the field support and the probe, with the flow
    the identity outside; escaping samples mean the container is too small
    and raise.
    """
    per = max(1, samples // shards)

    def one_shard(rng: np.random.Generator) -> np.ndarray:
        pts = container.sample(rng, per)
        img = flow(pts)
        if not np.all(container.contains(img)):
            raise ValueError(f"{name}: flow escapes the container")
        return probe.contains(img)

    hits = sharded_samples(one_shard, seed, shards)
    n = len(hits)
    p_hat = float(hits.mean())
    sigma = float(np.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) / n))
    statistic = abs(p_hat * container.volume - probe.volume)
    tolerance = 4.0 * sigma * container.volume
    return report(name, statistic, tolerance, n, seed,
                  notes=f"p_hat={p_hat:.6f}")


def _face_grid(lo: np.ndarray, hi: np.ndarray, axis: int, side: float,
               n: int) -> tuple[np.ndarray, float]:
    """Midpoint grid on one box face; returns points and the cell area."""
    dim = len(lo)
    axes = [k for k in range(dim) if k != axis]
    mids = []
    for k in axes:
        step = (hi[k] - lo[k]) / n
        mids.append(lo[k] + (np.arange(n) + 0.5) * step)
    grids = np.meshgrid(*mids, indexing="ij")
    pts = np.empty((n ** len(axes), dim))
    for j, k in enumerate(axes):
        pts[:, k] = grids[j].ravel()
    pts[:, axis] = side
    area = float(np.prod([(hi[k] - lo[k]) / n for k in axes]))
    return pts, area


def flux_divergence(fieldfn: Callable[[np.ndarray], np.ndarray],
                    box: ProbeBox, quad: int, name: str,
                    bound: float = 5.0, disc_lines: int = 8,
                    curvature: float = 64.0) -> CheckReport:
    """Net outward flux through the box boundary by midpoint quadrature.

    Tolerance model for a bounded piecewise-smooth field: each face
    contributes O(h^2) from the smooth patches (curvature bound) plus
    O(h) for every discontinuity curve it crosses (jump <= 2 * bound over
    a band of width h).
    """
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    total = 0.0
    tolerance = 0.0
    npts = 0
    for axis in range(box.dim):
        for sgn, side in ((1.0, hi[axis]), (-1.0, lo[axis])):
            pts, cell = _face_grid(lo, hi, axis, side, quad)
            vals = fieldfn(pts)[:, axis]
            total += sgn * float(vals.sum()) * cell
            npts += len(pts)
            lengths = [hi[k] - lo[k] for k in range(box.dim) if k != axis]
            area = float(np.prod(lengths))
            h = max(lengths) / quad
            diam = float(np.hypot(*lengths)) if len(lengths) == 2 \
                else max(lengths)
            tolerance += (2.0 * bound * disc_lines * diam * h
                          + curvature * area * h * h / 24.0)
    return report(name, total, tolerance, npts,
                  notes=f"quad={quad} per face")


def pointwise_normal_flux(fieldfn: Callable[[np.ndarray], np.ndarray],
                          pts: np.ndarray, normals: np.ndarray,
                          name: str, tol: float = 1e-12) -> CheckReport:
    """Max |a . n| on boundary samples (fields with exactly zero normal
    component across the stated interface)."""
    vals = np.abs(np.sum(fieldfn(pts) * normals, axis=-1)).max()
    return report(name, float(vals), tol, len(pts))


def group_sweep(flow: Callable[[float, tuple]], sampler,
                t_range: tuple[float, float], samples: int, seed: int,
                name: str, tol: float = 1e-8,
                guard=None) -> CheckReport:
    """Max |flow(t1+t2, x) - flow(t1, flow(t2, x))| over guarded triples.

    ``guard(x, t) -> True`` marks exceptional times to skip (they are
    reported in the notes, not failed).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    kept = 0
    skipped = 0
    for _ in range(samples):
        x = sampler(rng)
        t1 = rng.uniform(*t_range)
        t2 = rng.uniform(*t_range)
        if guard is not None and (guard(x, t2) or guard(x, t1 + t2)):
            skipped += 1
            continue
        lhs = np.asarray(flow(t1 + t2, x))
        rhs = np.asarray(flow(t1, tuple(np.asarray(flow(t2, x)))))
        worst = max(worst, float(np.abs(lhs - rhs).max()))
        kept += 1
    return report(name, worst, tol, kept, seed,
                  notes=f"skipped={skipped} exceptional triples")


def inverse_sweep(flow: Callable[[float, tuple]], sampler,
                  t_range: tuple[float, float], samples: int, seed: int,
                  name: str, tol: float = 1e-8, guard=None) -> CheckReport:
    """Max |flow(-t, flow(t, x)) - x| over guarded samples."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    kept = 0
    skipped = 0
    for _ in range(samples):
        x = sampler(rng)
        t = rng.uniform(*t_range)
        if guard is not None and guard(x, t):
            skipped += 1
            continue
        back = np.asarray(flow(-t, tuple(np.asarray(flow(t, x)))))
        worst = max(worst, float(np.abs(back - np.asarray(x)).max()))
        kept += 1
    return report(name, worst, tol, kept, seed,
                  notes=f"skipped={skipped}")


def ode_residual(flow: Callable[[float, tuple]], fieldfn, sampler,
                 t_range: tuple[float, float], samples: int, seed: int,
                 name: str, dt: float = 1e-6, tol: float = 1e-4,
                 seam_jump: float = 1e-3) -> CheckReport:
    """Central differences of the flow against the field along orbits.

    Samples whose three stencil points do not see (numerically) the same
    smooth piece of the field are skipped: the orbits are piecewise smooth
    and the derivative does not exist at seam crossings.  ``fieldfn``
    takes (t, point) and may ignore t.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    kept = 0
    skipped = 0
    for _ in range(samples):
        x = sampler(rng)
        t = rng.uniform(*t_range)
        p_m = np.asarray(flow(t - dt, x))
        p_0 = np.asarray(flow(t, x))
        p_p = np.asarray(flow(t + dt, x))
        f_m = np.asarray(fieldfn(t - dt, tuple(p_m)))
        f_0 = np.asarray(fieldfn(t, tuple(p_0)))
        f_p = np.asarray(fieldfn(t + dt, tuple(p_p)))
        if (np.abs(f_m - f_0).max() > seam_jump
                or np.abs(f_p - f_0).max() > seam_jump):
            skipped += 1
            continue
        vel = (p_p - p_m) / (2.0 * dt)
        worst = max(worst, float(np.abs(vel - f_0).max()))
        kept += 1
    return report(name, worst, tol, kept, seed,
                  notes=f"skipped={skipped} seam samples, dt={dt}")


def box_count_area(points: np.ndarray, h: float) -> float:
    """Occupied-cell area of a 2D point cloud on a grid of spacing h."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array")
    if len(pts) < 1000:
        raise ValueError("need at least 1000 points for a stable count")
    cells = np.floor(pts / h).astype(np.int64)
    occupied = len(np.unique(cells, axis=0))
    return occupied * h * h


def box_count_ratios(points: np.ndarray,
                     exponents: Iterable[int]) -> list[float]:
    """Area ratios under successive grid halvings h = 2^-e."""
    areas = [box_count_area(points, 2.0 ** -e) for e in exponents]
    return [areas[i + 1] / areas[i] for i in range(len(areas) - 1)]
