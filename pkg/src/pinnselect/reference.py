"""Finite-volume reference solution of the viscous Burgers equation.

The convective flux u^2/2 uses the Rusanov (local Lax-Friedrichs) flux and
the viscous term is discretized with explicit central differences.  Nodes
include both boundaries; boundary nodes carry the Dirichlet values directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

NU_DEFAULT = 0.01 / math.pi


def _minus_sin_pi(x: np.ndarray) -> np.ndarray:
    return -np.sin(np.pi * x)


@dataclass(frozen=True)
class BurgersProblem:
    nu: float = NU_DEFAULT
    T: float = 1.0
    x_lo: float = -1.0
    x_hi: float = 1.0
    ic: Callable[[np.ndarray], np.ndarray] = field(default=_minus_sin_pi, compare=False)
    bc: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if not self.x_lo < self.x_hi:
            raise ValueError(f"empty spatial domain [{self.x_lo}, {self.x_hi}]")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_lo, x_hi, t_lo, t_hi)."""
        return (self.x_lo, self.x_hi, 0.0, self.T)


@dataclass(frozen=True)
class ReferenceSolution:
    grid_x: np.ndarray
    grid_t: np.ndarray
    values: np.ndarray  # shape (nx, nt)

    def __post_init__(self):
        for arr in (self.grid_x, self.grid_t, self.values):
            arr.setflags(write=False)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (float(self.grid_x[0]), float(self.grid_x[-1]),
                float(self.grid_t[0]), float(self.grid_t[-1]))


class SolverDivergence(RuntimeError):
    pass


def symmetric_grid(x_lo: float, x_hi: float, n: int) -> np.ndarray:
    """Uniform nodes, mirrored so that the grid is exactly symmetric about its center."""
    x = np.linspace(x_lo, x_hi, n)
    c = 0.5 * (x_lo + x_hi)
    return c + 0.5 * ((x - c) - (x - c)[::-1])


def _rusanov_rhs(u: np.ndarray, dx: float, nu: float) -> np.ndarray:
    # u holds all nodes; boundary nodes act as ghost values
    ul, ur = u[:-1], u[1:]
    a = np.maximum(np.abs(ul), np.abs(ur))
    flux = 0.25 * (ul * ul + ur * ur) - 0.5 * a * (ur - ul)
    conv = (flux[1:] - flux[:-1]) / dx
    diff = nu * (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
    return diff - conv


def solve_reference(problem: BurgersProblem = BurgersProblem(), nx: int = 1024,
                    cfl: float = 0.9, nt: int = 101) -> ReferenceSolution:
    """Integrate the problem to ``problem.T`` and store ``nt`` uniform time slices.

    The step size is ``cfl / (max|u|/dx + 2 nu/dx^2)``, which keeps both the
    advective and the diffusive limit below ``cfl`` and makes the combined
    explicit update monotone.
    """
    if nx < 64:
        raise ValueError(f"nx must be >= 64, got {nx}")
    if not 0 < cfl <= 0.9:
        raise ValueError(f"cfl must lie in (0, 0.9], got {cfl}")
    if nt < 2:
        raise ValueError(f"nt must be >= 2, got {nt}")

    x = symmetric_grid(problem.x_lo, problem.x_hi, nx)
    dx = (problem.x_hi - problem.x_lo) / (nx - 1)
    t_out = np.linspace(0.0, problem.T, nt)
    nu = problem.nu
    bc_lo, bc_hi = problem.bc

    u = np.asarray(problem.ic(x), dtype=np.float64).copy()
    u[0], u[-1] = bc_lo, bc_hi
    values = np.empty((nx, nt))
    values[:, 0] = u

    t = 0.0
    step = 0
    for k in range(1, nt):
        target = t_out[k]
        while t < target:
            umax = float(np.max(np.abs(u)))
            dt = cfl / (umax / dx + 2.0 * nu / (dx * dx))
            if t + dt >= target - 1e-14 * max(1.0, target):
                dt = target - t
            u[1:-1] += dt * _rusanov_rhs(u, dx, nu)
            t = target if dt == target - t else t + dt
            step += 1
            if not np.all(np.isfinite(u)):
                raise SolverDivergence(
                    f"non-finite state at step {step} (t={t:.6g}, max|u|={umax:.6g})")
        values[:, k] = u

    return ReferenceSolution(grid_x=x, grid_t=t_out, values=values)


def sample_reference(sol: ReferenceSolution, points, tol: float = 1e-12) -> np.ndarray:
    """Bilinear interpolation of the stored field at ``points`` (array of (x, t))."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        return np.empty(0)
    xs, ts = pts[:, 0], pts[:, 1]
    x_lo, x_hi, t_lo, t_hi = sol.bounds
    outside = (xs < x_lo - tol) | (xs > x_hi + tol) | (ts < t_lo - tol) | (ts > t_hi + tol)
    if np.any(outside):
        bad = pts[np.argmax(outside)]
        raise ValueError(f"point (x={float(bad[0])!r}, t={float(bad[1])!r}) lies outside the domain")
    xs = np.clip(xs, x_lo, x_hi)
    ts = np.clip(ts, t_lo, t_hi)

    gx, gt, v = sol.grid_x, sol.grid_t, sol.values
    i = np.clip(np.searchsorted(gx, xs, side="right") - 1, 0, len(gx) - 2)
    j = np.clip(np.searchsorted(gt, ts, side="right") - 1, 0, len(gt) - 2)
    wx = (xs - gx[i]) / (gx[i + 1] - gx[i])
    wt = (ts - gt[j]) / (gt[j + 1] - gt[j])
    return ((1 - wx) * (1 - wt) * v[i, j] + wx * (1 - wt) * v[i + 1, j]
            + (1 - wx) * wt * v[i, j + 1] + wx * wt * v[i + 1, j + 1])


def save_reference(sol: ReferenceSolution, path) -> None:
    """Write a CSV: row 1 ``grid_x``, row 2 ``grid_t``, then one row per spatial node."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("grid_x," + ",".join(repr(float(v)) for v in sol.grid_x) + "\n")
        fh.write("grid_t," + ",".join(repr(float(v)) for v in sol.grid_t) + "\n")
        for row in sol.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_reference(path) -> ReferenceSolution:
    lines = Path(path).read_text().splitlines()
    gx = np.array([float(v) for v in lines[0].split(",")[1:]])
    gt = np.array([float(v) for v in lines[1].split(",")[1:]])
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return ReferenceSolution(grid_x=gx, grid_t=gt, values=values)
