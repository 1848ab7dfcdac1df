"""Physical problem definition and the finite-difference reference solver.

The transported quantity is a pollutant concentration u(t, x, y) obeying

    du/dt + v_x du/dx + v_y du/dy = D (d2u/dx2 + d2u/dy2)

on [0, x_max] x [0, y_max] with homogeneous Dirichlet boundaries and a
Gaussian release at the domain center.  The solver is explicit forward
Euler with second-order central differences for both the advective and
diffusive terms; ``check_stability`` guards the scheme.  Everything here is
double precision: the reference must be the most accurate artifact in the
system.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rng import stream

__all__ = [
    "DomainSpec",
    "GridSpec",
    "GridSolution",
    "NoiseSpec",
    "StabilityReport",
    "StabilityViolation",
    "initial_condition",
    "analytic_solution",
    "analytic_jet",
    "solve_fdm",
    "add_field_noise",
    "check_stability",
]

# Gaussian release: exp(-100 r^2) == exp(-r^2 / (2 sigma0^2)), sigma0^2 = 1/200
IC_CENTER = (0.5, 0.5)
IC_SIGMA0_SQ = 1.0 / 200.0


class StabilityViolation(RuntimeError):
    """Raised when the explicit scheme would be unstable for a grid."""

    def __init__(self, report: "StabilityReport"):
        super().__init__(f"unstable FDM configuration: {report.failures()}")
        self.report = report


@dataclass(frozen=True)
class DomainSpec:
    """Physical problem: domain box, diffusivity, constant velocity."""

    t_final: float = 0.25
    x_max: float = 1.0
    y_max: float = 1.0
    diffusion_d: float = 0.01
    vel_x: float = 0.5
    vel_y: float = 0.5

    def __post_init__(self):
        if self.t_final <= 0:
            raise ValueError("t_final must be > 0")
        if self.x_max <= 0 or self.y_max <= 0:
            raise ValueError("domain extents must be > 0")
        if self.diffusion_d < 0:
            raise ValueError("diffusion_d must be >= 0")


@dataclass(frozen=True)
class GridSpec:
    """Space-time discretization: node counts per axis and time step count."""

    nx: int = 51
    ny: int = 51
    nt: int = 100

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError("need nx, ny >= 3 for an interior stencil")
        if self.nt < 1:
            raise ValueError("need nt >= 1")

    def dx(self, spec: DomainSpec) -> float:
        return spec.x_max / (self.nx - 1)

    def dy(self, spec: DomainSpec) -> float:
        return spec.y_max / (self.ny - 1)

    def dt(self, spec: DomainSpec) -> float:
        return spec.t_final / self.nt

    def axes(self, spec: DomainSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(times, xs, ys) node coordinates; times has nt+1 entries."""
        times = np.linspace(0.0, spec.t_final, self.nt + 1)
        xs = np.linspace(0.0, spec.x_max, self.nx)
        ys = np.linspace(0.0, spec.y_max, self.ny)
        return times, xs, ys

    @property
    def n_points(self) -> int:
        return (self.nt + 1) * self.nx * self.ny


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise levels for BC/IC training terms and the data field."""

    bc_abs_sigma: float = 0.01
    ic_rel_sigma: float = 0.005
    data_rel_sigma: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if min(self.bc_abs_sigma, self.ic_rel_sigma, self.data_rel_sigma) < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass
class GridSolution:
    """Dense concentration field, values indexed [time_level][ix][iy]."""

    spec: DomainSpec
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expect = (self.grid.nt + 1, self.grid.nx, self.grid.ny)
        if self.values.shape != expect:
            raise ValueError(f"values shape {self.values.shape} != {expect}")

    @property
    def n_points(self) -> int:
        return self.values.size

    def level(self, k: int) -> np.ndarray:
        return self.values[k]


def initial_condition(x, y):
    """Concentration at t=0: sharp Gaussian centered at (0.5, 0.5)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cx, cy = IC_CENTER
    return np.exp(-100.0 * ((x - cx) ** 2 + (y - cy) ** 2))


def analytic_solution(spec: DomainSpec, t, x, y):
    """Free-space evolution of the Gaussian release (oracle, not a solver).

    The initial Gaussian has variance sigma0^2 = 1/200; advection moves the
    center with the velocity and diffusion grows the variance to
    sigma^2(t) = sigma0^2 + 2 D t, scaling the amplitude by
    sigma0^2 / sigma^2(t).  Exact on an infinite plane; near the clamped
    domain edges it differs from the Dirichlet problem only by the
    (exponentially small) mass that would have crossed the boundary.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cx = IC_CENTER[0] + spec.vel_x * t
    cy = IC_CENTER[1] + spec.vel_y * t
    var = IC_SIGMA0_SQ + 2.0 * spec.diffusion_d * t
    rho = (x - cx) ** 2 + (y - cy) ** 2
    return (IC_SIGMA0_SQ / var) * np.exp(-rho / (2.0 * var))


def analytic_jet(spec: DomainSpec, t, x, y) -> dict[str, np.ndarray]:
    """Closed-form partials of ``analytic_solution`` (du_dt, du_dx, ...).

    Used as the independent oracle for PDE-residual tests: plugging these
    into the residual operator must give ~0.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    D, vx, vy = spec.diffusion_d, spec.vel_x, spec.vel_y
    cx = IC_CENTER[0] + vx * t
    cy = IC_CENTER[1] + vy * t
    var = IC_SIGMA0_SQ + 2.0 * D * t
    dxc = x - cx
    dyc = y - cy
    rho = dxc ** 2 + dyc ** 2
    u = (IC_SIGMA0_SQ / var) * np.exp(-rho / (2.0 * var))
    du_dx = u * (-dxc / var)
    du_dy = u * (-dyc / var)
    d2u_dx2 = u * (dxc ** 2 / var ** 2 - 1.0 / var)
    d2u_dy2 = u * (dyc ** 2 / var ** 2 - 1.0 / var)
    # d/dt acts through the amplitude, the moving center, and the variance
    dvar_dt = 2.0 * D
    du_dt = u * (
        -dvar_dt / var
        + (vx * dxc + vy * dyc) / var
        + rho * dvar_dt / (2.0 * var ** 2)
    )
    return {
        "u": u,
        "du_dt": du_dt,
        "du_dx": du_dx,
        "du_dy": du_dy,
        "d2u_dx2": d2u_dx2,
        "d2u_dy2": d2u_dy2,
    }


@dataclass(frozen=True)
class StabilityReport:
    """Explicit-scheme stability numbers and the pass/fail verdict."""

    r_x: float
    r_y: float
    c_x: float
    c_y: float
    pe_x: float
    pe_y: float

    @property
    def passed(self) -> bool:
        return not self.failures()

    def failures(self) -> list[str]:
        bad = []
        if self.r_x + self.r_y > 0.5:
            bad.append(f"diffusion number r_x + r_y = {self.r_x + self.r_y:.4g} > 0.5")
        if self.c_x > 1.0:
            bad.append(f"Courant number c_x = {self.c_x:.4g} > 1")
        if self.c_y > 1.0:
            bad.append(f"Courant number c_y = {self.c_y:.4g} > 1")
        if self.pe_x > 2.0:
            bad.append(f"cell Peclet Pe_x = {self.pe_x:.4g} > 2")
        if self.pe_y > 2.0:
            bad.append(f"cell Peclet Pe_y = {self.pe_y:.4g} > 2")
        return bad

    def as_dict(self) -> dict[str, float]:
        return {
            "r_x": self.r_x,
            "r_y": self.r_y,
            "c_x": self.c_x,
            "c_y": self.c_y,
            "pe_x": self.pe_x,
            "pe_y": self.pe_y,
        }


def check_stability(spec: DomainSpec, grid: GridSpec) -> StabilityReport:
    """Stability numbers for forward Euler + central differences.

    Pe is 0/0 when both D and v vanish along an axis; that limit is
    harmless (no transport at all) and reported as 0.
    """
    dx, dy, dt = grid.dx(spec), grid.dy(spec), grid.dt(spec)
    D = spec.diffusion_d
    vx, vy = abs(spec.vel_x), abs(spec.vel_y)
    if D > 0:
        pe_x, pe_y = vx * dx / D, vy * dy / D
    else:
        pe_x = 0.0 if vx == 0 else np.inf
        pe_y = 0.0 if vy == 0 else np.inf
    return StabilityReport(
        r_x=D * dt / dx ** 2,
        r_y=D * dt / dy ** 2,
        c_x=vx * dt / dx,
        c_y=vy * dt / dy,
        pe_x=pe_x,
        pe_y=pe_y,
    )


def solve_fdm(spec: DomainSpec, grid: GridSpec, force: bool = False) -> GridSolution:
    """Clean reference solution on the full space-time grid.

    Level 0 is the sampled initial condition exactly (no boundary clamp);
    levels 1..nt are advanced explicitly with u = 0 clamped on all four
    edges.  Deterministic, no randomness involved.
    """
    report = check_stability(spec, grid)
    if not report.passed and not force:
        raise StabilityViolation(report)

    dx, dy, dt = grid.dx(spec), grid.dy(spec), grid.dt(spec)
    D, vx, vy = spec.diffusion_d, spec.vel_x, spec.vel_y
    _, xs, ys = grid.axes(spec)

    values = np.zeros((grid.nt + 1, grid.nx, grid.ny), dtype=np.float64)
    values[0] = initial_condition(xs[:, None], ys[None, :])

    u = values[0].copy()
    u[0, :] = u[-1, :] = u[:, 0] = u[:, -1] = 0.0  # effective Dirichlet state
    for k in range(grid.nt):
        c = u[1:-1, 1:-1]
        lap = (u[2:, 1:-1] - 2.0 * c + u[:-2, 1:-1]) / dx ** 2 \
            + (u[1:-1, 2:] - 2.0 * c + u[1:-1, :-2]) / dy ** 2
        adv = vx * (u[2:, 1:-1] - u[:-2, 1:-1]) / (2.0 * dx) \
            + vy * (u[1:-1, 2:] - u[1:-1, :-2]) / (2.0 * dy)
        nxt = np.zeros_like(u)
        nxt[1:-1, 1:-1] = c + dt * (D * lap - adv)
        values[k + 1] = nxt
        u = nxt
    return GridSolution(spec=spec, grid=grid, values=values)


def field_std(sol: GridSolution) -> float:
    """Population standard deviation over every stored value."""
    return float(sol.values.std())


def add_field_noise(sol: GridSolution, noise: NoiseSpec) -> GridSolution:
    """Additive Gaussian noise scaled to the clean field's spread.

    sigma = data_rel_sigma * population std over all entries; noise entries
    are drawn in [time][ix][iy] row-major order from the child stream
    ``field-noise`` of ``noise.seed``.  The input solution is not modified.
    """
    sigma = noise.data_rel_sigma * field_std(sol)
    if sigma == 0.0:
        return replace(sol, values=sol.values.copy())
    gen = stream(noise.seed, "field-noise")
    eps = gen.normals(sol.values.size).reshape(sol.values.shape)
    return replace(sol, values=sol.values + sigma * eps)
