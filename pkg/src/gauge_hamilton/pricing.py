"""Option contracts and pricing by backward evolution of a Hamiltonian.

The pricing equation dC/dt = H C is a final-value problem: the payoff is
known at maturity and the operator is evolved backwards.  In remaining
time tau = T - t this is dC/dtau = -H C, discretized by the theta scheme

    (I + theta dtau H) C_new = (I - (1-theta) dtau H) C_old.

theta = 1/2 (Crank-Nicolson) with a short fully implicit startup is the
default; the startup damps the oscillations the payoff kink would
otherwise feed into the averaged scheme.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (GridFunction, LogGrid1D, LogGrid2D, ModelParams,
                   default_grid_1d, default_grid_2d, write_grid_function_csv)
from .operators import LinearOperator, build_bs_hamiltonian, build_mg_hamiltonian

__all__ = [
    "OptionContract",
    "EvolveError",
    "FarFieldBoundary",
    "PriceSurface",
    "terminal_payoff",
    "bs_closed_form",
    "bs_delta",
    "evolve",
    "price_bs",
    "solve_mg",
    "price_mg",
]


@dataclass(frozen=True)
class OptionContract:
    kind: str            # "call" or "put"
    strike: float
    maturity: float
    premium: float = 0.0  # paid up front; only profit queries use it

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise ValueError(f"kind must be 'call' or 'put', got {self.kind!r}")
        if not self.strike > 0.0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not self.maturity > 0.0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.premium < 0.0:
            raise ValueError(f"premium must be nonnegative, got {self.premium}")

    def payoff(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "call":
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


def terminal_payoff(contract: OptionContract, grid) -> GridFunction:
    """Payoff sampled on the grid; constant across y on 2D grids."""
    x = grid.xs if isinstance(grid, LogGrid2D) else grid.points
    return GridFunction(grid, contract.payoff(np.exp(x)))


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bs_closed_form(params: ModelParams, contract: OptionContract, s0: float) -> float:
    """Black-Scholes price from the cumulative normal.

    sigma = 0 is handled as the deterministic limit, where the option is
    worth its discounted intrinsic value on the forward.
    """
    if s0 <= 0.0:
        raise ValueError(f"s0 must be positive, got {s0}")
    k, t = contract.strike, contract.maturity
    r, sigma = params.r, params.sigma
    disc = math.exp(-r * t)
    if sigma == 0.0:
        forward_gap = s0 - k * disc
        return max(forward_gap, 0.0) if contract.kind == "call" else max(-forward_gap, 0.0)
    st = sigma * math.sqrt(t)
    d1 = (math.log(s0 / k) + (r + 0.5 * sigma * sigma) * t) / st
    d2 = d1 - st
    if contract.kind == "call":
        return s0 * _norm_cdf(d1) - k * disc * _norm_cdf(d2)
    return k * disc * _norm_cdf(-d2) - s0 * _norm_cdf(-d1)


def bs_delta(params: ModelParams, contract: OptionContract, s: float, tau: float) -> float:
    """Analytic dC/dS with remaining time tau."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    r, sigma = params.r, params.sigma
    if sigma == 0.0:
        in_money = s > contract.strike * math.exp(-r * tau)
        d = 1.0 if in_money else 0.0
    else:
        st = sigma * math.sqrt(tau)
        d1 = (math.log(s / contract.strike) + (r + 0.5 * sigma * sigma) * tau) / st
        d = _norm_cdf(d1)
    return d if contract.kind == "call" else d - 1.0


class EvolveError(RuntimeError):
    """Raised when a time step's linear solve fails or loses accuracy."""


@dataclass(frozen=True)
class FarFieldBoundary:
    """Dirichlet values on the x faces plus linear extrapolation in y.

    Calls: C = 0 at x_min and C = e^x - K e^{-r tau} at x_max; puts are
    mirrored.  On 2D grids the y faces carry zero-second-derivative rows,
    which lets the solution stay linear in V at the edge of the box.
    """

    contract: OptionContract
    rate: float

    def x_values(self, grid, tau: float) -> tuple[float, float]:
        x_min = grid.x_axis.x_min if isinstance(grid, LogGrid2D) else grid.x_min
        x_max = grid.x_axis.x_max if isinstance(grid, LogGrid2D) else grid.x_max
        pv_strike = self.contract.strike * math.exp(-self.rate * tau)
        if self.contract.kind == "call":
            return 0.0, math.exp(x_max) - pv_strike
        return pv_strike - math.exp(x_min), 0.0


def _boundary_system(grid, boundary: FarFieldBoundary):
    """Index bookkeeping for the modified rows of the stepping system.

    Returns (dirichlet_low, dirichlet_high, replaced_indices, replacement)
    where ``replacement`` holds identity entries for Dirichlet points and
    [1, -2, 1] linearity stencils on the y faces.
    """
    n = grid.n_points
    rows, cols, vals = [], [], []
    if isinstance(grid, LogGrid1D):
        low = np.array([0])
        high = np.array([grid.n - 1])
    else:
        ny = grid.ny
        low = np.arange(ny)                       # i = 0 face
        high = (grid.nx - 1) * ny + np.arange(ny)  # i = nx-1 face
        for i in range(1, grid.nx - 1):
            k = i * ny
            rows += [k, k, k]
            cols += [k, k + 1, k + 2]
            vals += [1.0, -2.0, 1.0]
            k = i * ny + ny - 1
            rows += [k, k, k]
            cols += [k, k - 1, k - 2]
            vals += [1.0, -2.0, 1.0]
    for idx in np.concatenate([low, high]):
        rows.append(int(idx))
        cols.append(int(idx))
        vals.append(1.0)
    replacement = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    replaced = np.unique(np.asarray(rows, dtype=int))
    return low, high, replaced, replacement


@dataclass(frozen=True, eq=False)
class PriceSurface:
    """Solution of the backward evolution at the valuation time.

    ``prev_values`` is the slice one time step closer to maturity, kept so
    time derivatives can be formed without re-solving.
    """

    grid: object
    values: np.ndarray
    valuation_time: float
    prev_values: Optional[np.ndarray] = None
    dt: Optional[float] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.n_points,):
            raise ValueError("surface values do not match the grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("surface values must be finite")

    @property
    def values2d(self) -> np.ndarray:
        if not isinstance(self.grid, LogGrid2D):
            raise TypeError("values2d requires a 2D grid")
        return self.values.reshape(self.grid.shape)

    def interpolate(self, x: float, y: float | None = None) -> float:
        """Linear (bilinear on 2D grids) interpolation at a query point."""
        if isinstance(self.grid, LogGrid2D):
            if y is None:
                raise ValueError("2D surface needs both x and y")
            ax, ay = self.grid.x_axis, self.grid.y_axis
            if not (ax.x_min <= x <= ax.x_max and ay.x_min <= y <= ay.x_max):
                raise ValueError(f"query point ({x}, {y}) outside grid box")
            fx = np.clip((x - ax.x_min) / ax.h, 0, ax.n - 1)
            fy = np.clip((y - ay.x_min) / ay.h, 0, ay.n - 1)
            i0 = min(int(fx), ax.n - 2)
            j0 = min(int(fy), ay.n - 2)
            tx, ty = fx - i0, fy - j0
            v = self.values2d
            return float((1 - tx) * (1 - ty) * v[i0, j0] + tx * (1 - ty) * v[i0 + 1, j0]
                         + (1 - tx) * ty * v[i0, j0 + 1] + tx * ty * v[i0 + 1, j0 + 1])
        g = self.grid
        if not g.x_min <= x <= g.x_max:
            raise ValueError(f"query point {x} outside grid box")
        fx = np.clip((x - g.x_min) / g.h, 0, g.n - 1)
        i0 = min(int(fx), g.n - 2)
        tx = fx - i0
        return float((1 - tx) * self.values[i0] + tx * self.values[i0 + 1])

    def to_csv(self, path) -> None:
        close = False
        if hasattr(path, "write"):
            fh = path
        else:
            fh = open(path, "w")
            close = True
        try:
            fh.write(f"# t={self.valuation_time:.17g}\n")
            write_grid_function_csv(GridFunction(self.grid, self.values), fh)
        finally:
            if close:
                fh.close()


def evolve(h: LinearOperator, terminal: GridFunction, maturity: float,
           n_steps: int, theta_scheme: float = 0.5,
           boundary: Optional[FarFieldBoundary] = None,
           rannacher: int = 2,
           residual_tol: float = 1e-10) -> PriceSurface:
    """March the terminal condition back to the valuation time.

    With no boundary object the operator's own one-sided rows act on the
    faces (adequate for operators whose derivative blocks vanish there or
    for short diagnostics).  A FarFieldBoundary replaces the face rows of
    the implicit system with Dirichlet or linearity rows and feeds the
    time-dependent values through the right-hand side.
    """
    if terminal.grid != h.grid:
        raise ValueError("grid mismatch: terminal condition not on the operator grid")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not 0.0 <= theta_scheme <= 1.0:
        raise ValueError("theta_scheme must lie in [0, 1]")
    if maturity <= 0.0:
        raise ValueError("maturity must be positive")
    grid = h.grid
    n = grid.n_points
    dt = maturity / n_steps

    if theta_scheme < 0.5 and h.matrix.nnz:
        # explicit component: estimate the spectral bound by Gershgorin
        row_sums = np.asarray(np.abs(h.matrix).sum(axis=1)).ravel()
        bound = float(row_sums.max())
        if bound > 0 and dt * (1.0 - 2.0 * theta_scheme) * bound > 2.0:
            warnings.warn(
                f"explicit step may be unstable: dt = {dt:g} exceeds "
                f"{2.0 / ((1.0 - 2.0 * theta_scheme) * bound):g} "
                f"(Gershgorin bound {bound:g})", RuntimeWarning)

    identity = sp.identity(n, format="csr")
    if boundary is not None:
        low, high, replaced, replacement = _boundary_system(grid, boundary)
        keep = np.ones(n)
        keep[replaced] = 0.0
        projector = sp.diags(keep, format="csr")
    else:
        low = high = replaced = replacement = projector = None

    systems = {}

    def get_system(theta: float):
        if theta not in systems:
            a = identity + (theta * dt) * h.matrix
            b = identity - ((1.0 - theta) * dt) * h.matrix
            if boundary is not None:
                a = projector @ a + replacement
                b = projector @ b
            try:
                lu = spla.splu(a.tocsc())
            except RuntimeError as exc:
                raise EvolveError(f"implicit matrix factorization failed: {exc}") from exc
            systems[theta] = (a.tocsr(), b.tocsr(), lu)
        return systems[theta]

    startup = min(rannacher, n_steps) if theta_scheme < 1.0 else 0
    values = terminal.values.copy()
    prev = values
    for step in range(n_steps):
        theta = 1.0 if step < startup else theta_scheme
        a, b, lu = get_system(theta)
        tau_new = (step + 1) * dt
        rhs = b @ values
        if boundary is not None:
            g_low, g_high = boundary.x_values(grid, tau_new)
            rhs[low] = g_low
            rhs[high] = g_high
        new = lu.solve(rhs)
        resid = a @ new - rhs
        scale = max(1.0, float(np.abs(rhs).max()))
        rel = float(np.abs(resid).max()) / scale
        if not np.all(np.isfinite(new)) or rel > residual_tol:
            raise EvolveError(
                f"linear solve at step {step + 1}/{n_steps} has relative residual "
                f"{rel:g} (tolerance {residual_tol:g})")
        prev = values
        values = new
    return PriceSurface(grid=grid, values=values, valuation_time=0.0,
                        prev_values=prev, dt=dt)


def price_bs(params: ModelParams, contract: OptionContract, s0: float,
             grid: LogGrid1D | None = None, n_steps: int = 200,
             theta_scheme: float = 0.5) -> float:
    """Backward-evolved Black-Scholes price read off at ln s0."""
    if grid is None:
        grid = default_grid_1d(s0, params.sigma, contract.maturity)
    h = build_bs_hamiltonian(params, grid)
    surface = evolve(h, terminal_payoff(contract, grid), contract.maturity,
                     n_steps, theta_scheme,
                     boundary=FarFieldBoundary(contract, params.r))
    return surface.interpolate(math.log(s0))


def solve_mg(params: ModelParams, contract: OptionContract, grid: LogGrid2D,
             n_steps: int = 150, theta_scheme: float = 0.5) -> PriceSurface:
    """Full Merton-Garman price surface on the grid."""
    h = build_mg_hamiltonian(params, grid)
    return evolve(h, terminal_payoff(contract, grid), contract.maturity,
                  n_steps, theta_scheme,
                  boundary=FarFieldBoundary(contract, params.r))


def price_mg(params: ModelParams, contract: OptionContract, s0: float, v0: float,
             grid: LogGrid2D | None = None, n_steps: int = 150,
             theta_scheme: float = 0.5) -> float:
    """Merton-Garman price at spot s0 and instantaneous variance v0."""
    if s0 <= 0.0 or v0 <= 0.0:
        raise ValueError("s0 and v0 must be positive")
    if grid is None:
        grid = default_grid_2d(s0, v0, contract.maturity)
    surface = solve_mg(params, contract, grid, n_steps, theta_scheme)
    return surface.interpolate(math.log(s0), math.log(v0))
