"""Discrete Hamiltonians and operator algebra on log grids.

All operators are real sparse matrices acting on flat row-major grid values.
Momentum blocks are plain first derivatives (no imaginary unit), so the
operators here are compositions of difference matrices with diagonal
coefficient matrices.  Interior stencils are second-order central; boundary
rows use one-sided second-order differences under the default policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .core import GridFunction, LogGrid1D, LogGrid2D, ModelParams

__all__ = [
    "BOUNDARY_POLICIES",
    "LinearOperator",
    "GaugeField",
    "identity_operator",
    "momentum_operator",
    "apply",
    "commutator",
    "hermiticity_defect",
    "build_bs_hamiltonian",
    "build_mg_hamiltonian",
    "build_gauge_hamiltonian",
    "build_transformed_bs",
    "gauge_operator",
    "hamiltonian_terms",
    "smooth_probe_functions",
]

BOUNDARY_POLICIES = ("one-sided-interior", "zero-padded")
TRANSFORM_CONVENTIONS = ("direct", "left", "right")

Grid = Union[LogGrid1D, LogGrid2D]


def _first_difference(n: int, h: float, policy: str) -> sp.csr_matrix:
    """d/dx: central (f[i+1]-f[i-1])/(2h) inside, policy-dependent ends."""
    inv2h = 1.0 / (2.0 * h)
    m = sp.lil_matrix((n, n))
    m.setdiag(-inv2h, -1)
    m.setdiag(inv2h, 1)
    m[0, :] = 0.0
    m[n - 1, :] = 0.0
    if policy == "one-sided-interior":
        m[0, [0, 1, 2]] = [-3.0 * inv2h, 4.0 * inv2h, -inv2h]
        m[n - 1, [n - 3, n - 2, n - 1]] = [inv2h, -4.0 * inv2h, 3.0 * inv2h]
    else:  # zero-padded: out-of-range neighbours contribute nothing
        m[0, 1] = inv2h
        m[n - 1, n - 2] = -inv2h
    return m.tocsr()


def _second_difference(n: int, h: float, policy: str) -> sp.csr_matrix:
    """d2/dx2: central (f[i-1]-2f[i]+f[i+1])/h^2 inside."""
    invh2 = 1.0 / (h * h)
    m = sp.lil_matrix((n, n))
    m.setdiag(invh2, -1)
    m.setdiag(-2.0 * invh2, 0)
    m.setdiag(invh2, 1)
    m[0, :] = 0.0
    m[n - 1, :] = 0.0
    if policy == "one-sided-interior":
        m[0, [0, 1, 2, 3]] = [2.0 * invh2, -5.0 * invh2, 4.0 * invh2, -invh2]
        m[n - 1, [n - 4, n - 3, n - 2, n - 1]] = [-invh2, 4.0 * invh2, -5.0 * invh2, 2.0 * invh2]
    else:
        m[0, [0, 1]] = [-2.0 * invh2, invh2]
        m[n - 1, [n - 2, n - 1]] = [invh2, -2.0 * invh2]
    return m.tocsr()


def _check_policy(policy: str) -> None:
    if policy not in BOUNDARY_POLICIES:
        raise ValueError(f"unknown boundary policy {policy!r}; choose from {BOUNDARY_POLICIES}")


@dataclass(eq=False)
class LinearOperator:
    """Sparse matrix tied to a grid.

    stencil_reach records how many layers a row may reference; composed
    operators add their reaches, which matters when deciding how deep an
    "interior" comparison must sit.
    """

    grid: Grid
    matrix: sp.csr_matrix
    boundary_policy: str = "one-sided-interior"
    label: str = ""
    stencil_reach: int = 1

    def __post_init__(self):
        _check_policy(self.boundary_policy)
        mat = sp.csr_matrix(self.matrix)
        n = self.grid.n_points
        if mat.shape != (n, n):
            raise ValueError(f"matrix shape {mat.shape} does not match grid size {n}")
        if mat.nnz and not np.all(np.isfinite(mat.data)):
            raise ValueError("operator entries must be finite")
        self.matrix = mat

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid:
            raise ValueError("grid mismatch: operator and grid function live on different grids")
        return GridFunction(self.grid, self.matrix @ f.values, allow_masked=f.allow_masked)

    def _binary_check(self, other: "LinearOperator") -> None:
        if not isinstance(other, LinearOperator):
            raise TypeError("expected a LinearOperator")
        if other.grid != self.grid:
            raise ValueError("grid mismatch: operators live on different grids")

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        self._binary_check(other)
        return LinearOperator(self.grid, self.matrix + other.matrix, self.boundary_policy,
                              f"({self.label}+{other.label})",
                              max(self.stencil_reach, other.stencil_reach))

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        self._binary_check(other)
        return LinearOperator(self.grid, self.matrix - other.matrix, self.boundary_policy,
                              f"({self.label}-{other.label})",
                              max(self.stencil_reach, other.stencil_reach))

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        self._binary_check(other)
        return LinearOperator(self.grid, self.matrix @ other.matrix, self.boundary_policy,
                              f"({self.label}@{other.label})",
                              self.stencil_reach + other.stencil_reach)

    def __mul__(self, scalar: float) -> "LinearOperator":
        return LinearOperator(self.grid, self.matrix * float(scalar), self.boundary_policy,
                              f"({scalar}*{self.label})", self.stencil_reach)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearOperator":
        return self * -1.0

    def max_abs(self) -> float:
        """Largest absolute entry; 0 for an empty matrix."""
        return float(np.abs(self.matrix.data).max()) if self.matrix.nnz else 0.0

    def to_coo_csv(self, path) -> None:
        """Dump the matrix as row,col,value records for debugging."""
        coo = self.matrix.tocoo()
        close = False
        if hasattr(path, "write"):
            fh = path
        else:
            fh = open(path, "w")
            close = True
        try:
            fh.write("row,col,value\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r},{c},{v:.17g}\n")
        finally:
            if close:
                fh.close()


def identity_operator(grid: Grid) -> LinearOperator:
    return LinearOperator(grid, sp.identity(grid.n_points, format="csr"),
                          label="I", stencil_reach=0)


def momentum_operator(grid: Grid, axis: str = "x",
                      policy: str = "one-sided-interior") -> LinearOperator:
    """First-derivative block along one axis (the momentum is real here)."""
    _check_policy(policy)
    if isinstance(grid, LogGrid1D):
        if axis != "x":
            raise ValueError(f"1D grids only have an x axis, got {axis!r}")
        return LinearOperator(grid, _first_difference(grid.n, grid.h, policy), policy, "p_x")
    if axis == "x":
        mat = sp.kron(_first_difference(grid.nx, grid.hx, policy),
                      sp.identity(grid.ny), format="csr")
    elif axis == "y":
        mat = sp.kron(sp.identity(grid.nx),
                      _first_difference(grid.ny, grid.hy, policy), format="csr")
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    return LinearOperator(grid, mat, policy, f"p_{axis}")


def apply(op: LinearOperator, f: GridFunction) -> GridFunction:
    return op.apply(f)


def commutator(a: LinearOperator, b: LinearOperator) -> LinearOperator:
    a._binary_check(b)
    mat = a.matrix @ b.matrix - b.matrix @ a.matrix
    return LinearOperator(a.grid, mat, a.boundary_policy,
                          f"[{a.label},{b.label}]", a.stencil_reach + b.stencil_reach)


def hermiticity_defect(op: LinearOperator, depth: int = 1) -> float:
    """max |M - M^T| over the interior-by-interior submatrix.

    Boundary rows are excluded because one-sided closures are asymmetric by
    construction and say nothing about the operator itself.
    """
    idx = np.flatnonzero(op.grid.interior_mask(depth))
    sub = op.matrix[idx][:, idx]
    diff = (sub - sub.T).tocoo()
    return float(np.abs(diff.data).max()) if diff.nnz else 0.0


# ---------------------------------------------------------------------------
# Hamiltonian builders
# ---------------------------------------------------------------------------

def _blocks_2d(grid: LogGrid2D, policy: str) -> dict:
    d1x = _first_difference(grid.nx, grid.hx, policy)
    d1y = _first_difference(grid.ny, grid.hy, policy)
    d2x = _second_difference(grid.nx, grid.hx, policy)
    d2y = _second_difference(grid.ny, grid.hy, policy)
    ix = sp.identity(grid.nx)
    iy = sp.identity(grid.ny)
    return {
        "dx": sp.kron(d1x, iy, format="csr"),
        "dy": sp.kron(ix, d1y, format="csr"),
        "dxx": sp.kron(d2x, iy, format="csr"),
        "dyy": sp.kron(ix, d2y, format="csr"),
        # 4-corner cross stencil: exactly the composition of the two
        # central first differences at interior points
        "dxy": sp.kron(d1x, d1y, format="csr"),
    }


def _diag(values: np.ndarray) -> sp.csr_matrix:
    return sp.diags(values, format="csr")


def hamiltonian_terms(params: ModelParams, grid: Grid, model: str = "bs",
                      policy: str = "one-sided-interior") -> dict[str, LinearOperator]:
    """Individual named terms of a Hamiltonian, before summation.

    Keys: second_x, first_x, first_y, cross_xy, second_y, potential.  Terms
    a model does not use are omitted.  The gauge model here is the expanded
    form; the factored form does not decompose into these terms.
    """
    _check_policy(policy)
    n = grid.n_points
    r = params.r

    if model == "bs":
        half_sig2 = 0.5 * params.sigma * params.sigma
        if isinstance(grid, LogGrid1D):
            dxx = _second_difference(grid.n, grid.h, policy)
            dx = _first_difference(grid.n, grid.h, policy)
        else:
            blocks = _blocks_2d(grid, policy)
            dxx, dx = blocks["dxx"], blocks["dx"]
        terms = {
            "second_x": -half_sig2 * dxx,
            "first_x": (half_sig2 - r) * dx,
            "potential": r * sp.identity(n, format="csr"),
        }
    elif model == "mg":
        if not isinstance(grid, LogGrid2D):
            raise TypeError("the Merton-Garman Hamiltonian needs a 2D grid")
        blocks = _blocks_2d(grid, policy)
        y = grid.ys
        ey = np.exp(y)
        zeta2 = params.zeta * params.zeta
        coef_yy = zeta2 * np.exp(2.0 * y * (params.alpha - 1.0))
        if params.vol_vol_half:
            coef_yy = 0.5 * coef_yy
        terms = {
            "second_x": _diag(-0.5 * ey) @ blocks["dxx"],
            "first_x": _diag(-(r - 0.5 * ey)) @ blocks["dx"],
            "first_y": _diag(-(params.lambda_ * np.exp(-y) + params.mu
                               - 0.5 * zeta2 * np.exp(2.0 * y * (params.alpha - 1.0)))) @ blocks["dy"],
            "cross_xy": _diag(-params.rho * params.zeta
                              * np.exp(y * (params.alpha - 0.5))) @ blocks["dxy"],
            "second_y": _diag(-coef_yy) @ blocks["dyy"],
            "potential": r * sp.identity(n, format="csr"),
        }
    elif model == "gauge":
        if not isinstance(grid, LogGrid2D):
            raise TypeError("the gauge Hamiltonian needs a 2D grid")
        blocks = _blocks_2d(grid, policy)
        sig2 = _gauge_sig2(params, grid)
        terms = {
            "second_x": _diag(-0.5 * sig2) @ blocks["dxx"],
            "first_x": _diag(0.5 * sig2 - r) @ blocks["dx"],
            "first_y": _diag(0.5 * sig2 - r) @ blocks["dy"],
            "cross_xy": _diag(-sig2) @ blocks["dxy"],
            "second_y": _diag(-0.5 * sig2) @ blocks["dyy"],
            "potential": r * sp.identity(n, format="csr"),
        }
    else:
        raise ValueError(f"unknown model {model!r}; choose bs, mg or gauge")
    return {name: LinearOperator(grid, mat, policy, name) for name, mat in terms.items()}


def _gauge_sig2(params: ModelParams, grid: LogGrid2D) -> np.ndarray:
    if params.sigma_local:
        return np.exp(grid.ys)
    return np.full(grid.n_points, params.sigma * params.sigma)


def _sum_terms(terms: dict[str, LinearOperator], grid: Grid, policy: str,
               label: str) -> LinearOperator:
    total = None
    for term in terms.values():
        total = term.matrix if total is None else total + term.matrix
    return LinearOperator(grid, total, policy, label)


def build_bs_hamiltonian(params: ModelParams, grid: Grid,
                         policy: str = "one-sided-interior") -> LinearOperator:
    """Black-Scholes Hamiltonian in log price,

        H = -(sigma^2/2) d2/dx2 + (sigma^2/2 - r) d/dx + r.

    On a 2D grid the operator acts only along x, with identical y blocks.
    It annihilates e^x exactly in the continuum and is non-Hermitian unless
    sigma^2 = 2r, where the first-derivative coefficient vanishes.
    """
    return _sum_terms(hamiltonian_terms(params, grid, "bs", policy), grid, policy, "H_bs")


def build_mg_hamiltonian(params: ModelParams, grid: LogGrid2D,
                         policy: str = "one-sided-interior") -> LinearOperator:
    """Merton-Garman Hamiltonian in (x, y) = (ln S, ln V):

        H = -(e^y/2) d2/dx2 - (r - e^y/2) d/dx
            - (lambda e^-y + mu - (zeta^2/2) e^{2y(alpha-1)}) d/dy
            - rho zeta e^{y(alpha-1/2)} d2/dxdy
            - zeta^2 e^{2y(alpha-1)} d2/dy2 + r.

    With ``vol_vol_half`` the last coefficient is halved.  Variable
    coefficients multiply from the left (evaluated at the output point).
    """
    return _sum_terms(hamiltonian_terms(params, grid, "mg", policy), grid, policy, "H_mg")


def build_gauge_hamiltonian(params: ModelParams, grid: LogGrid2D,
                            form: str = "expanded",
                            policy: str = "one-sided-interior") -> LinearOperator:
    """Gauge-coupled Hamiltonian built from the momentum sum p_x + p_y.

    Factored form:  (sigma^2/2)(-p_x - p_y)(p_x + p_y)
                    + (sigma^2/2 - r)(p_x + p_y) + r,
    composed from discrete blocks, so its stencil reach is 2.  The expanded
    form assembles each second-order term with the direct stencils instead;
    the two differ by O(h^2) commutation errors of the difference matrices.
    sigma^2 is read as e^y pointwise when ``params.sigma_local`` is set,
    otherwise the constant ``params.sigma`` squared.
    """
    _check_policy(policy)
    if not isinstance(grid, LogGrid2D):
        raise TypeError("the gauge Hamiltonian needs a 2D grid")
    if form == "expanded":
        return _sum_terms(hamiltonian_terms(params, grid, "gauge", policy),
                          grid, policy, "H_gauge")
    if form != "factored":
        raise ValueError(f"form must be 'expanded' or 'factored', got {form!r}")
    blocks = _blocks_2d(grid, policy)
    sig2 = _gauge_sig2(params, grid)
    d = blocks["dx"] + blocks["dy"]
    mat = (_diag(-0.5 * sig2) @ (d @ d)
           + _diag(0.5 * sig2 - params.r) @ d
           + params.r * sp.identity(grid.n_points, format="csr"))
    return LinearOperator(grid, mat, policy, "H_gauge_factored", stencil_reach=2)


# ---------------------------------------------------------------------------
# Gauge fields and transformed operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaugeField:
    """A scalar field theta(x, y) with caller-supplied analytic derivatives.

    Only pointwise evaluation is ever needed, so the derivatives are plain
    callables; they must stay finite on the grid box.
    """

    theta: Callable
    theta_x: Callable
    theta_y: Callable
    theta_xy: Callable
    omega: float

    @classmethod
    def linear_x(cls, omega: float) -> "GaugeField":
        """theta(x, y) = x."""
        return cls(theta=lambda x, y: x,
                   theta_x=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
                   theta_y=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
                   theta_xy=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
                   omega=omega)

    @classmethod
    def constant(cls, omega: float, value: float = 1.0) -> "GaugeField":
        """theta(x, y) = value."""
        return cls(theta=lambda x, y: np.full_like(np.asarray(x, dtype=float), value),
                   theta_x=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
                   theta_y=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
                   theta_xy=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
                   omega=omega)


def _grid_coords(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(grid, LogGrid2D):
        return grid.xs, grid.ys
    pts = grid.points
    return pts, np.zeros_like(pts)


def _eval_field(fn: Callable, xs: np.ndarray, ys: np.ndarray, name: str,
                grid: Grid) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(fn(xs, ys), dtype=float), xs.shape).copy()
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        where = grid.unravel(k) if isinstance(grid, LogGrid2D) else k
        raise ValueError(f"{name} is not finite at grid index {where}")
    return vals


_EXP_LIMIT = math.log(np.finfo(float).max)  # ~709.78


def gauge_operator(gauge: GaugeField, grid: Grid) -> LinearOperator:
    """Diagonal operator U = diag(e^{omega * theta})."""
    xs, ys = _grid_coords(grid)
    t = _eval_field(gauge.theta, xs, ys, "theta", grid)
    w = gauge.omega * t
    peak = float(np.abs(w).max())
    if peak >= _EXP_LIMIT:
        raise ValueError(f"gauge exponent overflows: max |omega*theta| = {peak:g}")
    return LinearOperator(grid, _diag(np.exp(w)), label="U", stencil_reach=0)


def build_transformed_bs(params: ModelParams, gauge: GaugeField, grid: Grid,
                         convention: str = "direct",
                         policy: str = "one-sided-interior") -> LinearOperator:
    """Black-Scholes Hamiltonian under the multiplicative shift e^{omega theta}.

    Conventions:
      direct  closed-form shifted operator assembled term by term:
              H_bs + (sigma^2 omega (1+omega)/2) theta_x^2
                   + sigma^2 omega theta_x d/dx
                   + omega (sigma^2/2 - r) theta_x
      left    U^-1 H_bs U  (matrix sandwich)
      right   U H_bs U^-1

    The three do not coincide for non-constant theta; the CLI ``check
    --what transform`` reports how far apart they sit.
    """
    if convention not in TRANSFORM_CONVENTIONS:
        raise ValueError(f"convention must be one of {TRANSFORM_CONVENTIONS}, got {convention!r}")
    h_bs = build_bs_hamiltonian(params, grid, policy)
    if convention == "direct":
        xs, ys = _grid_coords(grid)
        tx = _eval_field(gauge.theta_x, xs, ys, "theta_x", grid)
        sig2 = params.sigma * params.sigma
        om = gauge.omega
        if isinstance(grid, LogGrid1D):
            dx = _first_difference(grid.n, grid.h, policy)
        else:
            dx = _blocks_2d(grid, policy)["dx"]
        extra = (_diag(sig2 * om * tx) @ dx
                 + _diag(0.5 * sig2 * om * (1.0 + om) * tx * tx
                         + om * (0.5 * sig2 - params.r) * tx))
        return LinearOperator(grid, h_bs.matrix + extra, policy, "H_bs_shifted")
    u = gauge_operator(gauge, grid)
    u_inv = gauge_operator(
        GaugeField(gauge.theta, gauge.theta_x, gauge.theta_y, gauge.theta_xy, -gauge.omega),
        grid)
    if convention == "left":
        mat = u_inv.matrix @ h_bs.matrix @ u.matrix
        label = "Uinv_H_U"
    else:
        mat = u.matrix @ h_bs.matrix @ u_inv.matrix
        label = "U_H_Uinv"
    return LinearOperator(grid, mat, policy, label)


# ---------------------------------------------------------------------------
# Probe functions for equivalence checks
# ---------------------------------------------------------------------------

def smooth_probe_functions(grid: Grid, count: int, seed: int = 0,
                           y_constant: bool = False) -> list[Callable]:
    """Random low-frequency Fourier combinations on the grid box.

    Returns callables (not samples) so the same function can be evaluated
    on refinements of the box.  Amplitudes are normalized so the sup norm
    is at most 1.  With ``y_constant`` the functions do not depend on y.
    """
    rng = np.random.default_rng(seed)
    if isinstance(grid, LogGrid2D):
        x0, lx = grid.x_axis.x_min, grid.x_axis.x_max - grid.x_axis.x_min
        y0, ly = grid.y_axis.x_min, grid.y_axis.x_max - grid.y_axis.x_min
    else:
        x0, lx = grid.x_min, grid.x_max - grid.x_min
        y0, ly = 0.0, 1.0

    def make(amps, phx, phy):
        def f(x, y=None):
            u = (np.asarray(x, dtype=float) - x0) / lx * np.pi
            out = 0.0
            if y_constant or y is None:
                for k in range(len(amps)):
                    out = out + amps[k] * np.sin((k + 1) * u + phx[k])
            else:
                v = (np.asarray(y, dtype=float) - y0) / ly * np.pi
                for k in range(len(amps)):
                    out = out + amps[k] * np.sin((k + 1) * u + phx[k]) * np.cos((k + 1) * v + phy[k])
            return out
        return f

    funcs = []
    for _ in range(count):
        amps = rng.normal(size=3)
        amps = amps / np.abs(amps).sum()  # sup norm <= 1
        phx = rng.uniform(0.0, 2.0 * np.pi, size=3)
        phy = rng.uniform(0.0, 2.0 * np.pi, size=3)
        funcs.append(make(amps, phx, phy))
    return funcs
