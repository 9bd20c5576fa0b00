"""Path simulation and simulation-based cross checks.

Randomness comes from counter-based Philox streams keyed per block of
paths, so results depend only on (seed, n_paths, n_steps) and never on how
blocks are scheduled.  Reductions assemble full arrays and use numpy's
pairwise summation, keeping means bit-reproducible.

The security follows log-Euler steps (exact in law for constant variance);
the variance follows Euler steps with a reflecting floor.  Both simulators
consume the same block of draws per step, so a Merton-Garman run with the
variance frozen reproduces the GBM paths of the same seed exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .core import GridFunction, LogGrid2D, ModelParams
from .pricing import OptionContract, PriceSurface, bs_closed_form

__all__ = [
    "PathEnsemble",
    "correlated_normals",
    "simulate_gbm",
    "simulate_mg",
    "mc_price",
    "HedgeTestResult",
    "delta_hedge_test",
    "hedge_coefficients",
    "beta_field",
    "read_paths_binary",
]

BLOCK = 1 << 14          # paths per RNG stream
V_FLOOR_DEFAULT = 1e-8
_MAGIC = b"MGPATHS1"
_SCHEME_CODES = {"log_euler": 0, "euler": 1}
_SCHEME_NAMES = {v: k for k, v in _SCHEME_CODES.items()}


def _block_rng(seed: int, block: int) -> np.random.Generator:
    # one Philox stream per block: same key, block index in the high
    # counter word, so streams never overlap
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, block]))


def _blocks(n_paths: int):
    for b in range(0, (n_paths + BLOCK - 1) // BLOCK):
        start = b * BLOCK
        yield b, start, min(BLOCK, n_paths - start)


def correlated_normals(rho: float, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n draws of the correlated pair (z1, rho z1 + sqrt(1-rho^2) z2)."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    rng = _block_rng(seed, 0)
    z = rng.standard_normal((2, n))
    return z[0], rho * z[0] + math.sqrt(1.0 - rho * rho) * z[1]


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Simulated paths on a shared time axis.

    s_paths has shape (n_paths, n_steps + 1); v_paths matches it or is None
    for constant-variance runs.  ``phi`` records the drift the paths were
    generated under; risk-neutral pricing insists on phi = r.
    """

    times: np.ndarray
    s_paths: np.ndarray
    v_paths: Optional[np.ndarray]
    seed: int
    scheme: str
    phi: float

    def __post_init__(self):
        if self.scheme not in _SCHEME_CODES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.s_paths.shape[1] != self.times.shape[0]:
            raise ValueError("path array does not match the time axis")

    @property
    def n_paths(self) -> int:
        return self.s_paths.shape[0]

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def maturity(self) -> float:
        return float(self.times[-1])

    def slices_to_csv(self, path) -> None:
        """First and last time slice of every path."""
        close = False
        if hasattr(path, "write"):
            fh = path
        else:
            fh = open(path, "w")
            close = True
        try:
            if self.v_paths is None:
                fh.write("path,s_first,s_last\n")
                for p in range(self.n_paths):
                    fh.write(f"{p},{self.s_paths[p, 0]:.17g},{self.s_paths[p, -1]:.17g}\n")
            else:
                fh.write("path,s_first,s_last,v_first,v_last\n")
                for p in range(self.n_paths):
                    fh.write(f"{p},{self.s_paths[p, 0]:.17g},{self.s_paths[p, -1]:.17g},"
                             f"{self.v_paths[p, 0]:.17g},{self.v_paths[p, -1]:.17g}\n")
        finally:
            if close:
                fh.close()

    def to_binary(self, path) -> None:
        """Row-major dump: magic, sizes, drift, seed, times, S, then V."""
        has_v = self.v_paths is not None
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            header = np.array([self.n_paths, self.times.shape[0], int(has_v),
                               _SCHEME_CODES[self.scheme]], dtype=np.uint64)
            fh.write(header.tobytes())
            fh.write(np.array([self.phi], dtype=np.float64).tobytes())
            fh.write(np.array([self.seed], dtype=np.int64).tobytes())
            fh.write(np.ascontiguousarray(self.times, dtype=np.float64).tobytes())
            fh.write(np.ascontiguousarray(self.s_paths, dtype=np.float64).tobytes())
            if has_v:
                fh.write(np.ascontiguousarray(self.v_paths, dtype=np.float64).tobytes())


def read_paths_binary(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a paths dump: bad magic {magic!r}")
        n_paths, n_times, has_v, scheme_code = np.frombuffer(fh.read(32), dtype=np.uint64)
        phi = float(np.frombuffer(fh.read(8), dtype=np.float64)[0])
        seed = int(np.frombuffer(fh.read(8), dtype=np.int64)[0])
        times = np.frombuffer(fh.read(8 * int(n_times)), dtype=np.float64).copy()
        s = np.frombuffer(fh.read(8 * int(n_paths) * int(n_times)),
                          dtype=np.float64).reshape(int(n_paths), int(n_times)).copy()
        v = None
        if has_v:
            v = np.frombuffer(fh.read(8 * int(n_paths) * int(n_times)),
                              dtype=np.float64).reshape(int(n_paths), int(n_times)).copy()
    return PathEnsemble(times=times, s_paths=s, v_paths=v, seed=seed,
                        scheme=_SCHEME_NAMES[int(scheme_code)], phi=phi)


def _run_blocks(n_paths: int, threads: int, worker) -> None:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda args: worker(*args), list(_blocks(n_paths))))
    else:
        for args in _blocks(n_paths):
            worker(*args)


def _validate_run(s0, maturity, n_steps, n_paths):
    if s0 <= 0.0:
        raise ValueError(f"s0 must be positive, got {s0}")
    if maturity <= 0.0:
        raise ValueError(f"maturity must be positive, got {maturity}")
    if n_steps < 1 or n_paths < 1:
        raise ValueError("n_steps and n_paths must be at least 1")


def simulate_gbm(params: ModelParams, s0: float, maturity: float,
                 n_steps: int, n_paths: int, seed: int,
                 threads: int = 1) -> PathEnsemble:
    """Geometric Brownian motion under drift phi via log-Euler steps,

        ln S_{k+1} = ln S_k + (phi - sigma^2/2) dt + sigma sqrt(dt) z,

    which is exact in law at every step, so n_steps only sets the sampling
    resolution of the stored paths.
    """
    _validate_run(s0, maturity, n_steps, n_paths)
    dt = maturity / n_steps
    sqdt = math.sqrt(dt)
    drift = (params.phi - 0.5 * params.sigma * params.sigma) * dt
    log_s = np.empty((n_paths, n_steps + 1))
    log_s[:, 0] = math.log(s0)

    def worker(block, start, size):
        # draw the full block even when partially used, so a path's noise
        # depends only on (seed, block, offset) and not on n_paths
        z = _block_rng(seed, block).standard_normal((n_steps, 2, BLOCK))[..., :size]
        rows = slice(start, start + size)
        for k in range(n_steps):
            log_s[rows, k + 1] = log_s[rows, k] + drift + params.sigma * sqdt * z[k, 0]

    _run_blocks(n_paths, threads, worker)
    return PathEnsemble(times=np.linspace(0.0, maturity, n_steps + 1),
                        s_paths=np.exp(log_s), v_paths=None,
                        seed=seed, scheme="log_euler", phi=params.phi)


def simulate_mg(params: ModelParams, s0: float, v0: float, maturity: float,
                n_steps: int, n_paths: int, seed: int,
                v_floor: float = V_FLOOR_DEFAULT,
                threads: int = 1) -> PathEnsemble:
    """Joint price/variance paths,

        dV = (lambda + mu V) dt + zeta V^alpha dW2,
        ln S steps with the current variance,  corr(dW1, dW2) = rho.

    V uses Euler steps reflected at ``v_floor`` (|V| if it turns negative,
    never below the floor).  The second noise is built as
    rho z1 + sqrt(1 - rho^2) z2 from the same draw block GBM uses, so
    freezing the variance reproduces simulate_gbm paths for the same seed.
    """
    _validate_run(s0, maturity, n_steps, n_paths)
    if v0 <= 0.0:
        raise ValueError(f"v0 must be positive, got {v0}")
    dt = maturity / n_steps
    sqdt = math.sqrt(dt)
    rho = params.rho
    rho_c = math.sqrt(1.0 - rho * rho)
    log_s = np.empty((n_paths, n_steps + 1))
    v = np.empty((n_paths, n_steps + 1))
    log_s[:, 0] = math.log(s0)
    v[:, 0] = v0

    def worker(block, start, size):
        z = _block_rng(seed, block).standard_normal((n_steps, 2, BLOCK))[..., :size]
        rows = slice(start, start + size)
        for k in range(n_steps):
            vk = v[rows, k]
            z1 = z[k, 0]
            z2 = rho * z1 + rho_c * z[k, 1]
            log_s[rows, k + 1] = (log_s[rows, k] + (params.phi - 0.5 * vk) * dt
                                  + np.sqrt(vk) * sqdt * z1)
            v_next = vk + (params.lambda_ + params.mu * vk) * dt \
                + params.zeta * vk ** params.alpha * sqdt * z2
            v[rows, k + 1] = np.maximum(np.abs(v_next), v_floor)

    _run_blocks(n_paths, threads, worker)
    return PathEnsemble(times=np.linspace(0.0, maturity, n_steps + 1),
                        s_paths=np.exp(log_s), v_paths=v,
                        seed=seed, scheme="log_euler", phi=params.phi)


def mc_price(ensemble: PathEnsemble, contract: OptionContract,
             r: float) -> tuple[float, float]:
    """Discounted mean payoff and its standard error (sample std / sqrt n).

    The ensemble must have been generated risk-neutrally (phi = r) and run
    to the contract maturity.
    """
    if ensemble.phi != r:
        raise ValueError(
            f"risk-neutral pricing requires phi = r, ensemble has phi = {ensemble.phi}")
    if abs(ensemble.maturity - contract.maturity) > 1e-12:
        raise ValueError("ensemble horizon differs from contract maturity")
    discounted = math.exp(-r * contract.maturity) * contract.payoff(ensemble.s_paths[:, -1])
    n = discounted.shape[0]
    price = float(discounted.mean())
    stderr = float(discounted.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return price, stderr


@dataclass(frozen=True)
class HedgeTestResult:
    mean_error: float    # mean terminal replication error
    std_error: float     # std of the terminal replication error
    stderr: float        # standard error of mean_error
    n_paths: int
    n_steps: int

    def to_dict(self) -> dict:
        return {
            "mean_error": self.mean_error,
            "std_error": self.std_error,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
        }


def _bs_delta_vec(params: ModelParams, contract: OptionContract,
                  s: np.ndarray, tau: float) -> np.ndarray:
    if params.sigma == 0.0:
        d = (s > contract.strike * math.exp(-params.r * tau)).astype(float)
    else:
        st = params.sigma * math.sqrt(tau)
        d1 = (np.log(s / contract.strike) + (params.r + 0.5 * params.sigma ** 2) * tau) / st
        d = ndtr(d1)
    return d if contract.kind == "call" else d - 1.0


def delta_hedge_test(params: ModelParams, contract: OptionContract, s0: float,
                     n_steps: int, n_paths: int, seed: int) -> HedgeTestResult:
    """Replicate the option with the analytic delta along simulated paths.

    The hedger sells the option at the model price, holds delta shares, and
    accrues cash at r between the n_steps rebalances.  The terminal error
    (portfolio minus payoff) has mean zero and standard deviation shrinking
    like 1/sqrt(n_steps); sigma = 0 replicates exactly.
    """
    ensemble = simulate_gbm(params, s0, contract.maturity, n_steps, n_paths, seed)
    s = ensemble.s_paths
    dt = contract.maturity / n_steps
    grow = math.exp(params.r * dt)

    delta = _bs_delta_vec(params, contract, s[:, 0], contract.maturity)
    cash = np.full(n_paths, bs_closed_form(params, contract, s0)) - delta * s[:, 0]
    for k in range(1, n_steps):
        cash = cash * grow
        tau = contract.maturity - k * dt
        new_delta = _bs_delta_vec(params, contract, s[:, k], tau)
        cash -= (new_delta - delta) * s[:, k]
        delta = new_delta
    portfolio = cash * grow + delta * s[:, -1]
    error = portfolio - contract.payoff(s[:, -1])
    mean = float(error.mean())
    std = float(error.std(ddof=1)) if n_paths > 1 else 0.0
    return HedgeTestResult(mean_error=mean, std_error=std,
                           stderr=std / math.sqrt(n_paths),
                           n_paths=n_paths, n_steps=n_steps)


def hedge_coefficients(c1: PriceSurface, c2: PriceSurface,
                       point: tuple[int, int],
                       params: ModelParams) -> tuple[float, float]:
    """Two-instrument hedge weights at a grid point.

    With Xi = sigma S dC/dS and Psi = zeta V^alpha dC/dV (sigma here is the
    local volatility sqrt(V)), the volatility exposure cancels with
    Gamma1 = -Psi1/Psi2 and the price exposure with
    Gamma2 = -(Xi1 + Gamma1 Xi2)/(sigma S).  Derivatives are central
    differences, so the point must be interior.
    """
    if c1.grid != c2.grid:
        raise ValueError("surfaces live on different grids")
    grid = c1.grid
    if not isinstance(grid, LogGrid2D):
        raise TypeError("hedge coefficients need 2D surfaces")
    i, j = point
    if not (1 <= i <= grid.nx - 2 and 1 <= j <= grid.ny - 2):
        raise ValueError(f"point {point} is not interior to the grid")
    x = grid.x_axis.points[i]
    y = grid.y_axis.points[j]

    def slopes(surface):
        v = surface.values2d
        dx = (v[i + 1, j] - v[i - 1, j]) / (2.0 * grid.hx)
        dy = (v[i, j + 1] - v[i, j - 1]) / (2.0 * grid.hy)
        return dx, dy

    dx1, dy1 = slopes(c1)
    dx2, dy2 = slopes(c2)
    # dC/dV = e^-y dC/dy, so Psi = zeta e^{(alpha-1) y} dC/dy
    psi_scale = params.zeta * math.exp((params.alpha - 1.0) * y)
    psi1, psi2 = psi_scale * dy1, psi_scale * dy2
    # Xi = sqrt(V) S dC/dS = e^{y/2} dC/dx
    xi_scale = math.exp(0.5 * y)
    xi1, xi2 = xi_scale * dx1, xi_scale * dx2
    if psi2 == 0.0:
        raise ValueError("second option insensitive to volatility: hedge undefined")
    gamma1 = -psi1 / psi2
    gamma2 = -(xi1 + gamma1 * xi2) / (math.exp(0.5 * y) * math.exp(x))
    return gamma1, gamma2


def beta_field(surface: PriceSurface, params: ModelParams,
               min_dcdv: float = 1e-6) -> GridFunction:
    """Market price of volatility risk implied by a solved surface,

        beta = [dC/dt + r S dC/dS + (lambda + mu V) dC/dV
                + (V S^2/2) d2C/dS2 + rho zeta V^{1/2+alpha} S d2C/dSdV
                + zeta^2 V^{2alpha} d2C/dV2 - r C] / dC/dV.

    dC/dt comes from the two stored time slices (first-order backward
    difference); spatial derivatives are central.  Points on the boundary
    or with |dC/dV| below ``min_dcdv`` are masked with NaN rather than
    extrapolated.  A surface that solves the pricing equation has beta = 0
    up to discretization error.
    """
    grid = surface.grid
    if not isinstance(grid, LogGrid2D):
        raise TypeError("beta extraction needs a 2D surface")
    if surface.prev_values is None or surface.dt is None:
        raise ValueError("surface must carry two time slices (prev_values and dt)")
    c = surface.values2d
    c_prev = surface.prev_values.reshape(grid.shape)
    hx, hy = grid.hx, grid.hy
    x = grid.x_axis.points[:, None]
    y = grid.y_axis.points[None, :]

    out = np.full(grid.shape, np.nan)
    sl = slice(1, -1)
    cx = (c[2:, sl] - c[:-2, sl]) / (2 * hx)
    cy = (c[sl, 2:] - c[sl, :-2]) / (2 * hy)
    cxx = (c[2:, sl] - 2 * c[sl, sl] + c[:-2, sl]) / hx ** 2
    cyy = (c[sl, 2:] - 2 * c[sl, sl] + c[sl, :-2]) / hy ** 2
    cxy = (c[2:, 2:] - c[2:, :-2] - c[:-2, 2:] + c[:-2, :-2]) / (4 * hx * hy)
    ct = (c_prev[sl, sl] - c[sl, sl]) / surface.dt  # forward in calendar time

    xi, yi = x[sl, :], y[:, sl]
    s = np.exp(xi)
    v = np.exp(yi)
    c_s = cx / s
    c_ss = (cxx - cx) / s ** 2
    c_v = cy / v
    c_vv = (cyy - cy) / v ** 2
    c_sv = cxy / (s * v)

    zeta2 = params.zeta ** 2
    vol_vol = 0.5 * zeta2 if params.vol_vol_half else zeta2
    numerator = (ct + params.r * s * c_s + (params.lambda_ + params.mu * v) * c_v
                 + 0.5 * v * s ** 2 * c_ss
                 + params.rho * params.zeta * v ** (0.5 + params.alpha) * s * c_sv
                 + vol_vol * v ** (2.0 * params.alpha) * c_vv
                 - params.r * c[sl, sl])
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.where(np.abs(c_v) >= min_dcdv, numerator / c_v, np.nan)
    out[sl, sl] = beta
    return GridFunction(grid, out.ravel(), allow_masked=True)
