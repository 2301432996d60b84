"""Path simulation on a uniform grid, vectorized across paths.

Conventions used throughout the package (the weight kernels depend on them):

  * dt-integrals are trapezoid sums over the grid nodes,
  * dW-integrals are left-point (Ito) sums over the step increments,
  * the stored volatility-driver increment is dW_i = xi_i * sqrt(dt) where
    xi_i are the same standard normals that drive the state recursion.

The OU driver uses its exact Gaussian transition

    Y_{i+1} = Y_i e^{-a dt} + k sqrt((1 - e^{-2 a dt}) / (2 a)) xi_i,

so the law of the path at the nodes has no discretization bias; the O(dt)
mismatch between the exact transition and left-point Ito sums downstream
vanishes under grid refinement. The CIR variance uses full-truncation Euler
with a positivity floor, the standard weakly convergent positive-preserving
scheme; exact noncentral-chi^2 sampling is of no use here because the
weight kernels need the pathwise integral of 1/Z on the grid.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FloorSaturation, InvalidGrid
from .rng import PURPOSE_ASSET, NoiseStream

Z_FLOOR = 1e-12
FLOOR_RATE_LIMIT = 1e-3  # per-path floored-step budget before FloorSaturation


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_n = T with trapezoid weights."""

    T: float
    n_steps: int

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def t(self):
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def trapezoid_weights(self):
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def make_grid(T, n_steps):
    if not (T > 0):
        raise InvalidGrid(f"T must be > 0, got {T}")
    if int(n_steps) != n_steps or n_steps < 2:
        raise InvalidGrid(f"n_steps must be an integer >= 2, got {n_steps}")
    return TimeGrid(T=float(T), n_steps=int(n_steps))


@dataclass
class OUPathBatch:
    """A batch of OU driver paths with the integrals the weights consume.

    ``ito_prefix[p, j]`` is the left-point sum of e^{alpha t_i} dW_i over
    i < j, i.e. the discretized Ito integral of e^{alpha h} up to t_j.
    """

    grid: TimeGrid
    path_indices: np.ndarray
    dW: np.ndarray            # (P, n)
    states: np.ndarray        # (P, n+1) Y values
    avg_variance: np.ndarray  # (P,) trapezoid of sigma^2(Y) / T
    ito_prefix: np.ndarray    # (P, n+1)


@dataclass
class CIRPathBatch:
    """A batch of CIR variance paths.

    ``recip_integral[p, j]`` is the trapezoid prefix of 1/Z up to t_j (the
    R_t the psi kernel needs); the psi-weighted Ito prefix is built later by
    the weight module because it depends on the model constant q.
    """

    grid: TimeGrid
    path_indices: np.ndarray
    dW: np.ndarray             # (P, n)
    states: np.ndarray         # (P, n+1) Z values, floored at Z_FLOOR
    avg_variance: np.ndarray   # (P,) trapezoid of Z / T
    recip_integral: np.ndarray # (P, n+1)
    floored_steps: np.ndarray  # (P,) count of steps clipped at the floor


def ou_paths_from_increments(model, grid, dW, path_indices=None):
    """Build OU paths from given driver increments (one row per path).

    The exact transition consumes xi = dW / sqrt(dt), so a path is a pure
    function of its increments; used directly by the simulator and by the
    Brownian-bridge refinement tests.
    """
    p = model.params
    n = grid.n_steps
    dt = grid.dt
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    xi = dW / np.sqrt(dt)

    decay = np.exp(-p.alpha * dt)
    step_sd = p.k * np.sqrt((1.0 - np.exp(-2.0 * p.alpha * dt)) / (2.0 * p.alpha))

    y = np.empty((xi.shape[0], n + 1))
    y[:, 0] = p.y0
    for j in range(n):
        y[:, j + 1] = y[:, j] * decay + step_sd * xi[:, j]

    sig2 = np.asarray(model.vol.sigma(y)) ** 2
    avg_variance = sig2 @ grid.trapezoid_weights / grid.T

    exp_ah = np.exp(p.alpha * grid.t[:n])
    ito_prefix = np.zeros((xi.shape[0], n + 1))
    np.cumsum(exp_ah * dW, axis=1, out=ito_prefix[:, 1:])

    if path_indices is None:
        path_indices = np.arange(dW.shape[0])
    return OUPathBatch(
        grid=grid,
        path_indices=np.asarray(path_indices, dtype=np.int64),
        dW=dW,
        states=y,
        avg_variance=avg_variance,
        ito_prefix=ito_prefix,
    )


def simulate_ou_paths(model, grid, stream, path_indices, antithetic=False):
    """Simulate OU driver paths by their exact transition.

    With k = 0 the recursion degenerates to the deterministic decay
    Y_{t_i} = y0 e^{-alpha t_i} exactly.
    """
    xi = stream.normal_matrix(path_indices, grid.n_steps, antithetic=antithetic)
    return ou_paths_from_increments(model, grid, xi * np.sqrt(grid.dt),
                                    path_indices=path_indices)


def cir_paths_from_increments(model, grid, dW, path_indices=None):
    """Build CIR paths from given driver increments by full-truncation Euler.

    Z_{i+1} = Z_i + (b - Z_i) dt + k sqrt(max(Z_i, 0)) dW_i, then floored at
    Z_FLOOR. In the validated regime (k^2 < 2b, and 6k^2 < b for density
    work) the floor is essentially never hit; per-path floored-step counts
    are reported so the ensemble can enforce the FloorSaturation budget.
    """
    p = model.params
    n = grid.n_steps
    dt = grid.dt
    dW = np.atleast_2d(np.asarray(dW, dtype=float))

    z = np.empty((dW.shape[0], n + 1))
    z[:, 0] = p.z0
    floored = np.zeros(dW.shape[0], dtype=np.int64)
    for j in range(n):
        zj = z[:, j]
        znext = zj + (p.b - zj) * dt + p.k * np.sqrt(np.maximum(zj, 0.0)) * dW[:, j]
        hit = znext < Z_FLOOR
        floored += hit
        z[:, j + 1] = np.where(hit, Z_FLOOR, znext)

    w = grid.trapezoid_weights
    avg_variance = z @ w / grid.T

    inv_z = 1.0 / z
    recip = np.zeros_like(z)
    np.cumsum(0.5 * dt * (inv_z[:, :-1] + inv_z[:, 1:]), axis=1, out=recip[:, 1:])

    if path_indices is None:
        path_indices = np.arange(dW.shape[0])
    return CIRPathBatch(
        grid=grid,
        path_indices=np.asarray(path_indices, dtype=np.int64),
        dW=dW,
        states=z,
        avg_variance=avg_variance,
        recip_integral=recip,
        floored_steps=floored,
    )


def simulate_cir_paths(model, grid, stream, path_indices, antithetic=False):
    """Simulate CIR variance paths (full-truncation Euler; see
    cir_paths_from_increments)."""
    xi = stream.normal_matrix(path_indices, grid.n_steps, antithetic=antithetic)
    return cir_paths_from_increments(model, grid, xi * np.sqrt(grid.dt),
                                     path_indices=path_indices)


def require_floor_budget(batch):
    """Raise FloorSaturation if any path floored more than 0.1% of its steps.

    The ensemble layer prefers marking such paths failed (so one bad path
    cannot abort a run); this strict form is for single-path use.
    """
    limit = FLOOR_RATE_LIMIT * batch.grid.n_steps
    over = batch.floored_steps > limit
    if np.any(over):
        worst = int(batch.floored_steps.max())
        raise FloorSaturation(
            f"{int(over.sum())} path(s) floored more than {FLOOR_RATE_LIMIT:.1%} "
            f"of steps (worst {worst}/{batch.grid.n_steps}); grid too coarse")
    return batch


def ito_prefix_sums(dW, integrand_nodes):
    """Left-point Ito prefix sums P_j = sum_{i<j} f(t_i) dW_i, with P_0 = 0.

    ``integrand_nodes`` must supply f at all n+1 grid nodes (the terminal
    value is unused, matching the left-point rule); shapes broadcast across
    a batch of paths.
    """
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    f = np.atleast_2d(np.asarray(integrand_nodes, dtype=float))
    if f.shape[-1] != dW.shape[-1] + 1:
        raise ValueError(
            f"integrand must have one value per node: got {f.shape[-1]} "
            f"for {dW.shape[-1]} steps")
    out = np.zeros((max(dW.shape[0], f.shape[0]), dW.shape[-1] + 1))
    np.cumsum(f[:, :-1] * dW, axis=1, out=out[:, 1:])
    return out


def sample_terminal_asset(avg_variance, params, stream, path_indices, antithetic=False):
    """Terminal asset prices given averaged variances, under the pricing measure.

    Because the asset driver is independent of the volatility driver, S_T
    conditional on the volatility path is lognormal with total variance
    sig_bar^2 T:

        S_T = s0 exp(r T - sig_bar^2 T / 2 + sig_bar sqrt(T) xi).
    """
    avg_variance = np.asarray(avg_variance)
    xi = stream.normal_matrix(path_indices, 1, antithetic=antithetic)[:, 0]
    sig_bar = np.sqrt(avg_variance)
    T = params.T
    return params.s0 * np.exp(params.r * T - 0.5 * avg_variance * T
                              + sig_bar * np.sqrt(T) * xi)


def asset_stream(seed, namespace=0):
    """The noise stream for terminal-asset draws (purpose tag PURPOSE_ASSET)."""
    return NoiseStream(seed, PURPOSE_ASSET, namespace=namespace)
