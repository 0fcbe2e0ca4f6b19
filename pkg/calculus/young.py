# calculus/young.py

import logging

import numpy as np

from calculus.sewing import AdditiveGerm, sew_additive
from errors import DimensionMismatchError, YoungConditionError
from paths.grid_control import DIFFERENCE_CONTROL, DiscretePath, pvar_norm, safe_ratio, scan_pairs


def check_young(p, q):
    if 1.0 / p + 1.0 / q <= 1.0:
        raise YoungConditionError(f"Young integration needs 1/p + 1/q > 1, got p = {p}, q = {q}.")


def contract(y, dx, u_ndim=1):
    """
    Applies linear maps to vectors pointwise: y has shape (n, *V, *U), dx has shape (n, *U).

    Returns:
    - numpy.ndarray: Array of shape (n, *V).
    """
    n = y.shape[0]
    u_size = int(np.prod(dx.shape[1:], dtype=int))
    v_shape = y.shape[1:y.ndim - u_ndim]
    out = np.einsum('nvu,nu->nv', y.reshape(n, -1, u_size), dx.reshape(n, u_size))
    return out.reshape((n,) + v_shape)


def cross_step_integrals(a, b):
    """
    Per-step iterated integrals int a_{s,u} (x) db_u of two linearly interpolated paths: 1/2 a_{s,t} (x) b_{s,t}.

    Parameters:
    - a (numpy.ndarray): Step increments of shape (N, d).
    - b (numpy.ndarray): Step increments of shape (N, d).
    """
    return 0.5 * np.einsum('ka,kb->kab', a, b)


def align_integrand(y, x):
    """
    Brings the integrand onto the integrator's grid. The integrator is never interpolated.
    """
    if y.grid.same_as(x.grid):
        return y
    if y.grid.start != x.grid.start or y.grid.T != x.grid.T:
        raise DimensionMismatchError("Integrand and integrator cover different horizons.")
    logging.warning(f"Integrand interpolated linearly from {y.grid} onto {x.grid}.")
    flat = y.flat_values
    cols = [np.interp(x.grid.times, y.grid.times, flat[:, k]) for k in range(flat.shape[1])]
    return DiscretePath(x.grid, np.stack(cols, axis=1).reshape((len(x.grid),) + y.value_shape))


def _check_shapes(y, x):
    u_shape = x.value_shape
    if y.value_shape[-len(u_shape):] != u_shape:
        raise DimensionMismatchError(
            f"Integrand values {y.value_shape} are not linear maps on the integrator space {u_shape}.")


def young_integral(y, x, p, q, omega=None, integrand_dagger=None):
    """
    Young integral t -> int_0^t y dx, sewn from the left-point germ y_s x_{s,t}.

    Parameters:
    - y (DiscretePath): Integrand of finite q-variation, valued in L(U, V) (shape (*V, *U)).
    - x (DiscretePath): Integrator of finite p-variation, valued in U.
    - p (float): Variation index of x.
    - q (float): Variation index of y; 1/p + 1/q > 1.
    - omega (ControlFn, optional): Control.
    - integrand_dagger (numpy.ndarray, optional): Derivative y' of the integrand along x, shape
      (N + 1, *V, *U, *U). When given, the germ gains y'_s applied to the piecewise-linear iterated
      integral of x, a correction of order omega^{2/p} that leaves the sewn integral unchanged in the limit.

    Returns:
    - DiscretePath: The integral path, starting at 0.
    """
    check_young(p, q)
    y = align_integrand(y, x)
    return sew_additive(young_germ(y, x, p, q, omega, integrand_dagger), x.grid).path()


def young_germ(y, x, p, q, omega=None, integrand_dagger=None):
    """
    The left-point germ y_s x_{s,t} (plus the optional second-order term) on the grid of x.
    """
    check_young(p, q)
    _check_shapes(y, x)
    omega = omega or DIFFERENCE_CONTROL
    yv, xv = y.values, x.values
    dx = np.diff(xv, axis=0)
    n_steps = x.grid.N
    u_size = dx[0].size
    lead = None
    if integrand_dagger is not None:
        lead = np.asarray(integrand_dagger, dtype=float).reshape(n_steps + 1, -1, u_size, u_size)
        flat_dx = dx.reshape(n_steps, u_size)
        rel = (xv - xv[0]).reshape(n_steps + 1, u_size)
        # iterated integral of the piecewise-linear x from t_0, so that level2[j] - level2[i] obeys Chen
        level2 = np.zeros((n_steps + 1, u_size, u_size))
        level2[1:] = np.cumsum(cross_step_integrals(flat_dx, flat_dx)
                               + np.einsum('ka,kb->kab', rel[:-1], flat_dx), axis=0)

    def steps():
        out = contract(yv[:-1], dx)
        if lead is not None:
            area = cross_step_integrals(dx.reshape(n_steps, -1), dx.reshape(n_steps, -1))
            out = out + np.einsum('nvba,nab->nv', lead[:-1], area).reshape(out.shape)
        return out

    def evaluate(i, j):
        out = contract(yv[i:i + 1], (xv[j] - xv[i])[None])[0]
        if lead is not None:
            window = level2[j] - level2[i] - np.outer(rel[i], rel[j] - rel[i])
            out = out + np.einsum('vba,ab->v', lead[i], window).reshape(out.shape)
        return out

    return AdditiveGerm(evaluate, theta=1.0 / p + 1.0 / q, omega=omega, steps=steps)


def young_bound_check(y, x, p, q, omega=None, scan_limit=None):
    """
    Measured constant K of |int_s^t y dx - y_s x_{s,t}| <= K ||y||_q ||x||_p omega(s,t)^{1/p + 1/q}.

    Returns:
    - float: K over grid pairs; 0 when either seminorm vanishes.
    """
    check_young(p, q)
    omega = omega or DIFFERENCE_CONTROL
    y = align_integrand(y, x)
    integral = young_integral(y, x, p, q, omega).values
    ny = pvar_norm(y, q, omega, scan_limit)
    nx = pvar_norm(x, p, omega, scan_limit)
    if ny == 0 or nx == 0:
        return 0.0
    t = x.grid.times
    yv, xv = y.values, x.values
    theta = 1.0 / p + 1.0 / q

    def ratio(ii, jj):
        gap = integral[jj] - integral[ii] - contract(yv[ii], xv[jj] - xv[ii]).reshape(integral[jj].shape)
        num = np.linalg.norm(gap.reshape(gap.shape[0], -1), axis=1)
        return safe_ratio(num, ny * nx * omega(t[ii], t[jj]) ** theta)

    return scan_pairs(x.grid, ratio, scan_limit)
