# calculus/crp.py

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from calculus.sewing import AdditiveGerm, MonoidElem, MultiplicativeGerm, sew_additive, sew_multiplicative
from calculus.young import contract
from config import Config
from errors import DimensionMismatchError, InsufficientRegularityError, RegimeError
from paths.grid_control import DiscretePath, pvar_norm, safe_ratio, sample_triples, scan_pairs
from paths.tensor_rough import rough_norm

BoundCheck = namedtuple('BoundCheck', ['K', 'K_prime'])

# Gauss-Legendre nodes for the remainder diagnostic of the Omega map
_QUAD_NODES = 8


def sewing_exponent(p, q, r):
    return min(2.0 / p + 1.0 / q, 1.0 / p + 1.0 / r)


class ControlledPath:
    """
    Controlled rough path (y, y_dag) with respect to a rough path x: y_{s,t} = y_dag_s x1_{s,t} + y_sharp_{s,t}.
    The remainder y_sharp is always derived from y and y_dag.

    Parameters:
    - base (RoughPath): The reference rough path x, valued in R^d.
    - y (DiscretePath): Values of shape (N + 1, *V).
    - ydag (array-like | DiscretePath): Gubinelli derivative of shape (N + 1, *V, d).
    - p (float): Index of x, 2 <= p < 3 for the rough regime.
    - q (float, optional): Variation index of y_dag, defaults to p.
    - r (float, optional): Rate of the remainder, defaults to p / 2.
    """
    def __init__(self, base, y, ydag, p=None, q=None, r=None):
        if not isinstance(y, DiscretePath):
            y = DiscretePath(base.grid, y)
        if not y.grid.same_as(base.grid):
            raise DimensionMismatchError("A controlled path must live on the grid of its rough path.")
        ydag = np.array(ydag.values if isinstance(ydag, DiscretePath) else ydag, dtype=float)
        expected = (len(base.grid),) + y.value_shape + (base.d,)
        if ydag.shape != expected:
            if ydag.size != int(np.prod(expected)):
                raise DimensionMismatchError(f"Gubinelli derivative must have shape {expected}, got {ydag.shape}.")
            ydag = ydag.reshape(expected)
        ydag.setflags(write=False)
        self.base = base
        self.y = y
        self.ydag = ydag
        self.p = float(base.p if p is None else p)
        self.q = float(self.p if q is None else q)
        self.r = float(self.p / 2 if r is None else r)

    @property
    def grid(self):
        return self.base.grid

    @property
    def N(self):
        return self.base.N

    @property
    def value_shape(self):
        return self.y.value_shape

    @property
    def indices(self):
        return (self.p, self.q, self.r)

    @property
    def dagger_path(self):
        return DiscretePath(self.grid, self.ydag)

    def remainder_increments(self, ii, jj):
        return self.y.values[jj] - self.y.values[ii] - contract(self.ydag[ii], self.base.level1_increments(ii, jj))

    def remainder(self, i, j):
        return self.remainder_increments(np.array([i]), np.array([j]))[0]

    def restrict(self, i, j):
        return ControlledPath(self.base.restrict(i, j), self.y.restrict(i, j), self.ydag[i:j + 1], *self.indices)

    def with_values(self, y, ydag, q=None, r=None):
        return ControlledPath(self.base, DiscretePath(self.grid, y), ydag, self.p,
                              self.q if q is None else q, self.r if r is None else r)

    def is_starred(self, atol=0.0):
        return bool(np.all(np.abs(self.y.values[0]) <= atol) and np.all(np.abs(self.ydag[0]) <= atol))

    def _check_compatible(self, other):
        same = self.base is other.base or (
            self.grid.same_as(other.grid)
            and np.array_equal(self.base.lvl1, other.base.lvl1)
            and np.array_equal(self.base.lvl2, other.base.lvl2))
        if not same:
            raise DimensionMismatchError("Controlled paths refer to different rough paths.")
        if self.value_shape != other.value_shape:
            raise DimensionMismatchError(f"Value shapes differ: {self.value_shape} vs {other.value_shape}.")

    def __add__(self, other):
        self._check_compatible(other)
        return ControlledPath(self.base, self.y + other.y, self.ydag + other.ydag, self.p,
                              max(self.q, other.q), max(self.r, other.r))

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return ControlledPath(self.base, float(scalar) * self.y, float(scalar) * self.ydag, *self.indices)

    __rmul__ = __mul__

    def __repr__(self):
        return f"ControlledPath(N={self.N}, value_shape={self.value_shape}, indices={self.indices})"


@dataclass(frozen=True)
class CRPNorms:
    dagger: float
    remainder: float
    x_norm: float
    full: float
    slacks: dict

    @property
    def holds(self):
        return all(s >= 0 for s in self.slacks.values())

    def to_dict(self):
        return {"dagger_q": self.dagger, "remainder_r": self.remainder, "x": self.x_norm, "x_full": self.full,
                "slacks": dict(self.slacks)}


def remainder_norm(Y, scan_limit=None):
    t = Y.grid.times
    omega = Y.base.omega

    def ratio(ii, jj):
        num = np.linalg.norm(Y.remainder_increments(ii, jj).reshape(ii.size, -1), axis=1)
        return safe_ratio(num, omega(t[ii], t[jj]) ** (1.0 / Y.r))

    return scan_pairs(Y.grid, ratio, scan_limit)


def x_full_norm(Y, scan_limit=None):
    """
    ||Y||_{x,full} = |y_0| + |y_dag_0| + ||y_dag||_q + ||y_sharp||_r.
    """
    return float(np.linalg.norm(Y.y.values[0]) + np.linalg.norm(Y.ydag[0])
                 + pvar_norm(Y.dagger_path, Y.q, Y.base.omega, scan_limit) + remainder_norm(Y, scan_limit))


def crp_norms(Y, scan_limit=None):
    """
    Norms of a controlled path and the slack of the three standard inequalities
    bounding sup |y_dag|, ||y||_p (for r <= p) and sup |y| by ||Y||_{x,full}.

    Returns:
    - CRPNorms: (||y_dag||_q, ||y_sharp||_r, ||Y||_x, ||Y||_{x,full}, slacks).
    """
    omega = Y.base.omega
    w = omega.total(Y.grid)
    dagger = pvar_norm(Y.dagger_path, Y.q, omega, scan_limit)
    rem = remainder_norm(Y, scan_limit)
    x_norm = dagger + rem
    full = float(np.linalg.norm(Y.y.values[0]) + np.linalg.norm(Y.ydag[0])) + x_norm
    xp = rough_norm(Y.base, scan_limit).value
    sup_dag = Y.dagger_path.sup_norm()
    slacks = {"sup_dagger": (1 + w ** (1 / Y.q)) * full - sup_dag}
    if Y.r <= Y.p:
        slacks["pvar_y"] = sup_dag * xp + rem * w ** (1 / Y.r - 1 / Y.p) - pvar_norm(Y.y, Y.p, omega, scan_limit)
    slacks["sup_y"] = (1 + w ** (1 / Y.q) + w ** (1 / Y.r - 1 / Y.p)) * (1 + w ** (1 / Y.p)) * full * (1 + xp) \
        - Y.y.sup_norm()
    for name, value in slacks.items():
        if value < -1e-12 * max(1.0, full):
            logging.warning(f"Controlled-path inequality '{name}' fails with slack {value:.3e}.")
    return CRPNorms(dagger=dagger, remainder=rem, x_norm=x_norm, full=full, slacks=slacks)


def canonical_crp(X):
    """
    The rough path's own trace as a controlled path: y = path of x, y_dag = identity, y_sharp = 0.
    """
    eye = np.broadcast_to(np.eye(X.d), (len(X.grid), X.d, X.d))
    return ControlledPath(X, X.path(), eye, X.p, X.p, X.p / 2)


class FlatFamily:
    """
    The family y_flat_{s,t} in R^d (x) V obtained by multiplicative sewing, reconstructed from
    consecutive steps through the cocycle y_flat_{r,t} = y_flat_{r,s} + y_flat_{s,t} + x1_{r,s} (x) y_{s,t}.
    """
    def __init__(self, family, value_shape):
        self.family = family
        self.value_shape = value_shape

    @property
    def steps(self):
        ii = np.arange(self.family.grid.N)
        return self.increments(ii, ii + 1)

    def increments(self, ii, jj):
        out = self.family.c_increments(np.asarray(ii), np.asarray(jj))
        return out.reshape((out.shape[0], out.shape[1]) + self.value_shape)

    def __call__(self, i, j):
        return self.increments(np.array([i]), np.array([j]))[0]

    def cocycle_defect(self, triples):
        r, s, t = triples[:, 0], triples[:, 1], triples[:, 2]
        x1 = self.family.A[s] - self.family.A[r]
        dy = self.family.B[t] - self.family.B[s]
        gap = self.increments(r, s) + self.increments(s, t) + np.einsum('na,n...->na...', x1, dy) \
            - self.increments(r, t)
        return float(np.max(np.abs(gap), initial=0.0))


def _dagger_on_area(ydag_flat, area):
    # (y_dag x2)[a, v] = sum_b x2[a, b] y_dag[v, b]
    return np.einsum('nab,nvb->nav', area, ydag_flat)


def flat_germ(Y):
    theta = sewing_exponent(*Y.indices)
    X = Y.base
    n = len(Y.grid)
    yv = Y.y.flat_values
    yd = Y.ydag.reshape(n, -1, X.d)

    def steps():
        return X.lvl1, np.diff(yv, axis=0), _dagger_on_area(yd[:-1], X.lvl2)

    def evaluate(i, j):
        ii, jj = np.array([i]), np.array([j])
        return MonoidElem(X.level1_increments(ii, jj)[0], yv[j] - yv[i],
                          _dagger_on_area(yd[ii], X.level2_increments(ii, jj))[0])

    return MultiplicativeGerm(evaluate, theta, X.omega, steps)


def flat(Y):
    """
    Sews the germ (x1_{s,t}, y_{s,t}, y_dag_s x2_{s,t}) multiplicatively and keeps its third component.

    Parameters:
    - Y (ControlledPath): Indices must satisfy min(2/p + 1/q, 1/p + 1/r) > 1.

    Returns:
    - FlatFamily: y_flat, linear in Y and exactly satisfying the cocycle relation.
    """
    theta = sewing_exponent(*Y.indices)
    if theta <= 1:
        raise RegimeError(f"Flat construction needs min(2/p + 1/q, 1/p + 1/r) > 1, got {theta:.4f}.")
    family = sew_multiplicative(flat_germ(Y), Y.grid)
    return FlatFamily(family, Y.value_shape)


def _rough_factor(X, scan_limit=None):
    xp = rough_norm(X, scan_limit).value
    return max(xp, xp ** 2)


def flat_bound_check(Y, scan_limit=None):
    """
    Measured constants of |y_flat_{s,t} - y_dag_s x2_{s,t}| <= K ||Y||_x (||x|| v ||x||^2) omega^theta and of
    ||y_flat||_{p/2} <= K' ||Y||_{x,full} (||x|| v ||x||^2).

    Returns:
    - BoundCheck: (K, K').
    """
    X = Y.base
    fam = flat(Y)
    theta = sewing_exponent(*Y.indices)
    t = Y.grid.times
    n = len(Y.grid)
    yd = Y.ydag.reshape(n, -1, X.d)
    norms = crp_norms(Y, scan_limit)
    factor = _rough_factor(X, scan_limit)

    def germ_gap(ii, jj):
        gap = fam.increments(ii, jj).reshape(ii.size, -1) \
            - _dagger_on_area(yd[ii], X.level2_increments(ii, jj)).reshape(ii.size, -1)
        return safe_ratio(np.linalg.norm(gap, axis=1), norms.x_norm * factor * X.omega(t[ii], t[jj]) ** theta)

    def flat_size(ii, jj):
        size = np.linalg.norm(fam.increments(ii, jj).reshape(ii.size, -1), axis=1)
        return safe_ratio(size, X.omega(t[ii], t[jj]) ** (2.0 / Y.p))

    K = scan_pairs(Y.grid, germ_gap, scan_limit)
    flat_norm = scan_pairs(Y.grid, flat_size, scan_limit)
    return BoundCheck(K=K, K_prime=float(safe_ratio(flat_norm, norms.full * factor)))


def _integrand_shapes(Y, Z):
    w_shape = Z.value_shape
    if Y.value_shape[-len(w_shape):] != w_shape:
        raise DimensionMismatchError(
            f"Integrand values {Y.value_shape} are not linear maps on the integrator space {w_shape}.")
    v_shape = Y.value_shape[:-len(w_shape)]
    return v_shape, int(np.prod(w_shape, dtype=int))


def _check_same_base(Y, Z):
    same = Y.base is Z.base or (
        Y.grid.same_as(Z.grid)
        and np.array_equal(Y.base.lvl1, Z.base.lvl1) and np.array_equal(Y.base.lvl2, Z.base.lvl2))
    if not same:
        raise DimensionMismatchError("Integrand and integrator are controlled by different rough paths.")


def integral_germ(Y, Z):
    """
    Germ y_s z_{s,t} + y_dag_s z_flat_{s,t} of the integral of Y against Z.

    Returns:
    - tuple: (AdditiveGerm, pair evaluator (ii, jj) -> array (n, Vsize)).
    """
    _check_same_base(Y, Z)
    v_shape, w_size = _integrand_shapes(Y, Z)
    theta_hat = sewing_exponent(*Y.indices)
    theta_z = sewing_exponent(*Z.indices)
    if theta_hat <= 1 or theta_z <= 1:
        raise RegimeError(f"Rough integration needs both sewing exponents above 1, got {theta_hat:.4f} and "
                          f"{theta_z:.4f}.")
    X = Y.base
    n = len(Y.grid)
    z_flat = flat(Z)
    yv = Y.y.values.reshape(n, -1, w_size)
    yd = Y.ydag.reshape(n, -1, w_size, X.d)
    zv = Z.y.values.reshape(n, w_size)

    def pair_values(ii, jj):
        zf = z_flat.increments(ii, jj).reshape(ii.size, X.d, w_size)
        return np.einsum('nvw,nw->nv', yv[ii], zv[jj] - zv[ii]) + np.einsum('nvwa,naw->nv', yd[ii], zf)

    def steps():
        ii = np.arange(n - 1)
        return pair_values(ii, ii + 1)

    def evaluate(i, j):
        return pair_values(np.array([i]), np.array([j]))[0]

    return AdditiveGerm(evaluate, theta_hat, X.omega, steps), pair_values


def crp_integral(Y, Z):
    """
    Rough integral of Y (valued in L(W, V)) against Z (valued in W), both controlled by the same rough path.

    Parameters:
    - Y (ControlledPath): Integrand with values of shape (*V, *W).
    - Z (ControlledPath): Integrator with values of shape (*W).

    Returns:
    - ControlledPath: Path starting at 0 with Gubinelli derivative y_s z_dag_s and indices (p, p v q_Z, p / 2).
    """
    germ, _ = integral_germ(Y, Z)
    v_shape, w_size = _integrand_shapes(Y, Z)
    n = len(Y.grid)
    prefix = sew_additive(germ, Y.grid).prefix
    path = DiscretePath(Y.grid, prefix.reshape((n,) + (v_shape or (1,))))
    zd = Z.ydag.reshape(n, w_size, Z.base.d)
    dag = np.einsum('nvw,nwa->nva', Y.y.values.reshape(n, -1, w_size), zd)
    dag = dag.reshape((n,) + path.value_shape + (Z.base.d,))
    return ControlledPath(Y.base, path, dag, Y.p, max(Y.p, Z.q), Y.p / 2)


def integral_bound_check(Y, Z, scan_limit=None):
    """
    Measured constants K, K' of
    |int_s^t y dz - y_s z_{s,t} - y_dag_s z_flat_{s,t}| <= K ||Y||_x ||Z||_{x,full} (1 + ||x|| v ||x||^2) omega^theta
    and ||int y dz||_x <= K' ||Y||_{x,full} ||Z||_{x,full} (1 + ||x|| v ||x||^2).
    """
    germ, pair_values = integral_germ(Y, Z)
    integral = crp_integral(Y, Z)
    X = Y.base
    t = Y.grid.times
    prefix = integral.y.flat_values
    ny = crp_norms(Y, scan_limit)
    nz = crp_norms(Z, scan_limit)
    factor = 1 + _rough_factor(X, scan_limit)

    def ratio(ii, jj):
        gap = prefix[jj] - prefix[ii] - pair_values(ii, jj)
        return safe_ratio(np.linalg.norm(gap, axis=1),
                          ny.x_norm * nz.full * factor * X.omega(t[ii], t[jj]) ** germ.theta)

    K = scan_pairs(Y.grid, ratio, scan_limit)
    K_prime = float(safe_ratio(crp_norms(integral, scan_limit).x_norm, ny.full * nz.full * factor))
    return BoundCheck(K=K, K_prime=K_prime)


def crp_product(Y, Z, mode="compose-linear"):
    """
    Pointwise product of two controlled paths with the Leibniz rule for the Gubinelli derivative.

    compose-linear: Y valued in L(W, V), Z in W, value y_t z_t (a scalar Z multiplies Y).
    tensor: value y_t (x) z_t.

    Returns:
    - ControlledPath: Starred whenever Z is starred.
    """
    _check_same_base(Y, Z)
    n = len(Y.grid)
    d = Y.base.d
    if mode == "tensor":
        yv, zv = Y.y.flat_values, Z.y.flat_values
        yd, zd = Y.ydag.reshape(n, -1, d), Z.ydag.reshape(n, -1, d)
        value = np.einsum('nv,nw->nvw', yv, zv)
        dag = np.einsum('nva,nw->nvwa', yd, zv) + np.einsum('nv,nwa->nvwa', yv, zd)
        shape = Y.value_shape + Z.value_shape
    elif mode == "compose-linear":
        if Z.value_shape == (1,) and Y.value_shape[-1:] != (1,):
            value = Y.y.values * Z.y.values[:, :1].reshape((n,) + (1,) * len(Y.value_shape))
            zs = Z.y.values[:, 0].reshape((n,) + (1,) * (len(Y.value_shape) + 1))
            dag = Y.ydag * zs + Y.y.values[..., None] * Z.ydag.reshape((n,) + (1,) * len(Y.value_shape) + (d,))
            shape = Y.value_shape
        else:
            v_shape, w_size = _integrand_shapes(Y, Z)
            yv = Y.y.values.reshape(n, -1, w_size)
            yd = Y.ydag.reshape(n, -1, w_size, d)
            zv, zd = Z.y.values.reshape(n, w_size), Z.ydag.reshape(n, w_size, d)
            value = np.einsum('nvw,nw->nv', yv, zv)
            dag = np.einsum('nvwa,nw->nva', yd, zv) + np.einsum('nvw,nwa->nva', yv, zd)
            shape = v_shape or (1,)
    else:
        raise DimensionMismatchError(f"Unknown product mode '{mode}'.")
    value = value.reshape((n,) + shape)
    return ControlledPath(Y.base, value, dag.reshape((n,) + shape + (d,)), Y.p, max(Y.q, Z.q),
                          max(Y.r, Z.r, Y.p / 2))


def product_constant(Y, Z, mode="compose-linear", scan_limit=None):
    """
    Measured C in ||yz||_{x,full} <= C ||Y||_{x,full} ||Z||_{x,full} ||x||_p.
    """
    prod = crp_product(Y, Z, mode)
    denom = x_full_norm(Y, scan_limit) * x_full_norm(Z, scan_limit) * rough_norm(Y.base, scan_limit).value
    return float(safe_ratio(x_full_norm(prod, scan_limit), denom))


def omega_indices(Y, gamma, kappa=None):
    kappa = Config.KAPPA if kappa is None else kappa
    kg = kappa * gamma
    return Y.p, max(Y.q, Y.p) / kg, max(Y.r, Y.p / (1 + kg))


def crp_omega(f, Y, kappa=None):
    """
    Omega map on controlled paths: value f(y_t), Gubinelli derivative Df(y_t) y_dag_t.

    Parameters:
    - f (VectorField): Field with k >= 1 analytic derivatives, acting on the values of Y.
    - Y (ControlledPath): Values of shape (n,).
    - kappa (float, optional): Interpolation split for the output indices.

    Returns:
    - ControlledPath: Values of shape f.out_shape, indices (p, (q v p) / (kappa gamma), r v p / (1 + kappa gamma)).
    """
    if f.k < 1:
        raise InsufficientRegularityError(f"The Omega map on controlled paths needs k >= 1, field '{f.name}' has 0.")
    if Y.value_shape != (f.n,):
        raise DimensionMismatchError(f"Controlled path values {Y.value_shape} do not match field on R^{f.n}.")
    value = f(Y.y.values)
    dag = np.einsum('t...b,tbu->t...u', f.jacobian(Y.y.values), Y.ydag)
    _, q, r = omega_indices(Y, f.gamma, kappa)
    return ControlledPath(Y.base, value, dag, Y.p, q, r)


def crp_omega_derivative(f, Y, Z):
    """
    Derivative of the Omega map at Y in the direction Z: value Df(y_t) z_t and Gubinelli derivative
    D^2 f(y_t)(z_t, y_dag_t .) + Df(y_t) z_dag_t. Starred directions give starred results.
    """
    if f.k < 2:
        raise InsufficientRegularityError(f"Differentiating the Omega map needs k >= 2, field '{f.name}' has {f.k}.")
    Y._check_compatible(Z)
    yv = Y.y.values
    value = np.einsum('t...a,ta->t...', f.jacobian(yv), Z.y.values)
    dag = np.einsum('t...ab,ta,tbu->t...u', f.derivative(2, yv), Z.y.values, Y.ydag) \
        + np.einsum('t...a,tau->t...u', f.jacobian(yv), Z.ydag)
    _, q, r = omega_indices(Y, f.gamma)
    return ControlledPath(Y.base, value, dag, Y.p, q, r)


def omega_remainder_check(f, Y, n_pairs=200, seed=0):
    """
    Compares the remainder of crp_omega(f, Y) with
    Df(y_s) y_sharp_{s,t} + int_0^1 (Df(y_s + theta y_{s,t}) - Df(y_s)) y_{s,t} dtheta on sampled pairs.

    Returns:
    - float: Largest discrepancy relative to max(|remainder|, 1).
    """
    out = crp_omega(f, Y)
    triples = sample_triples(Y.N, n_pairs, seed)
    if triples.size == 0:
        return 0.0
    ii, jj = triples[:, 0], triples[:, 2]
    nodes, weights = np.polynomial.legendre.leggauss(_QUAD_NODES)
    nodes, weights = 0.5 * (nodes + 1.0), 0.5 * weights
    ys = Y.y.values[ii]
    dy = Y.y.values[jj] - ys
    jac_s = f.jacobian(ys)
    formula = np.einsum('n...a,na->n...', jac_s, Y.remainder_increments(ii, jj))
    for node, weight in zip(nodes, weights):
        formula = formula + weight * np.einsum('n...a,na->n...', f.jacobian(ys + node * dy) - jac_s, dy)
    actual = out.remainder_increments(ii, jj)
    err = np.abs(actual - formula).reshape(ii.size, -1).max(axis=1)
    scale = np.abs(actual).reshape(ii.size, -1).max(axis=1)
    return float(np.max(err / np.maximum(scale, 1.0)))
