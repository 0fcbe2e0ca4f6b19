# calculus/hoelder_fields.py

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from config import Config, parse_kv_spec
from errors import ConfigError, DimensionMismatchError, InsufficientRegularityError, RegimeError
from paths.grid_control import DIFFERENCE_CONTROL, DiscretePath, make_rng, pvar_norm, safe_ratio

ProbeResult = namedtuple('ProbeResult', ['ratio', 'bound', 'holds'])


class VectorField:
    """
    A C^{k + gamma} map f from R^n to linear maps R^d -> R^n, evaluated on batches.

    f(y) maps an array of shape (..., n) to (..., n, d). The j-th derivative appends j trailing
    axes of size n: D^j f(y)[..., i, w, a1, ..., aj] is the partial derivative of f_{iw} along a1, ..., aj.
    Fields with a different value shape (out_shape) appear only as inner maps of compositions.

    Parameters:
    - name (str): Registry name, echoed in reports.
    - n (int): Dimension of the state space V.
    - d (int): Dimension of the driving space U.
    - value (callable): y -> f(y).
    - derivs (sequence of callables): Analytic derivatives D^1 f, ..., D^k f.
    - gamma (float): Hoelder exponent of D^k f, in (0, 1].
    - norm_bounds (dict, optional): {'sup': [bound of |D^j f| for j = 0..k], 'holder': H_gamma(D^k f)}.
      Unbounded entries are inf.
    - bounded (bool): Whether f itself is bounded; unbounded fields are flagged in reports.
    """
    def __init__(self, name, n, d, value, derivs=(), gamma=1.0, norm_bounds=None, bounded=True, out_shape=None):
        if not 0 < gamma <= 1:
            raise RegimeError(f"Hoelder exponent gamma must lie in (0, 1], got {gamma}.")
        self.name = name
        self.n = int(n)
        self.out_shape = tuple(out_shape) if out_shape is not None else (self.n, int(d))
        self._value = value
        self._derivs = list(derivs)
        self.gamma = float(gamma)
        self.norm_bounds = norm_bounds
        self.bounded = bounded

    @property
    def d(self):
        return self.out_shape[-1]

    @property
    def k(self):
        return len(self._derivs)

    def _check_input(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.n,):
            raise DimensionMismatchError(f"Field '{self.name}' acts on R^{self.n}, got points of shape {y.shape}.")
        return y

    def __call__(self, y):
        return self._value(self._check_input(y))

    def derivative(self, j, y):
        if j == 0:
            return self(y)
        if j > self.k:
            raise InsufficientRegularityError(
                f"Field '{self.name}' carries {self.k} analytic derivatives, order {j} was requested.")
        return self._derivs[j - 1](self._check_input(y))

    def jacobian(self, y):
        return self.derivative(1, y)

    def sup_bound(self, j, center=None, radius=1.0, n_samples=256, seed=0):
        """
        Bound of |D^j f| (Frobenius) near center: the supplied bound when finite, else a sampled estimate.
        """
        if self.norm_bounds is not None and np.isfinite(self.norm_bounds['sup'][j]):
            return float(self.norm_bounds['sup'][j])
        center = np.zeros(self.n) if center is None else np.asarray(center, dtype=float)
        pts = center + radius * make_rng(seed).uniform(-1.0, 1.0, size=(n_samples, self.n))
        pts = np.vstack([center[None], pts])
        values = self.derivative(j, pts).reshape(n_samples + 1, -1)
        estimate = float(np.max(np.linalg.norm(values, axis=1)))
        logging.debug(f"Sampled estimate of |D^{j} {self.name}| within radius {radius:.3g}: {estimate:.4g}")
        return estimate

    def value_holder_constant(self, gamma=None):
        """
        Known gamma-Hoelder constant of f itself: H_gamma(f) for k = 0 fields, the Lipschitz bound for k >= 1.
        Returns None when no bound was supplied.
        """
        if self.norm_bounds is None:
            return None
        if self.k == 0:
            return float(self.norm_bounds['holder'])
        if gamma not in (None, 1, 1.0):
            return None
        bound = self.norm_bounds['sup'][1]
        return float(bound) if np.isfinite(bound) else None

    def describe(self):
        return {"name": self.name, "n": self.n, "d": self.d, "k": self.k, "gamma": self.gamma,
                "bounded": self.bounded}

    def __repr__(self):
        return f"VectorField({self.name}, n={self.n}, d={self.d}, k={self.k}, gamma={self.gamma})"


def _expand(weights, tensor, j):
    return weights.reshape(weights.shape + (1,) * j) * tensor


def linear_field(L, B, name="linear"):
    """
    f(y) = L y + B with L of shape (n, d, n) and B of shape (n, d). All derivatives beyond the first vanish.
    """
    L = np.array(L, dtype=float)
    B = np.array(B, dtype=float)
    n, d = B.shape
    lip = float(np.linalg.norm(L))

    def value(y):
        return np.einsum('iwa,...a->...iw', L, y) + B

    def deriv(order):
        def fn(y):
            if order == 1:
                return np.broadcast_to(L, y.shape[:-1] + L.shape)
            return np.zeros(y.shape[:-1] + (n, d) + (n,) * order)
        return fn

    bounds = {'sup': [np.inf if lip > 0 else float(np.linalg.norm(B)), lip, 0.0, 0.0], 'holder': 0.0}
    return VectorField(name, n, d, value, [deriv(1), deriv(2), deriv(3)], gamma=1.0, norm_bounds=bounds,
                       bounded=lip == 0)


# Derivative profiles g, g', ..., g'''' and the sup of their absolute values
_TANH_PROFILE = (
    np.tanh,
    lambda u: 1 - np.tanh(u) ** 2,
    lambda u: -2 * np.tanh(u) * (1 - np.tanh(u) ** 2),
    lambda u: -2 * (1 - np.tanh(u) ** 2) * (1 - 3 * np.tanh(u) ** 2),
)
_TANH_SUPS = (1.0, 1.0, 4.0 / (3.0 * np.sqrt(3.0)), 2.0, 4.1)

_SIN_PROFILE = (np.sin, np.cos, lambda u: -np.sin(u), lambda u: -np.cos(u))
_SIN_SUPS = (1.0, 1.0, 1.0, 1.0, 1.0)


def ridge_field(B, c, scale, profile, sups, name):
    """
    f_{iw}(y) = scale * g(<B_{iw}, y> + c_{iw}) for a smooth bounded profile g; k = 3, gamma = 1.

    Parameters:
    - B (numpy.ndarray): Directions of shape (n, d, n).
    - c (numpy.ndarray): Offsets of shape (n, d).
    - scale (float): Amplitude.
    - profile (tuple): g and its first three derivatives.
    - sups (tuple): sup |g^(j)| for j = 0..4.
    """
    B = np.array(B, dtype=float)
    c = np.array(c, dtype=float)
    n, d = c.shape
    outers = [None, B, np.einsum('iwa,iwb->iwab', B, B), np.einsum('iwa,iwb,iwc->iwabc', B, B, B)]
    row_sq = np.sum(B ** 2, axis=2)

    def value(y):
        return scale * profile[0](np.einsum('iwa,...a->...iw', B, y) + c)

    def deriv(order):
        def fn(y):
            u = np.einsum('iwa,...a->...iw', B, y) + c
            return scale * _expand(profile[order](u), outers[order], order)
        return fn

    sup = [abs(scale) * sups[j] * float(np.sqrt(np.sum(row_sq ** j))) for j in range(4)]
    holder = abs(scale) * sups[4] * float(np.sqrt(np.sum(row_sq ** 4)))
    return VectorField(name, n, d, value, [deriv(1), deriv(2), deriv(3)], gamma=1.0,
                       norm_bounds={'sup': sup, 'holder': holder}, bounded=True)


def holder_field(n, d, gamma, scale=1.0):
    """
    f_{iw}(y) = scale * |y_i|^gamma: gamma-Hoelder and nowhere better at the origin, k = 0.
    """
    def value(y):
        return scale * np.repeat((np.abs(y) ** gamma)[..., None], d, axis=-1)

    holder = abs(scale) * np.sqrt(d) * n ** ((1 - gamma) / 2)
    return VectorField("holder", n, d, value, [], gamma=gamma,
                       norm_bounds={'sup': [np.inf], 'holder': float(holder)}, bounded=False)


def power_field(n, d, gamma, scale=1.0):
    """
    f_{iw}(y) = scale * |y_i|^{1 + gamma}: k = 1 with a gamma-Hoelder derivative, the roughness-boundary field.
    """
    eye = np.eye(n)

    def value(y):
        return scale * np.repeat((np.abs(y) ** (1 + gamma))[..., None], d, axis=-1)

    def deriv1(y):
        diag = scale * (1 + gamma) * np.sign(y) * np.abs(y) ** gamma
        return np.repeat((diag[..., :, None] * eye)[..., :, None, :], d, axis=-2)

    holder = abs(scale) * (1 + gamma) * 2 ** (1 - gamma) * np.sqrt(d) * n ** ((1 - gamma) / 2)
    return VectorField("power", n, d, value, [deriv1], gamma=gamma,
                       norm_bounds={'sup': [np.inf, np.inf], 'holder': float(holder)}, bounded=False)


def _default_directions(n, d, gain):
    B = np.zeros((n, d, n))
    for i in range(n):
        for w in range(d):
            B[i, w, (i + w) % n] = gain
    return B


def _default_offsets(n, d, shift):
    i, w = np.meshgrid(np.arange(n), np.arange(d), indexing='ij')
    return shift + 0.3 * (i - w)


def _param_tensor(params, key, shape, default):
    if key not in params:
        return default
    raw = params[key]
    arr = np.array(raw if isinstance(raw, list) else [raw], dtype=float)
    if arr.size == 1:
        return np.full(shape, float(arr[0]))
    return arr.reshape(shape)


def _build_linear(n, d, params):
    lam = float(params.get('lambda', 1.0))
    L = lam * np.repeat(np.eye(n)[:, None, :], d, axis=1)
    L = _param_tensor(params, 'L', (n, d, n), L)
    B = _param_tensor(params, 'bias', (n, d), np.zeros((n, d)))
    return linear_field(L, B, name="linear")


def _build_rotation(n, d, params):
    if n != 2:
        raise ConfigError(f"The rotation field acts on R^2, got n = {n}.")
    J = float(params.get('rate', 1.0)) * np.array([[0.0, -1.0], [1.0, 0.0]])
    return linear_field(np.repeat(J[:, None, :], d, axis=1), np.zeros((2, d)), name="rotation")


def _build_tanh(n, d, params):
    B = _param_tensor(params, 'B', (n, d, n), _default_directions(n, d, float(params.get('A', 1.0))))
    c = _param_tensor(params, 'c', (n, d), _default_offsets(n, d, float(params.get('shift', 0.2))))
    return ridge_field(B, c, float(params.get('scale', 1.0)), _TANH_PROFILE, _TANH_SUPS, "tanh")


def _build_sin(n, d, params):
    B = _param_tensor(params, 'B', (n, d, n), _default_directions(n, d, float(params.get('A', 1.0))))
    c = _param_tensor(params, 'c', (n, d), _default_offsets(n, d, float(params.get('shift', 0.2))))
    return ridge_field(B, c, float(params.get('scale', 1.0)), _SIN_PROFILE, _SIN_SUPS, "sin")


def _build_zero(n, d, params):
    return linear_field(np.zeros((n, d, n)), np.zeros((n, d)), name="zero")


def _build_constant(n, d, params):
    B = _param_tensor(params, 'value', (n, d), np.zeros((n, d)))
    return linear_field(np.zeros((n, d, n)), B, name="constant")


def _build_holder(n, d, params):
    return holder_field(n, d, float(params.get('gamma', 0.5)), float(params.get('scale', 1.0)))


def _build_power(n, d, params):
    return power_field(n, d, float(params.get('gamma', 0.5)), float(params.get('scale', 1.0)))


FIELD_REGISTRY = {
    'linear': _build_linear,
    'rotation': _build_rotation,
    'tanh': _build_tanh,
    'sin': _build_sin,
    'zero': _build_zero,
    'constant': _build_constant,
    'holder': _build_holder,
    'power': _build_power,
}


def build_field(text, n=None, d=1):
    """
    Builds a registered field from a spec string such as "tanh:A=2,scale=1.5" or "linear:lambda=0.5".

    Parameters:
    - text (str): Registry name with optional key=value parameters; 'n' and 'd' may be given inline.
    - n (int, optional): State dimension; rotation defaults to 2, every other field to 1.
    - d (int): Driver dimension.

    Returns:
    - VectorField: The field.
    """
    kind, params = parse_kv_spec(text)
    builder = FIELD_REGISTRY.get(kind)
    if builder is None:
        raise ConfigError(f"Unknown field '{kind}'. Known fields: {', '.join(sorted(FIELD_REGISTRY))}.")
    n = int(params.pop('n', n if n is not None else (2 if kind == 'rotation' else 1)))
    d = int(params.pop('d', d))
    return builder(n, d, params)


def combine_fields(fields, weights, name=None):
    """
    Linear combination sum_i weights[i] * fields[i] of fields on the same spaces; used for f + eps g.
    """
    fields = list(fields)
    weights = [float(w) for w in weights]
    first = fields[0]
    for other in fields[1:]:
        if other.n != first.n or other.out_shape != first.out_shape:
            raise DimensionMismatchError("Only fields between the same spaces can be combined.")
    k = min(f.k for f in fields)

    def deriv(order):
        return lambda y: sum(w * f.derivative(order, y) for f, w in zip(fields, weights))

    bounds = None
    if all(f.norm_bounds is not None for f in fields):
        bounds = {
            'sup': [sum(abs(w) * f.norm_bounds['sup'][j] if w else 0.0 for f, w in zip(fields, weights))
                    for j in range(k + 1)],
            'holder': np.inf if any(f.k > k for f in fields)
            else sum(abs(w) * f.norm_bounds['holder'] for f, w in zip(fields, weights) if w),
        }
    gamma = min(f.gamma for f in fields)
    label = name or "+".join(f"{w:g}*{f.name}" for f, w in zip(fields, weights))
    return VectorField(label, first.n, first.d, deriv(0), [deriv(j) for j in range(1, k + 1)], gamma=gamma,
                       norm_bounds=bounds, bounded=all(f.bounded or not w for f, w in zip(fields, weights)),
                       out_shape=first.out_shape)


def compose_fields(f, g):
    """
    Composition y -> f(g(y)), reading g's value as a flat vector. Carries the first derivative by the chain rule.
    """
    m = int(np.prod(g.out_shape))
    if f.n != m:
        raise DimensionMismatchError(f"Cannot compose: '{f.name}' acts on R^{f.n}, '{g.name}' yields R^{m}.")
    def value(y):
        inner = g(y)
        return f(inner.reshape(inner.shape[:y.ndim - 1] + (m,)))

    def deriv1(y):
        inner = g(y).reshape(y.shape[:-1] + (m,))
        outer = f.jacobian(inner)
        chain = g.jacobian(y).reshape(y.shape[:-1] + (m, g.n))
        return np.einsum('...pm,...mn->...pn', outer.reshape(y.shape[:-1] + (-1, m)), chain) \
            .reshape(y.shape[:-1] + f.out_shape + (g.n,))

    k = min(f.k, g.k, 1)
    gamma = min(f.gamma, g.gamma) if k else f.gamma * g.gamma
    return VectorField(f"{f.name}o{g.name}", g.n, f.d, value, [deriv1] if k else [], gamma=gamma,
                       bounded=f.bounded, out_shape=f.out_shape)


def check_derivatives(f, n_points=100, radius=1.0, seed=0, eps=1e-5):
    """
    Compares every analytic derivative D^j f, j = 1..k, with central differences of D^{j-1} f.

    Returns:
    - float: Largest discrepancy relative to max(|D^j f|, 1) over the sampled points.
    """
    pts = radius * make_rng(seed).uniform(-1.0, 1.0, size=(n_points, f.n))
    worst = 0.0
    for j in range(1, f.k + 1):
        analytic = f.derivative(j, pts)
        for a in range(f.n):
            step = np.zeros(f.n)
            step[a] = eps
            fd = (f.derivative(j - 1, pts + step) - f.derivative(j - 1, pts - step)) / (2 * eps)
            exact = analytic[..., a]
            err = np.max(np.abs(fd - exact)) / max(float(np.max(np.abs(exact))), 1.0)
            worst = max(worst, float(err))
    return worst


def check_norm_bounds(f, n_points=100, radius=2.0, seed=0):
    """
    Largest ratio of a sampled |D^j f| to its supplied bound; at most 1 for honest bounds.
    """
    if f.norm_bounds is None:
        return 0.0
    pts = radius * make_rng(seed).uniform(-1.0, 1.0, size=(n_points, f.n))
    worst = 0.0
    for j, bound in enumerate(f.norm_bounds['sup']):
        if not np.isfinite(bound):
            continue
        values = np.linalg.norm(f.derivative(j, pts).reshape(n_points, -1), axis=1)
        worst = max(worst, float(np.max(safe_ratio(values, bound))))
    return worst


@dataclass(frozen=True)
class HoelderReport:
    alpha: float
    H_hat: float
    n_pairs: int


def _box(sample_box, dim):
    low, high = sample_box
    low = np.broadcast_to(np.asarray(low, dtype=float), (dim,))
    high = np.broadcast_to(np.asarray(high, dtype=float), (dim,))
    if np.any(high <= low):
        raise ConfigError(f"Degenerate sample box [{low}, {high}].")
    return low, high


def hoelder_seminorm_estimate(f, alpha, sample_box, n, seed=0, dim=None):
    """
    Lower bound on H_alpha(f): max over n random pairs of |f(x) - f(y)| / |x - y|^alpha.

    Pairs are drawn in a fixed order, so the estimate is non-decreasing in n for a given seed.

    Parameters:
    - f (callable): Maps points of shape (m, dim) to values of shape (m, ...).
    - alpha (float): Exponent in (0, 1].
    - sample_box (tuple): (low, high) corners, scalars or arrays of length dim.
    - n (int): Number of pairs, at least 2.
    - dim (int, optional): Input dimension when f is not a VectorField.
    """
    if not 0 < alpha <= 1:
        raise RegimeError(f"Hoelder exponent must lie in (0, 1], got {alpha}.")
    if n < 2:
        raise ConfigError(f"Need at least two pairs, got {n}.")
    dim = f.n if isinstance(f, VectorField) else (dim or 1)
    low, high = _box(sample_box, dim)
    pts = low + (high - low) * make_rng(seed).uniform(size=(n, 2, dim))
    fx = np.asarray(f(pts[:, 0])).reshape(n, -1)
    fy = np.asarray(f(pts[:, 1])).reshape(n, -1)
    num = np.linalg.norm(fx - fy, axis=1)
    denom = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1) ** alpha
    return HoelderReport(alpha=float(alpha), H_hat=float(np.max(safe_ratio(num, denom))), n_pairs=int(n))


def interpolation_check(g, gamma, kappa, quadruples, H=None):
    """
    Largest violation of the interpolation inequality

        |g(z) - g(y) - g(z') + g(y')| <= H (|y' - y|^{kappa gamma} + |z' - z|^{kappa gamma})
                                           (|z' - y'|^{(1 - kappa) gamma} + |z - y|^{(1 - kappa) gamma}).

    Parameters:
    - g (callable): gamma-Hoelder map on points of shape (m, dim).
    - gamma (float): Exponent in (0, 1].
    - kappa (float): Split in [0, 1].
    - quadruples (numpy.ndarray): Shape (m, 4, dim), rows ordered (y, z, y', z').
    - H (float, optional): Hoelder constant of g; the field's known constant or a dense-pair estimate by default.

    Returns:
    - float: max(LHS - RHS), at most 0 up to rounding when H is the exact seminorm.
    """
    if not 0 < gamma <= 1 or not 0 <= kappa <= 1:
        raise RegimeError(f"Need gamma in (0, 1] and kappa in [0, 1], got {gamma}, {kappa}.")
    quadruples = np.asarray(quadruples, dtype=float)
    m = quadruples.shape[0]
    if H is None and isinstance(g, VectorField):
        H = g.value_holder_constant(gamma)
    if H is None:
        flat = quadruples.reshape(-1, quadruples.shape[-1])
        box = (flat.min(axis=0), flat.max(axis=0) + 1e-12)
        H = hoelder_seminorm_estimate(g, gamma, box, 10 * m, dim=flat.shape[-1]).H_hat
        logging.warning(f"Interpolation check uses a sampled Hoelder constant {H:.4g}; violations may be spurious.")
    y, z, y2, z2 = (quadruples[:, k] for k in range(4))
    val = [np.asarray(g(pt)).reshape(m, -1) for pt in (y, z, y2, z2)]
    lhs = np.linalg.norm(val[1] - val[0] - val[3] + val[2], axis=1)

    def dist(a, b, e):
        return np.linalg.norm(a - b, axis=1) ** e

    kg, kbar_g = kappa * gamma, (1 - kappa) * gamma
    rhs = H * (dist(y2, y, kg) + dist(z2, z, kg)) * (dist(z2, y2, kbar_g) + dist(z, y, kbar_g))
    return float(np.max(lhs - rhs))


def omega_map(f, y):
    """
    Pointwise composition t -> f(y_t) on the grid of y.
    """
    if y.value_shape != (f.n,):
        raise DimensionMismatchError(f"Path values {y.value_shape} do not match field '{f.name}' on R^{f.n}.")
    return DiscretePath(y.grid, f(y.values))


def omega_derivative(f, y, h):
    """
    Derivative of the Omega map at y in the direction h: t -> Df(y_t) h_t.
    """
    if f.k < 1:
        raise InsufficientRegularityError(f"Field '{f.name}' has no derivative (k = 0).")
    if not y.grid.same_as(h.grid) or y.value_shape != h.value_shape:
        raise DimensionMismatchError("Direction must live on the grid and in the space of the base path.")
    if y.value_shape != (f.n,):
        raise DimensionMismatchError(f"Path values {y.value_shape} do not match field '{f.name}' on R^{f.n}.")
    return DiscretePath(y.grid, np.einsum('t...a,ta->t...', f.jacobian(y.values), h.values))


def omega_hoelder_probe(f, y, z, p, kappa=None, gamma=None, omega=None, H=None, scan_limit=None):
    """
    Probes the local Hoelder continuity of the Omega map from p-variation paths to q-variation paths,
    q = p / (kappa gamma).

    ratio = ||Of(y) - Of(z)||_q / ||y - z||_p^{(1 - kappa) gamma}
    bound = H_gamma(f) (1 + omega(0,T)^{(1 - kappa) gamma / p}) (||y||_p^{kappa gamma} + ||z||_p^{kappa gamma})

    y and z are expected to share their initial value.

    Returns:
    - ProbeResult: (ratio, bound, holds).
    """
    kappa = Config.KAPPA if kappa is None else kappa
    gamma = (f.gamma if f.k == 0 else 1.0) if gamma is None else gamma
    if not 0 < kappa * gamma:
        raise RegimeError(f"Need kappa * gamma > 0, got kappa = {kappa}, gamma = {gamma}.")
    q = p / (kappa * gamma)
    if q < 1:
        raise RegimeError(f"q = p / (kappa gamma) = {q} is below 1.")
    omega = omega or DIFFERENCE_CONTROL
    H = f.value_holder_constant(gamma) if H is None else H
    if H is None:
        raise InsufficientRegularityError(f"Field '{f.name}' carries no Hoelder constant for gamma = {gamma}.")
    if not np.allclose(y.values[0], z.values[0]):
        logging.warning("Hoelder probe called with paths of different initial values.")
    kbar_g = (1 - kappa) * gamma
    num = pvar_norm(omega_map(f, y) - omega_map(f, z), q, omega, scan_limit)
    denom = pvar_norm(y - z, p, omega, scan_limit) ** kbar_g
    ratio = float(safe_ratio(num, denom))
    bound = H * (1 + omega.total(y.grid) ** (kbar_g / p)) * (
        pvar_norm(y, p, omega, scan_limit) ** (kappa * gamma) + pvar_norm(z, p, omega, scan_limit) ** (kappa * gamma))
    return ProbeResult(ratio=ratio, bound=float(bound), holds=bool(ratio <= bound * (1 + 1e-12)))
