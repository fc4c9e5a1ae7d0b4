"""SL(2,R) cocycle families and overflow-safe transfer-matrix products.

Matrices are numpy arrays with trailing shape (2, 2); every routine broadcasts over the
leading axes. Products are written out entrywise so results do not depend on how a
batch of phases or parameters is chunked.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import InvalidSpec
from .potential import SmoothFunction, difference_with_shift

FAMILIES = ("schrodinger", "polar", "rotation", "szego")


# ---------------------------------------------------------------- 2x2 arithmetic

def mat(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(*(np.asarray(v) for v in (a, b, c, d)))
    out = np.empty(a.shape + (2, 2), dtype=np.result_type(a, b, c, d, float))
    out[..., 0, 0] = a
    out[..., 0, 1] = b
    out[..., 1, 0] = c
    out[..., 1, 1] = d
    return out


def mul(A, B):
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    e, f, g, h = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    return mat(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def det(A):
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def inv(A):
    dt = det(A)
    return mat(A[..., 1, 1] / dt, -A[..., 0, 1] / dt, -A[..., 1, 0] / dt, A[..., 0, 0] / dt)


def transpose(A):
    return np.swapaxes(A, -1, -2)


def opnorm(A):
    """Largest singular value from the Frobenius norm and determinant."""
    fro2 = (np.abs(A) ** 2).sum(axis=(-1, -2))
    dd = 2.0 * np.abs(det(A))
    return 0.5 * (np.sqrt(fro2 + dd) + np.sqrt(np.maximum(fro2 - dd, 0.0)))


def rotation(phi):
    c, s = np.cos(phi), np.sin(phi)
    return mat(c, -s, s, c)


def diag(a, b):
    z = np.zeros(np.broadcast(np.asarray(a), np.asarray(b)).shape)
    return mat(a + z, z, z, b + z)


def identity(shape=()):
    return np.broadcast_to(np.eye(2), tuple(shape) + (2, 2)).copy()


# ---------------------------------------------------------------- specs and maps

@dataclass(frozen=True)
class CocycleSpec:
    """One cocycle family at parameter ``param``.

    ``function`` is the potential v (schrodinger, polar), the angle function psi (rotation),
    or theta (szego). ``coupling`` is lambda; the polar family also accepts a SmoothFunction.
    ``param`` is E (schrodinger), t = E/lambda (polar), theta (rotation) or the spectral
    angle t with E = exp(2 pi i t) (szego); it may be an array broadcasting against phases.
    """
    family: str
    function: SmoothFunction
    coupling: Any
    param: Any = 0.0
    k: int = 0
    alpha: float | None = None
    lambda_floor: float = 1.0
    deriv_constant: float = 1e3

    def with_param(self, param):
        return replace(self, param=param)

    def validate(self, grid_size=1024):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")
        if self.family == "polar":
            if isinstance(self.coupling, SmoothFunction):
                xs = np.arange(grid_size) / grid_size
                lam = np.asarray(self.coupling.eval(xs))
                floor = float(self.lambda_floor)
                if floor <= 1.0 or np.any(lam <= floor):
                    raise InvalidSpec("polar family needs lambda(x) > lambda_floor > 1")
                bound = self.deriv_constant * floor
                for d in (self.coupling.deriv1, self.coupling.deriv2):
                    if np.any(np.abs(d(xs)) >= bound):
                        raise InvalidSpec("polar family derivative bound on lambda(x) fails")
            elif not float(self.coupling) > 1.0:
                raise InvalidSpec("polar family needs lambda > 1")
        elif self.family == "szego":
            if not 0.0 < float(self.coupling) < 1.0:
                raise InvalidSpec("szego family needs 0 < lambda < 1")
            if self.alpha is None:
                raise InvalidSpec("szego family needs alpha for the reduction")
        elif not float(self.coupling) > 0.0:
            raise InvalidSpec("coupling must be positive")
        return self


def _coupling_at(spec, x):
    if isinstance(spec.coupling, SmoothFunction):
        return np.asarray(spec.coupling.eval(x), dtype=float)
    return float(spec.coupling)


def schrodinger_matrix(E, lam, v):
    z = np.zeros(np.broadcast(np.asarray(E), np.asarray(v)).shape)
    return mat(E - lam * v + z, -1.0 + z, 1.0 + z, z)


def polar_matrix(lam, t, v):
    """diag(lam, 1/lam) . R_phi with cot(phi) = t - v."""
    w = np.asarray(t) - np.asarray(v)
    r = np.sqrt(w * w + 1.0)
    cphi, sphi = w / r, 1.0 / r
    return mat(lam * cphi, -lam * sphi, sphi / lam, cphi / lam)


def rotation_family_matrix(lam, psi, theta):
    """diag(lam, 1/lam) . R_psi . R_theta."""
    ang = np.asarray(psi) + np.asarray(theta)
    c, s = np.cos(ang), np.sin(ang)
    return mat(lam * c, -lam * s, s / lam, c / lam)


# Szego cocycles live in SU(1,1); QSTAR M Q is real.
Q = -1.0 / (1.0 + 1.0j) * np.array([[1.0, -1.0j], [1.0, 1.0j]])
QSTAR = Q.conj().T


def szego_matrix(f, sqrt_E):
    """SU(1,1) Szego matrix for Verblunsky value f and a chosen square root of E on the circle."""
    f = np.asarray(f, dtype=complex)
    sq = np.asarray(sqrt_E, dtype=complex)
    scale = 1.0 / np.sqrt(1.0 - np.abs(f) ** 2)
    return np.asarray(scale)[..., None, None] * mat(sq, -np.conj(f) / sq, -f * sq, 1.0 / sq)


def to_sl2r(M):
    """Conjugate SU(1,1) into SL(2,R); returns the complex result (imaginary part ~ 0)."""
    return QSTAR @ M @ Q


def szego_verblunsky(spec, x):
    x = np.asarray(x, dtype=float)
    return float(spec.coupling) * np.exp(2j * np.pi * (spec.function.eval(x) + spec.k * x))


def szego_reduction_conjugacy(spec, x):
    """GL(2,R) transfer Z(x) taking the Q-conjugated Szego map to the rotation form.

    Z(x) = R_{pi eta(x - alpha) + pi/2} . diag(1, -1) with eta(x) = theta(x) + k x; the
    reflection makes the reduced rotation angle +psi + pi t instead of its negative.
    """
    x = np.asarray(x, dtype=float)
    y = x - spec.alpha
    eta = spec.function.eval(y) + spec.k * y
    return mul(rotation(np.pi * eta + np.pi / 2), diag(1.0, -1.0))


def szego_raw_map(spec):
    """x -> Q* A^{(E,f)}(x) Q as a real SL(2,R) matrix (no reduction)."""
    def A(x):
        M = to_sl2r(szego_matrix(szego_verblunsky(spec, x), np.exp(1j * np.pi * np.asarray(spec.param))))
        return M.real
    return A


def szego_reduced_map(spec):
    raw = szego_raw_map(spec)

    def A(x):
        x = np.asarray(x, dtype=float)
        return mul(mul(inv(szego_reduction_conjugacy(spec, x + spec.alpha)), raw(x)),
                   szego_reduction_conjugacy(spec, x))
    return A


def szego_rotation_equivalent(spec):
    """The rotation-family spec that the reduced Szego cocycle should coincide with."""
    lam = float(spec.coupling)
    diff = difference_with_shift(spec.function, spec.alpha)
    k_shift = np.pi * spec.k * spec.alpha
    psi = SmoothFunction(lambda x: np.pi * diff.eval(x) + k_shift,
                         lambda x: np.pi * diff.deriv1(x),
                         lambda x: np.pi * diff.deriv2(x), "pi*szego_angle")
    return CocycleSpec("rotation", psi, np.sqrt((1 + lam) / (1 - lam)),
                       np.pi * np.asarray(spec.param), alpha=spec.alpha)


def make_map(spec):
    """Return the vectorized map x -> A(x) in SL(2,R) for the given spec."""
    spec.validate()
    fam = spec.family
    if fam == "schrodinger":
        return lambda x: schrodinger_matrix(spec.param, float(spec.coupling), spec.function.eval(x))
    if fam == "polar":
        return lambda x: polar_matrix(_coupling_at(spec, x), spec.param, spec.function.eval(x))
    if fam == "rotation":
        return lambda x: rotation_family_matrix(float(spec.coupling), spec.function.eval(x), spec.param)
    return szego_reduced_map(spec)


def conjugation_check(samples=100, seed=0, tol=1e-10):
    """Check on random SU(1,1) elements that Q* M Q is real with determinant one."""
    rng = np.random.default_rng(seed)
    mats = [np.eye(2, dtype=complex), szego_matrix(0.5, 1.0)]
    for _ in range(samples):
        r = rng.exponential(1.0)
        a = np.cosh(r) * np.exp(2j * np.pi * rng.random())
        b = np.sinh(r) * np.exp(2j * np.pi * rng.random())
        mats.append(np.array([[a, b], [np.conj(b), np.conj(a)]]))
    for M in mats:
        R = to_sl2r(M)
        scale = max(1.0, float(np.abs(M).max()))
        if np.abs(R.imag).max() > tol * scale or abs(np.linalg.det(R) - 1.0) > tol * scale**2:
            return False
    return True


# ---------------------------------------------------------------- products

@dataclass
class ScaledProduct:
    """Product stored as exp(log_norm) * unit with ||unit|| = 1."""
    log_norm: Any
    unit: np.ndarray
    n: int

    def matrix(self):
        return np.exp(np.asarray(self.log_norm))[..., None, None] * self.unit


def _step_matrix(amap, alpha, x, j, sign):
    if sign > 0:
        return amap(x + j * alpha)
    return inv(amap(x - (j + 1) * alpha))


def products(amap, alpha, x, counts, sign=1, shape=None):
    """Run one orbit product and return ScaledProducts at every step count in ``counts``.

    sign = +1 builds A(x+(n-1)alpha)...A(x); sign = -1 builds A(x-n alpha)^{-1}...A(x-alpha)^{-1}.
    """
    x = np.asarray(x, dtype=float)
    wanted = {int(abs(c)) for c in counts}
    counts = sorted(wanted)
    out = {}
    first = _step_matrix(amap, alpha, x, 0, sign) if counts and counts[-1] > 0 else None
    base_shape = first.shape[:-2] if first is not None else np.shape(x) if shape is None else shape
    P = identity(base_shape)
    log_norm = np.zeros(base_shape)
    if 0 in counts:
        out[0] = ScaledProduct(log_norm.copy(), P.copy(), 0)
    for j in range(counts[-1] if counts else 0):
        A = first if j == 0 else _step_matrix(amap, alpha, x, j, sign)
        P = mul(A, P)
        nr = opnorm(P)
        P = P / nr[..., None, None]
        log_norm = log_norm + np.log(nr)
        if j + 1 in wanted:
            out[j + 1] = ScaledProduct(log_norm.copy(), P.copy(), sign * (j + 1))
    return out


def iterate(amap, alpha, x, n):
    """A_n(x) for any integer n as a ScaledProduct (n = 0 gives the identity)."""
    n = int(n)
    sign = 1 if n >= 0 else -1
    return products(amap, alpha, x, [abs(n)], sign)[abs(n)]
