"""Radial shape functions and their coordinate derivatives.

A kernel is evaluated either on the scaled radius ``r = eps * ||x - c||``
(:func:`evaluate`) or as a function of the evaluation point ``x`` with the
center ``c`` held fixed (:func:`partial`).  Derivatives are written per
family in closed form, so the center itself (``x == c``) needs no special
casing for the smooth families.

Derivative requests are strings naming the differentiated coordinates:
``""`` (no derivative), ``"x"``, ``"y"``, ``"z"``, ``"xx"``, ``"yy"``,
``"zz"`` and the mixed ``"xy"``, ``"xz"``, ``"yz"``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_AXES = {"x": 0, "y": 1, "z": 2}


class Family(str, enum.Enum):
    IMQ = "imq"
    MQ = "mq"
    GA = "ga"
    CUBIC = "cubic"
    TPS = "tps"


POSITIVE_DEFINITE = frozenset({Family.IMQ, Family.GA})


class KernelError(ValueError):
    """Invalid kernel argument or a derivative the kernel does not have."""


@dataclass(frozen=True)
class Kernel:
    """Radial kernel ``phi(eps * ||x - c||)``.

    Parameters
    ----------
    family
        One of :class:`Family` or its string name (``"imq"``, ``"ga"``, ...).
    eps
        Shape parameter, strictly positive.
    """

    family: Family
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.eps > 0:
            raise KernelError(f"shape parameter must be positive, got {self.eps}")
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def positive_definite(self) -> bool:
        return self.family in POSITIVE_DEFINITE

    @property
    def phi0(self) -> float:
        """Value at the center, ``phi(0)``."""
        return float(evaluate(self, 0.0))

    def gram(self, a, b=None) -> np.ndarray:
        """Matrix ``phi(eps * ||a_i - b_j||)`` between two point arrays."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        return _eval_s(self, self.eps**2 * d2)


def parse_deriv(deriv: str, dim: int) -> tuple[int, ...]:
    """Translate a derivative name into a tuple of axis indices."""
    deriv = deriv.lower()
    if len(deriv) > 2:
        raise KernelError(f"derivatives of total order > 2 are not supported: {deriv!r}")
    try:
        axes = tuple(_AXES[c] for c in deriv)
    except KeyError:
        raise KernelError(f"unknown derivative {deriv!r}") from None
    if any(a >= dim for a in axes):
        raise KernelError(f"derivative {deriv!r} is not defined in {dim} dimensions")
    return axes


def _eval_s(kernel: Kernel, s):
    """phi as a function of the squared scaled radius ``s = r**2``."""
    f = kernel.family
    if f is Family.IMQ:
        return 1.0 / np.sqrt(1.0 + s)
    if f is Family.MQ:
        return np.sqrt(1.0 + s)
    if f is Family.GA:
        return np.exp(-s)
    r = np.sqrt(s)
    if f is Family.CUBIC:
        return r**3
    # r**2 log r has the limit 0 at r = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, 0.5 * s * np.log(np.where(s > 0, s, 1.0)), 0.0)
    return out


def evaluate(kernel: Kernel, r):
    """Evaluate ``phi(r)`` on the already scaled radius ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise KernelError("radius must be nonnegative")
    out = _eval_s(kernel, r * r)
    return out if out.ndim else float(out)


def partial(kernel: Kernel, center, x, deriv: str = ""):
    """Coordinate derivative of ``x -> phi(eps * ||x - center||)``.

    ``center`` and ``x`` broadcast against each other along leading axes;
    the last axis holds the coordinates.  Returns an array of the broadcast
    leading shape (a float for single points).
    """
    center = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    dim = max(center.shape[-1] if center.ndim else 1, x.shape[-1] if x.ndim else 1)
    axes = parse_deriv(deriv, dim)
    delta = x - center
    if delta.ndim == 0:
        delta = delta[None]
    e2 = kernel.eps**2
    d2 = (delta**2).sum(axis=-1)
    s = e2 * d2
    order = len(axes)
    fam = kernel.family

    if order == 0:
        out = _eval_s(kernel, s)
    elif fam in (Family.IMQ, Family.MQ, Family.GA):
        out = _smooth_partial(fam, e2, s, delta, axes)
    else:
        out = _piecewise_partial(fam, kernel.eps, d2, delta, axes)
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def _smooth_partial(fam, e2, s, delta, axes):
    # phi(s) with s = eps^2 |delta|^2:
    #   d_i phi = 2 e2 delta_i phi'(s)
    #   d_i d_j phi = 2 e2 [delta_ij phi'(s) + 2 e2 delta_i delta_j phi''(s)]
    if fam is Family.IMQ:
        d1 = -0.5 * (1.0 + s) ** -1.5
        d2 = 0.75 * (1.0 + s) ** -2.5
    elif fam is Family.MQ:
        d1 = 0.5 * (1.0 + s) ** -0.5
        d2 = -0.25 * (1.0 + s) ** -1.5
    else:
        g = np.exp(-s)
        d1 = -g
        d2 = g
    i = axes[0]
    if len(axes) == 1:
        return 2.0 * e2 * delta[..., i] * d1
    j = axes[1]
    kron = 1.0 if i == j else 0.0
    return 2.0 * e2 * (kron * d1 + 2.0 * e2 * delta[..., i] * delta[..., j] * d2)


def _piecewise_partial(fam, eps, d2, delta, axes):
    d = np.sqrt(d2)
    at_center = d2 == 0
    safe_d = np.where(at_center, 1.0, d)
    i = axes[0]
    if fam is Family.CUBIC:
        # phi = eps^3 d^3
        if len(axes) == 1:
            return 3.0 * eps**3 * d * delta[..., i]
        j = axes[1]
        kron = 1.0 if i == j else 0.0
        cross = np.where(at_center, 0.0, delta[..., i] * delta[..., j] / safe_d)
        return 3.0 * eps**3 * (kron * d + cross)
    # thin plate spline, phi = r^2 log r with r = eps d
    r = eps * safe_d
    if len(axes) == 1:
        return np.where(at_center, 0.0, eps**2 * delta[..., i] * (2.0 * np.log(r) + 1.0))
    if np.any(at_center):
        raise KernelError("second derivatives of the thin plate spline are singular at r = 0")
    j = axes[1]
    kron = 1.0 if i == j else 0.0
    return eps**2 * (kron * (2.0 * np.log(r) + 1.0) + 2.0 * delta[..., i] * delta[..., j] / d2)


def partial_matrix(kernel: Kernel, eval_points, centers, deriv: str = "") -> np.ndarray:
    """Matrix of derivatives, entry ``(i, k)`` is ``partial(kernel, centers[k], eval_points[i], deriv)``."""
    eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    return partial(kernel, centers[None, :, :], eval_points[:, None, :], deriv)
