"""Forward-mode automatic differentiation with array-valued dual numbers.

A :class:`Dual` carries a value array of shape ``S``, a tangent array of
shape ``S + (D,)`` and, for second-order numbers, a Hessian array of shape
``S + (D, D)``.  All arithmetic is vectorised over the leading shape ``S`` so
that one evaluation differentiates a batch of quadrature points at once.

Second-order numbers are truncated Taylor jets; they hold the same
information as a dual-of-dual with symmetric seeds, without the redundant
mixed parts.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual",
    "seed",
    "value",
    "exp",
    "log",
    "sqrt",
    "softplus",
    "sigmoid",
    "macaulay",
    "einsum2",
    "stack",
    "grad_wrt_tensor",
    "grad_wrt_scalars",
    "hessian_wrt_scalars",
    "compose",
]


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _col(x, k):
    """Append ``k`` unit axes so ``x`` broadcasts against derivative arrays."""
    x = np.asarray(x)
    return x.reshape(x.shape + (1,) * k)


class Dual:
    """Value plus first (and optionally second) derivatives w.r.t. ``D`` seeds."""

    __slots__ = ("val", "tan", "hess")
    __array_ufunc__ = None  # make ndarray (op) Dual dispatch to the reflected op

    def __init__(self, val, tan, hess=None):
        self.val = np.asarray(val, dtype=float)
        self.tan = tan
        self.hess = hess

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def nseed(self):
        return self.tan.shape[-1]

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def __repr__(self):
        return f"Dual(val={self.val!r}, nseed={self.nseed}, order={self.order})"

    # -- helpers ---------------------------------------------------------
    def _chain(self, f0, f1, f2=None):
        """Apply a scalar function given its value and first two derivatives."""
        tan = _col(f1, 1) * self.tan
        hess = None
        if self.hess is not None:
            hess = _col(f1, 2) * self.hess + _col(f2, 2) * _outer(self.tan, self.tan)
        return Dual(f0, tan, hess)

    def _scale(self, c, val):
        hess = None if self.hess is None else _col(c, 2) * self.hess
        return Dual(val, _col(c, 1) * self.tan, hess)

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            hess = None
            if self.hess is not None and other.hess is not None:
                hess = self.hess + other.hess
            return Dual(self.val + other.val, self.tan + other.tan, hess)
        val = self.val + other
        tan, hess = self.tan, self.hess
        if val.shape != self.val.shape:
            tan = np.broadcast_to(tan, val.shape + tan.shape[-1:])
            if hess is not None:
                hess = np.broadcast_to(hess, val.shape + hess.shape[-2:])
        return Dual(val, tan, hess)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.tan, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            a, b = self, other
            tan = _col(a.val, 1) * b.tan + _col(b.val, 1) * a.tan
            hess = None
            if a.hess is not None and b.hess is not None:
                cross = _outer(a.tan, b.tan)
                hess = (
                    _col(a.val, 2) * b.hess
                    + _col(b.val, 2) * a.hess
                    + cross
                    + np.swapaxes(cross, -1, -2)
                )
            return Dual(a.val * b.val, tan, hess)
        return self._scale(other, self.val * other)

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self._scale(1.0 / np.asarray(other, dtype=float), self.val / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        p = float(p)
        if p == 2.0:
            return self * self
        v = self.val
        return self._chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    def __matmul__(self, w):
        """Right-multiply the last value axis by a constant matrix."""
        w = np.asarray(w, dtype=float)
        val = self.val @ w
        tan = np.einsum("...nY,nm->...mY", self.tan, w)
        hess = None
        if self.hess is not None:
            hess = np.einsum("...nYZ,nm->...mYZ", self.hess, w)
        return Dual(val, tan, hess)

    # -- comparisons act on the value only -------------------------------
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    # -- structure -------------------------------------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        tan = self.tan[key + (slice(None),)]
        hess = None if self.hess is None else self.hess[key + (slice(None), slice(None))]
        return Dual(self.val[key], tan, hess)

    def _val_axis(self, axis):
        return axis if axis >= 0 else self.val.ndim + axis

    def sum(self, axis):
        ax = self._val_axis(axis)
        hess = None if self.hess is None else self.hess.sum(axis=ax)
        return Dual(self.val.sum(axis=ax), self.tan.sum(axis=ax), hess)

    def swapaxes(self, a1, a2):
        a1, a2 = self._val_axis(a1), self._val_axis(a2)
        hess = None if self.hess is None else np.swapaxes(self.hess, a1, a2)
        return Dual(np.swapaxes(self.val, a1, a2), np.swapaxes(self.tan, a1, a2), hess)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        d = self.nseed
        hess = None if self.hess is None else self.hess.reshape(shape + (d, d))
        return Dual(self.val.reshape(shape), self.tan.reshape(shape + (d,)), hess)


# -- construction ---------------------------------------------------------


def seed(x, order=1):
    """Make independent variables from the last axis of ``x``.

    ``x`` has shape ``S + (D,)``; the result has value shape ``S + (D,)``
    and ``D`` seed directions, so ``seed(x)[..., i]`` is the i-th variable.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    tan = np.broadcast_to(np.eye(d), x.shape + (d,))
    hess = None
    if order == 2:
        hess = np.broadcast_to(np.zeros(()), x.shape + (d, d))
    elif order != 1:
        raise ValueError("order must be 1 or 2")
    return Dual(x, tan, hess)


def value(x):
    return x.val if isinstance(x, Dual) else x


def _lift(x, like: Dual):
    if isinstance(x, Dual):
        return x
    x = np.asarray(x, dtype=float)
    d = like.nseed
    tan = np.broadcast_to(np.zeros(()), x.shape + (d,))
    hess = None if like.hess is None else np.broadcast_to(np.zeros(()), x.shape + (d, d))
    return Dual(x, tan, hess)


# -- elementary functions ---------------------------------------------------


def exp(x):
    if not isinstance(x, Dual):
        return np.exp(x)
    e = np.exp(x.val)
    return x._chain(e, e, e)


def log(x):
    if not isinstance(x, Dual):
        return np.log(x)
    inv = 1.0 / x.val
    return x._chain(np.log(x.val), inv, -inv * inv)


def sqrt(x):
    if not isinstance(x, Dual):
        return np.sqrt(x)
    s = np.sqrt(x.val)
    return x._chain(s, 0.5 / s, -0.25 / (s * x.val))


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x):
    if not isinstance(x, Dual):
        return _sigmoid(x)
    s = _sigmoid(x.val)
    ds = s * (1.0 - s)
    return x._chain(s, ds, ds * (1.0 - 2.0 * s))


def softplus(x):
    """``log(1 + exp(x))``, evaluated without overflow."""
    if not isinstance(x, Dual):
        return np.logaddexp(0.0, x)
    s = _sigmoid(x.val)
    return x._chain(np.logaddexp(0.0, x.val), s, s * (1.0 - s))


def macaulay(x):
    """``max(x, 0)`` with subgradient 0 at the kink."""
    if not isinstance(x, Dual):
        return np.maximum(x, 0.0)
    on = (x.val > 0.0).astype(float)
    return x._chain(x.val * on, on, np.zeros_like(on))


# -- structured operations ------------------------------------------------


def einsum2(subscripts, a, b):
    """Two-operand ``np.einsum`` that propagates dual parts by the product rule.

    Subscripts must use lower-case letters (``Y`` and ``Z`` are reserved for
    the seed axes).
    """
    da, db = isinstance(a, Dual), isinstance(b, Dual)
    if not (da or db):
        return np.einsum(subscripts, a, b)
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    if da and not db:
        hess = None
        if a.hess is not None:
            hess = np.einsum(f"{sa}YZ,{sb}->{out}YZ", a.hess, b)
        return Dual(
            np.einsum(subscripts, a.val, b), np.einsum(f"{sa}Y,{sb}->{out}Y", a.tan, b), hess
        )
    if db and not da:
        hess = None
        if b.hess is not None:
            hess = np.einsum(f"{sa},{sb}YZ->{out}YZ", a, b.hess)
        return Dual(
            np.einsum(subscripts, a, b.val), np.einsum(f"{sa},{sb}Y->{out}Y", a, b.tan), hess
        )
    tan = np.einsum(f"{sa}Y,{sb}->{out}Y", a.tan, b.val) + np.einsum(
        f"{sa},{sb}Y->{out}Y", a.val, b.tan
    )
    hess = None
    if a.hess is not None and b.hess is not None:
        cross = np.einsum(f"{sa}Y,{sb}Z->{out}YZ", a.tan, b.tan)
        hess = (
            np.einsum(f"{sa}YZ,{sb}->{out}YZ", a.hess, b.val)
            + np.einsum(f"{sa},{sb}YZ->{out}YZ", a.val, b.hess)
            + cross
            + np.swapaxes(cross, -1, -2)
        )
    return Dual(np.einsum(subscripts, a.val, b.val), tan, hess)


def stack(items, axis=0):
    """``np.stack`` for a mix of duals and constants (axis counts value axes)."""
    duals = [x for x in items if isinstance(x, Dual)]
    if not duals:
        return np.stack([np.asarray(x, dtype=float) for x in items], axis=axis)
    like = duals[0]
    items = [_lift(x, like) for x in items]
    shape = np.broadcast_shapes(*(x.val.shape for x in items))
    vals, tans, hesses = [], [], []
    d = like.nseed
    for x in items:
        vals.append(np.broadcast_to(x.val, shape))
        tans.append(np.broadcast_to(x.tan, shape + (d,)))
        if like.hess is not None:
            hesses.append(np.broadcast_to(x.hess, shape + (d, d)))
    ax = axis if axis >= 0 else len(shape) + 1 + axis
    hess = np.stack(hesses, axis=ax) if like.hess is not None else None
    return Dual(np.stack(vals, axis=ax), np.stack(tans, axis=ax), hess)


# -- convenience drivers --------------------------------------------------


def grad_wrt_tensor(f, T):
    """Gradient ``df/dT`` of a scalar function of a 3x3 tensor (or a batch).

    One evaluation with nine seed directions.
    """
    T = np.asarray(T, dtype=float)
    x = seed(T.reshape(T.shape[:-2] + (9,)))
    out = f(x.reshape(T.shape[:-2] + (3, 3)))
    if not isinstance(out, Dual):
        return np.zeros_like(T)
    return out.tan.reshape(T.shape)


def grad_wrt_scalars(f, x, max_seeds=12):
    """Exact first partials of ``f(x0, ..., xk)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] > max_seeds:
        raise ValueError(f"{x.shape[-1]} independents exceed the seed limit {max_seeds}")
    v = seed(x)
    out = f(*[v[..., i] for i in range(x.shape[-1])])
    if not isinstance(out, Dual):
        return np.zeros_like(x)
    return out.tan


def hessian_wrt_scalars(f, x):
    """Value, gradient and Hessian of a scalar function of ``k`` reals."""
    x = np.asarray(x, dtype=float)
    v = seed(x, order=2)
    out = f(*[v[..., i] for i in range(x.shape[-1])])
    return out.val, out.tan, out.hess


def compose(val, grad, hess, inputs):
    """Chain rule for ``g(u_1..u_k)`` given g's value and derivatives at ``u``.

    ``grad`` has shape ``S + (k,)`` and ``hess`` ``S + (k, k)``; ``inputs`` are
    duals (or constants) in the outer seed space.  This lets an inner function
    be differentiated with a small seed count and then lifted to many seeds.
    """
    like = next(u for u in inputs if isinstance(u, Dual))
    inputs = [_lift(u, like) for u in inputs]
    grad = np.asarray(grad)
    tan = sum(_col(grad[..., i], 1) * u.tan for i, u in enumerate(inputs))
    out_hess = None
    if like.hess is not None:
        hess = np.asarray(hess)
        out_hess = sum(_col(grad[..., i], 2) * u.hess for i, u in enumerate(inputs))
        for i, ui in enumerate(inputs):
            for j, uj in enumerate(inputs):
                out_hess = out_hess + _col(hess[..., i, j], 2) * _outer(ui.tan, uj.tan)
    return Dual(val, tan, out_hess)
