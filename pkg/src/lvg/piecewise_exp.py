"""Closed-form time-value curves of LVG models with piecewise-constant volatility.

On a segment with volatility ``s`` the time value solves ``s**2 V'' = z**2 V``.
Segments are stored by their value ``A`` and slope ``B`` at an anchor point
``p``; then ``V(K) = A cosh(u) + (s B / z) sinh(u)`` with ``u = z (K - p) / s``.
Left branches are anchored at the left knot of each segment, right branches at
the right knot.  Segments are closed on the left, open on the right.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBranch, OutOfDomain

_RESCALE = 1e200
_LOG_RESCALE = math.log(_RESCALE)
_EXP_MAX = 700.0
_GROW_SPLIT = 300.0


def _scaled_exp(c, u):
    """``c * exp(u)`` without intermediate overflow or spurious underflow."""
    c = np.asarray(c, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        direct = c * np.exp(np.clip(u, -_EXP_MAX, _EXP_MAX))
        logged = np.sign(c) * np.exp(np.log(np.abs(c)) + u)
    out = np.where(np.abs(u) > _EXP_MAX, logged, direct)
    return np.where(c == 0.0, 0.0, out)


def segment_eval(A, B, sigma, z, d, log_scale=0.0):
    """Value and slope at signed distance ``d`` from a segment's anchor.

    The result is multiplied by ``exp(log_scale)``, folded into the exponents
    so that huge growth and tiny scale factors cancel before rounding.
    """
    ratio = sigma / z
    p = 0.5 * (A + ratio * B)
    m = 0.5 * (A - ratio * B)
    u = d / ratio
    ep = _scaled_exp(p, u + log_scale)
    em = _scaled_exp(m, -u + log_scale)
    return ep + em, (ep - em) / ratio


def grow(A, B, sigma, z, d):
    """Value and slope after distance ``d``, as mantissas and a log scale.

    Returns ``(v, dv, shift)`` with the true values ``v * exp(shift)``.
    """
    ratio = sigma / z
    u = d / ratio
    p = 0.5 * (A + ratio * B)
    m = 0.5 * (A - ratio * B)
    if abs(u) <= _GROW_SPLIT:
        ep = p * math.exp(u)
        em = m * math.exp(-u)
        return ep + em, (ep - em) / ratio, 0.0
    au = abs(u)
    small = math.exp(-2.0 * au)
    if u > 0:
        ep, em = p, m * small
    else:
        ep, em = p * small, m
    return ep + em, (ep - em) / ratio, au


def grow_values(A, B, sigma, z, d):
    """Like :func:`grow` but returns true values, saturating to infinity."""
    v, dv, shift = grow(A, B, sigma, z, d)
    if shift == 0.0:
        return v, dv
    f = math.exp(shift) if shift < _EXP_MAX else math.inf
    return (v * f if v else 0.0), (dv * f if dv else 0.0)


def propagate_up(A, B, sigma_j, sigma_next):
    """Start values of segment ``j+1`` from the end values of segment ``j``.

    In value/slope form the C1 matching across a knot is the identity; the
    volatilities only enter through the segment evaluations on either side.
    """
    if sigma_j <= 0 or sigma_next <= 0:
        raise ValueError("volatilities must be positive")
    return A, B


def propagate_down(A, B, sigma_j, sigma_prev):
    """Mirror of :func:`propagate_up` for branches built from the right end."""
    if sigma_j <= 0 or sigma_prev <= 0:
        raise ValueError("volatilities must be positive")
    return A, B


@dataclass(frozen=True)
class ExpBranch:
    """One-sided solution of ``s(K)**2 V'' = z**2 V`` over a run of segments.

    ``A[k], B[k]`` describe segment ``first + k`` at its anchor, multiplied by
    ``exp(log_scale[k])``.  ``side='left'`` anchors at left knots (branch grows
    from ``nu[0]``), ``side='right'`` at right knots (grows from ``nu[-1]``).
    """

    nu: np.ndarray
    sigma: np.ndarray
    z: float
    side: str
    first: int
    A: np.ndarray
    B: np.ndarray
    log_scale: np.ndarray

    def anchor(self, seg):
        return self.nu[seg] if self.side == "left" else self.nu[seg + 1]

    def eval(self, K, seg, extra_log=0.0):
        """Value and slope at ``K`` using segment index ``seg`` (arrays allowed)."""
        seg = np.asarray(seg)
        k = seg - self.first
        a = self.A[k]
        b = self.B[k]
        s = self.sigma[seg]
        d = np.asarray(K, dtype=float) - np.where(
            self.side == "left", self.nu[seg], self.nu[seg + 1]
        )
        return segment_eval(a, b, s, self.z, d, self.log_scale[k] + extra_log)

    def end_state(self, K, seg):
        """Unscaled mantissas and log scale at ``K`` inside segment ``seg``."""
        k = seg - self.first
        d = K - self.anchor(seg)
        v, dv, shift = grow(float(self.A[k]), float(self.B[k]), float(self.sigma[seg]), self.z, d)
        return v, dv, float(self.log_scale[k]) + shift


def _build(nu, sigma, z, side, stop_seg, A0=0.0, B0=None):
    """Propagate a branch from the outer boundary to segment ``stop_seg``."""
    n_seg = len(sigma)
    if side == "left":
        order = range(0, stop_seg + 1)
        B0 = 2.0 * z / sigma[0] if B0 is None else B0
    else:
        order = range(n_seg - 1, stop_seg - 1, -1)
        B0 = -2.0 * z / sigma[-1] if B0 is None else B0
    A_list, B_list, s_list = [], [], []
    a, b, log_s = A0, B0, 0.0
    prev = None
    for seg in order:
        if prev is not None:
            width = nu[prev + 1] - nu[prev]
            d = width if side == "left" else -width
            a, b, shift = grow(a, b, sigma[prev], z, d)
            log_s += shift
            if side == "left":
                a, b = propagate_up(a, b, sigma[prev], sigma[seg])
            else:
                a, b = propagate_down(a, b, sigma[prev], sigma[seg])
            big = max(abs(a), abs(b))
            if big > _RESCALE:
                shift = math.ceil(math.log(big) / _LOG_RESCALE) * _LOG_RESCALE
                a *= math.exp(-shift)
                b *= math.exp(-shift)
                log_s += shift
        A_list.append(a)
        B_list.append(b)
        s_list.append(log_s)
        prev = seg
    if side == "right":
        A_list.reverse()
        B_list.reverse()
        s_list.reverse()
        first = stop_seg
    else:
        first = 0
    return ExpBranch(
        nu, sigma, z, side, first, np.array(A_list), np.array(B_list), np.array(s_list)
    )


def unit_left_branch(nu, sigma, z, stop_seg=None):
    """``V1(1, .)``: zero at ``nu[0]`` with slope ``2 z / sigma[0]``."""
    nu, sigma = np.asarray(nu, float), np.asarray(sigma, float)
    stop_seg = len(sigma) - 1 if stop_seg is None else stop_seg
    return _build(nu, sigma, z, "left", stop_seg)


def unit_right_branch(nu, sigma, z, stop_seg=0):
    """``V2(1, .)``: zero at ``nu[-1]`` with slope ``-2 z / sigma[-1]``."""
    nu, sigma = np.asarray(nu, float), np.asarray(sigma, float)
    return _build(nu, sigma, z, "right", stop_seg)


def branch_eval(branch: ExpBranch, K):
    """Value and derivative of a branch at ``K`` (closed-left segments)."""
    K = np.asarray(K, dtype=float)
    if np.any(K < branch.nu[0]) or np.any(K > branch.nu[-1]):
        raise OutOfDomain(f"strike outside [{branch.nu[0]}, {branch.nu[-1]}]")
    last = branch.first + len(branch.A) - 1
    seg = np.clip(np.searchsorted(branch.nu, K, side="right") - 1, branch.first, last)
    v, dv = branch.eval(K, seg)
    if v.ndim == 0:
        return float(v), float(dv)
    return v, dv


def solve_lambda_pair(v1, d1, v2, d2):
    """Scale factors making the two branches meet with a slope jump of -1."""
    if not (v1 > 0 and v2 > 0 and d1 > 0 and d2 < 0):
        raise DegenerateBranch(f"branch signs violated: v1={v1}, d1={d1}, v2={v2}, d2={d2}")
    lam1 = v2 / (d1 * v2 - d2 * v1)
    lam2 = lam1 * v1 / v2
    return lam1, lam2


@dataclass(frozen=True)
class LVGSlice:
    """Single-maturity LVG model with piecewise-constant volatility.

    ``nu`` are the knots ``L = nu[0] < ... < nu[-1] = U`` and ``sigma[j]`` the
    volatility on ``[nu[j], nu[j+1])``.  The call prices are those of maturity
    ``t* = 2 / z**2``.
    """

    nu: np.ndarray
    sigma: np.ndarray
    z: float
    x: float
    left: ExpBranch = field(init=False, repr=False, compare=False)
    right: ExpBranch = field(init=False, repr=False, compare=False)
    lam_log: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "sigma", sigma)
        if len(nu) != len(sigma) + 1 or len(sigma) < 1:
            raise ValueError("need len(nu) == len(sigma) + 1")
        if np.any(np.diff(nu) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(sigma <= 0):
            raise ValueError("volatilities must be positive")
        if not nu[0] < self.x < nu[-1]:
            raise ValueError("spot must lie strictly inside (L, U)")
        jl = int(np.searchsorted(nu, self.x, side="left")) - 1
        jr = int(np.searchsorted(nu, self.x, side="right")) - 1
        left = unit_left_branch(nu, sigma, self.z, jl)
        right = unit_right_branch(nu, sigma, self.z, jr)
        a1, b1, s1 = left.end_state(self.x, jl)
        a2, b2, s2 = right.end_state(self.x, jr)
        if not (a1 > 0 and a2 > 0 and b1 > 0 and b2 < 0):
            raise DegenerateBranch("unit branches have wrong signs at the spot")
        # lambda_1 = v2 / (d1 v2 - d2 v1) with v = a e^s, d = b e^s, written so
        # that the exponentials cancel analytically.
        det = b1 * a2 - b2 * a1
        lam1_log = math.log(a2 / det) - s1
        lam2_log = math.log(a1 / det) - s2
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "lam_log", (lam1_log, lam2_log))

    @property
    def L(self):
        return float(self.nu[0])

    @property
    def U(self):
        return float(self.nu[-1])

    @property
    def tstar(self):
        return 2.0 / self.z**2

    @property
    def n_interior_knots(self):
        return len(self.nu) - 2

    def _check(self, K):
        K = np.asarray(K, dtype=float)
        if np.any(K < self.nu[0]) or np.any(K > self.nu[-1]) or np.any(np.isnan(K)):
            raise OutOfDomain(f"strike outside [{self.L}, {self.U}]")
        return K

    def segment_index(self, K):
        """Closed-left segment index of each strike (the last segment includes U)."""
        K = np.asarray(K, dtype=float)
        return np.clip(np.searchsorted(self.nu, K, side="right") - 1, 0, len(self.sigma) - 1)

    def _tv(self, K):
        K = self._check(K)
        Kf = np.atleast_1d(K)
        v = np.empty_like(Kf)
        dv = np.empty_like(Kf)
        below = Kf < self.x
        seg = self.segment_index(Kf)
        if np.any(below):
            vv, dd = self.left.eval(Kf[below], seg[below], self.lam_log[0])
            v[below], dv[below] = vv, dd
        if np.any(~below):
            segr = np.maximum(seg[~below], self.right.first)
            vv, dd = self.right.eval(Kf[~below], segr, self.lam_log[1])
            v[~below], dv[~below] = vv, dd
        # zero boundary values are exact by construction
        v = np.where((Kf == self.nu[0]) | (Kf == self.nu[-1]), 0.0, v)
        if K.ndim == 0:
            return float(v[0]), float(dv[0])
        return v, dv

    def time_value(self, K):
        return self._tv(K)[0]

    def time_value_deriv(self, K):
        """Derivative of the time value (right derivative at the spot)."""
        return self._tv(K)[1]

    def left_state_at_spot(self):
        """Left-branch value and left derivative at the spot."""
        jl = self.left.first + len(self.left.A) - 1
        v, dv = self.left.eval(self.x, jl, self.lam_log[0])
        return float(v), float(dv)

    def call_price(self, K):
        K = self._check(K)
        return self.time_value(K) + np.maximum(self.x - K, 0.0)

    def call_deriv(self, K):
        K = self._check(K)
        return self.time_value_deriv(K) - (K < self.x)

    def local_sigma(self, K):
        return self.sigma[self.segment_index(self._check(K))]

    def density(self, K):
        """Second strike derivative of the call price, ``z**2 V / sigma**2``."""
        K = self._check(K)
        return self.z**2 * self.time_value(K) / self.local_sigma(K) ** 2

    def reflected(self):
        """The slice obtained by the change of variables ``K -> L + U - K``."""
        L, U = self.L, self.U
        return LVGSlice(L + U - self.nu[::-1], self.sigma[::-1].copy(), self.z, L + U - self.x)

    def to_dict(self):
        return {
            "z": float(self.z),
            "x": float(self.x),
            "L": self.L,
            "U": self.U,
            "nu": [float(v) for v in self.nu],
            "sigma": [float(s) for s in self.sigma],
        }

    @classmethod
    def from_dict(cls, d):
        nu = np.asarray(d["nu"], dtype=float)
        if "L" in d and (nu[0] != d["L"] or nu[-1] != d["U"]):
            raise ValueError("slice bounds disagree with knot vector")
        return cls(nu, np.asarray(d["sigma"], dtype=float), float(d["z"]), float(d["x"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def slice_call_price(s: LVGSlice, K):
    return s.call_price(K)


def slice_density(s: LVGSlice, K):
    return s.density(K)
