"""Reference implementations of the training-loss terms.

Every reduction goes through :func:`math.fsum`, so results are exactly
rounded and independent of summation order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .contour import DiagnosticWarning
from .imgcore import BinaryMask, FloatMap, FloatMapPair

EPS = 1e-7


def _values(x) -> np.ndarray:
    if isinstance(x, (FloatMap,)):
        return x.values.astype(np.float64)
    if isinstance(x, BinaryMask):
        return x.values.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _channels(pair) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pair, FloatMapPair):
        return _values(pair.horizontal), _values(pair.vertical)
    arr = np.asarray(pair, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"expected a FloatMapPair or (H, W, 2) array, got {arr.shape}")
    return arr[..., 0], arr[..., 1]


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def _fsum(a: np.ndarray) -> float:
    return math.fsum(a.ravel().tolist())


def cross_entropy(pred, truth, eps: float = EPS) -> float:
    """-(1/n) sum truth * log(pred), with pred clamped below at ``eps``."""
    p, t = _values(pred), _values(truth)
    _same_shape(p, t)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    terms = t * np.log(np.maximum(p, eps))
    return -_fsum(terms) / p.size


def dice_loss(pred, truth) -> float:
    """1 - 2 sum(pred * truth) / (sum pred + sum truth); 0 if both are empty."""
    p, t = _values(pred), _values(truth)
    _same_shape(p, t)
    denom = _fsum(p) + _fsum(t)
    if denom == 0.0:
        return 0.0
    return 1.0 - 2.0 * _fsum(p * t) / denom


def inst_loss(pred, truth) -> float:
    return cross_entropy(pred, truth) + dice_loss(pred, truth)


def mse(D, D_star) -> float:
    """Mean squared difference over both channels jointly (n = 2HW)."""
    dh, dv = _channels(D)
    th, tv = _channels(D_star)
    _same_shape(dh, th)
    return (_fsum((dh - th) ** 2) + _fsum((dv - tv) ** 2)) / (2 * dh.size)


def _central_dx(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, ((0, 0), (1, 1)), mode="edge")
    return (p[:, 2:] - p[:, :-2]) / 2.0


def _central_dy(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, ((1, 1), (0, 0)), mode="edge")
    return (p[2:, :] - p[:-2, :]) / 2.0


def msge(D, D_star, region=None) -> float:
    """Mean squared gradient error.

    The x-derivative of the horizontal difference and the y-derivative of
    the vertical difference are squared and summed per pixel, then averaged
    over ``region`` pixels (the whole image when ``region`` is None).
    """
    dh, dv = _channels(D)
    th, tv = _channels(D_star)
    _same_shape(dh, th)
    gh = _central_dx(dh - th)
    gv = _central_dy(dv - tv)
    if region is None:
        sel = np.ones(dh.shape, dtype=bool)
    else:
        sel = _values(region).astype(bool)
        _same_shape(sel, dh)
    n = int(sel.sum())
    if n == 0:
        warnings.warn("empty region for gradient loss; returning 0", DiagnosticWarning, stacklevel=2)
        return 0.0
    return (_fsum(gh[sel] ** 2) + _fsum(gv[sel] ** 2)) / n


def dist_loss(D, D_star, region=None) -> float:
    return mse(D, D_star) + 2.0 * msge(D, D_star, region)


@dataclass(frozen=True)
class LossBreakdown:
    l_inst: float
    l_hv: float
    l_ohv: float
    l_be: float
    alpha: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "alpha": self.alpha,
            "l_be": self.l_be,
            "l_hv": self.l_hv,
            "l_inst": self.l_inst,
            "l_ohv": self.l_ohv,
            "total": self.total,
        }


def total_loss(l_inst: float, l_hv: float, l_ohv: float, l_be, alpha: float) -> LossBreakdown:
    """Combine the branch losses and the weighted bending regularizer.

    ``l_be`` may be a float or a :class:`~nucbend.bending.BendingReport`.
    """
    l_be = float(getattr(l_be, "loss", l_be))
    parts = {"l_inst": l_inst, "l_hv": l_hv, "l_ohv": l_ohv, "l_be": l_be, "alpha": alpha}
    for name, value in parts.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} is not finite: {value}")
    total = float(l_inst) + float(l_hv) + float(l_ohv) + float(alpha) * l_be
    return LossBreakdown(float(l_inst), float(l_hv), float(l_ohv), l_be, float(alpha), total)
