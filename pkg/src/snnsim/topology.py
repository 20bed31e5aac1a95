"""Connections mapping presynaptic spikes to postsynaptic voltage increments.

Weights and contributions are float64 throughout.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ValidationError

if TYPE_CHECKING:
    from .plasticity import LearningRule

WEIGHT_DTYPE = np.float64
_SMALL = 8192


def _bounds(wmin: float | None, wmax: float | None, plastic: bool) -> tuple[float, float]:
    lo = wmin if wmin is not None else (0.0 if plastic else -np.inf)
    hi = wmax if wmax is not None else (1.0 if plastic else np.inf)
    if lo > hi:
        raise ValidationError(f"wmin={lo} exceeds wmax={hi}")
    return float(lo), float(hi)


class Connection:
    """Base class: bounds, normalization target and optional learning rule."""

    kind = ""

    def __init__(
        self,
        source: str,
        target: str,
        w: np.ndarray,
        wmin: float | None = None,
        wmax: float | None = None,
        norm: float | None = None,
        rule: "LearningRule | None" = None,
    ) -> None:
        self.source = source
        self.target = target
        self.w = np.array(w, dtype=WEIGHT_DTYPE, copy=True)
        self.wmin, self.wmax = _bounds(wmin, wmax, rule is not None)
        if norm is not None and not norm > 0:
            raise ValidationError("norm must be positive")
        self.norm = None if norm is None else float(norm)
        self.rule = rule

    def _attach_rule(self) -> None:
        # Called by subclasses once shapes are known; rules size their state from them.
        if self.rule is not None:
            self.rule.bind(self)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.wmin) or math.isfinite(self.wmax)

    def compute(self, s_pre: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normalize(self) -> None:
        raise NotImplementedError

    def clamp_weights(self) -> None:
        """Restore ``wmin <= w <= wmax`` elementwise."""
        if self.bounded:
            np.minimum(self.w, self.wmax, out=self.w)
            np.maximum(self.w, self.wmin, out=self.w)

    def accumulate_outer(self, out: np.ndarray, a: np.ndarray, b: np.ndarray, scale: float) -> None:
        """``out += scale * outer(a, b)`` in weight layout (a over sources, b over targets)."""
        raise NotImplementedError

    def accumulate_pair(self, out: np.ndarray, a1, b1, a2, b2, scale: float) -> None:
        """``out += scale * (outer(a1, b1) + outer(a2, b2))``."""
        self.accumulate_outer(out, a1, b1, scale)
        self.accumulate_outer(out, a2, b2, scale)

    def outer(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.zeros(self.w.shape)
        self.accumulate_outer(out, a, b, 1.0)
        return out

    def config(self) -> dict[str, Any]:
        return {
            "type": self.kind,
            "source": self.source,
            "target": self.target,
            "shape": list(self.w.shape),
            "wmin": self.wmin if np.isfinite(self.wmin) else None,
            "wmax": self.wmax if np.isfinite(self.wmax) else None,
            "norm": self.norm,
            "rule": None if self.rule is None else self.rule.config(),
        }

    def weight_arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.w}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.source!r} -> {self.target!r}, shape={self.w.shape})"


class DenseConnection(Connection):
    """All-to-all weight matrix of shape (n_pre, n_post)."""

    kind = "dense"

    def __init__(self, source: str, target: str, w: np.ndarray, **kwargs: Any) -> None:
        super().__init__(source, target, w, **kwargs)
        if self.w.ndim != 2:
            raise DimensionError("dense weights must be a matrix")
        self._attach_rule()

    @property
    def n_pre(self) -> int:
        return self.w.shape[0]

    @property
    def n_post(self) -> int:
        return self.w.shape[1]

    def compute(self, s_pre: np.ndarray) -> np.ndarray:
        if s_pre.shape != (self.n_pre,):
            raise DimensionError(f"expected {self.n_pre} presynaptic values, got {s_pre.shape}")
        if s_pre.dtype == bool and self.w.size > _SMALL:
            idx = np.flatnonzero(s_pre)
            if idx.size == 0:
                return np.zeros(self.n_post)
            return self.w[idx].sum(axis=0)
        return s_pre.astype(np.float64) @ self.w

    def normalize(self) -> None:
        if self.norm is None:
            return
        c = np.abs(self.w).sum(axis=0, dtype=np.float64)
        nz = c > 0
        # Divide first: norm / c overflows when a column sum is subnormal.
        self.w[:, nz] = self.w[:, nz] / c[nz] * self.norm

    def accumulate_outer(self, out: np.ndarray, a: np.ndarray, b: np.ndarray, scale: float) -> None:
        # Binary arguments are usually sparse; on large matrices touch only the
        # rows/columns that spiked. Small matrices are cheaper as a full outer product.
        if out.size <= _SMALL:
            a = scale * a if scale != 1.0 else a
            out += np.dot(np.asarray(a, dtype=np.float64)[:, None], np.asarray(b, dtype=np.float64)[None, :])
        elif b.dtype == bool:
            idx = np.flatnonzero(b)
            if idx.size:
                out[:, idx] += (scale * a)[:, None]
        elif a.dtype == bool:
            idx = np.flatnonzero(a)
            if idx.size:
                out[idx, :] += (scale * b)[None, :]
        else:
            out += scale * np.outer(a, b)


    def accumulate_pair(self, out: np.ndarray, a1, b1, a2, b2, scale: float) -> None:
        if out.size > _SMALL:
            super().accumulate_pair(out, a1, b1, a2, b2, scale)
            return
        left = np.empty((out.shape[0], 2))
        left[:, 0] = a1
        left[:, 1] = a2
        right = np.empty((2, out.shape[1]))
        right[0] = b1
        right[1] = b2
        if scale != 1.0:
            left *= scale
        out += np.dot(left, right)


class SparseConnection(DenseConnection):
    """Dense layout with a fixed zero-mask: entries where ``mask`` is False stay 0."""

    kind = "sparse"

    def __init__(self, source: str, target: str, w: np.ndarray, mask: np.ndarray | None = None, **kwargs: Any) -> None:
        super().__init__(source, target, w, **kwargs)
        if mask is None:
            mask = self.w != 0
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.shape != self.w.shape:
            raise DimensionError("mask shape must match weight shape")
        self.w[~self.mask] = 0.0

    def normalize(self) -> None:
        super().normalize()
        self.w[~self.mask] = 0.0

    def clamp_weights(self) -> None:
        super().clamp_weights()
        self.w[~self.mask] = 0.0

    def accumulate_outer(self, out: np.ndarray, a: np.ndarray, b: np.ndarray, scale: float) -> None:
        super().accumulate_outer(out, a, b, scale)
        out[~self.mask] = 0.0

    def accumulate_pair(self, out: np.ndarray, a1, b1, a2, b2, scale: float) -> None:
        DenseConnection.accumulate_pair(self, out, a1, b1, a2, b2, scale)
        out[~self.mask] = 0.0

    def weight_arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "mask": self.mask.astype(WEIGHT_DTYPE)}


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


class ConvConnection(Connection):
    """2-D cross-correlation between (C_in, H, W) and (C_out, H_out, W_out) layers.

    ``w`` is the kernel of shape (out_channels, in_channels, kh, kw). Plasticity
    deltas are summed over all spatial positions sharing a kernel entry.
    """

    kind = "conv"

    def __init__(
        self,
        source: str,
        target: str,
        w: np.ndarray,
        input_shape: tuple[int, int, int],
        stride: int = 1,
        padding: int = 0,
        **kwargs: Any,
    ) -> None:
        super().__init__(source, target, w, **kwargs)
        if self.w.ndim != 4:
            raise DimensionError("conv kernel must be (out_channels, in_channels, kh, kw)")
        if stride < 1 or padding < 0:
            raise ValidationError("stride must be >= 1 and padding >= 0")
        self.input_shape = tuple(int(v) for v in input_shape)
        if len(self.input_shape) != 3 or self.input_shape[0] != self.w.shape[1]:
            raise DimensionError("input_shape must be (in_channels, height, width) matching the kernel")
        self.stride = int(stride)
        self.padding = int(padding)
        _, h, w_ = self.input_shape
        kh, kw = self.w.shape[2:]
        oh = conv_output_size(h, kh, self.stride, self.padding)
        ow = conv_output_size(w_, kw, self.stride, self.padding)
        if oh < 1 or ow < 1:
            raise DimensionError("kernel larger than padded input")
        self.output_shape = (self.w.shape[0], oh, ow)
        self._attach_rule()

    @property
    def n_pre(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def n_post(self) -> int:
        return int(np.prod(self.output_shape))

    def patches(self, values: np.ndarray) -> np.ndarray:
        """Receptive-field view of a flat source array: (C_in, H_out, W_out, kh, kw)."""
        if values.shape != (self.n_pre,):
            raise DimensionError(f"expected {self.n_pre} presynaptic values, got {values.shape}")
        img = values.reshape(self.input_shape).astype(np.float64)
        p = self.padding
        if p:
            img = np.pad(img, ((0, 0), (p, p), (p, p)))
        kh, kw = self.w.shape[2:]
        win = sliding_window_view(img, (kh, kw), axis=(1, 2))
        _, oh, ow = self.output_shape
        return win[:, : (oh - 1) * self.stride + 1 : self.stride, : (ow - 1) * self.stride + 1 : self.stride]

    def compute(self, s_pre: np.ndarray) -> np.ndarray:
        win = self.patches(s_pre)
        out = np.einsum("cpqij,ocij->opq", win, self.w, optimize=True)
        return out.reshape(-1)

    def normalize(self) -> None:
        if self.norm is None:
            return
        c = np.abs(self.w).sum(axis=(1, 2, 3), dtype=np.float64)
        nz = c > 0
        self.w[nz] = self.w[nz] / c[nz][:, None, None, None] * self.norm

    def accumulate_outer(self, out: np.ndarray, a: np.ndarray, b: np.ndarray, scale: float) -> None:
        win = self.patches(np.asarray(a, dtype=np.float64))
        post = np.asarray(b, dtype=np.float64).reshape(self.output_shape)
        out += scale * np.einsum("cpqij,opq->ocij", win, post, optimize=True)

    def config(self) -> dict[str, Any]:
        cfg = super().config()
        cfg.update(input_shape=list(self.input_shape), stride=self.stride, padding=self.padding)
        return cfg


CONNECTION_TYPES: dict[str, type[Connection]] = {
    cls.kind: cls for cls in (DenseConnection, SparseConnection, ConvConnection)
}
