"""Small convolutional patch discriminator written directly in numpy.

Input is one channels-first ``(C, H, W)`` array; output is a map of raw
logits, one per receptive-field patch.
"""

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2
INIT_STD = 0.02
BLOB_MAGIC = b"WABEDISC"
BLOB_VERSION = 1

# (in, out, kernel, stride, padding, activation)
ARCHITECTURE = (
    (6, 16, 4, 2, 1, True),
    (16, 32, 4, 2, 1, True),
    (32, 64, 4, 2, 1, True),
    (64, 1, 3, 1, 1, False),
)


class DiscriminatorFormatError(ValueError):
    """Raised when a discriminator blob is malformed or does not match the architecture."""


@dataclass
class Conv2d:
    weight: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)
    stride: int
    padding: int

    def _columns(self, x: np.ndarray) -> np.ndarray:
        p = self.padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p)))
        kh, kw = self.weight.shape[2:]
        windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))
        return windows[:, ::self.stride, ::self.stride]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        cols = self._columns(x)
        y = np.einsum("oikl,ihwkl->ohw", self.weight, cols) + self.bias[:, None, None]
        return y, cols

    def backward(self, x_shape, cols: np.ndarray, dy: np.ndarray):
        """Returns (dx, dweight, dbias)."""
        d_weight = np.einsum("ohw,ihwkl->oikl", dy, cols)
        d_bias = dy.sum(axis=(1, 2))
        d_cols = np.einsum("oikl,ohw->ihwkl", self.weight, dy)

        c, h, w = x_shape
        p, s = self.padding, self.stride
        kh, kw = self.weight.shape[2:]
        ho, wo = dy.shape[1:]
        dxp = np.zeros((c, h + 2 * p, w + 2 * p))
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + s * ho:s, j:j + s * wo:s] += d_cols[:, :, :, i, j]
        return dxp[:, p:p + h, p:p + w], d_weight, d_bias


@dataclass
class ForwardCache:
    shapes: List[tuple] = field(default_factory=list)
    columns: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


class Discriminator:
    """Patch discriminator over 6-channel (anchor, difference) pairs."""

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layers: List[Conv2d] = []
        self.activations: List[bool] = []
        for c_in, c_out, k, stride, pad, act in ARCHITECTURE:
            self.layers.append(Conv2d(
                weight=rng.normal(0.0, INIT_STD, size=(c_out, c_in, k, k)),
                bias=np.zeros(c_out),
                stride=stride,
                padding=pad,
            ))
            self.activations.append(act)

    @property
    def in_channels(self) -> int:
        return self.layers[0].weight.shape[1]

    def parameters(self) -> Dict[str, np.ndarray]:
        """Arrays keyed ``conv<i>.weight`` / ``conv<i>.bias``, shared with the layers."""
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"conv{i}.weight"] = layer.weight
            params[f"conv{i}.bias"] = layer.bias
        return params

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, value in self.parameters().items():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(value).tobytes())
        return digest.hexdigest()

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters().values())

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
        """Logit map ``(H', W')`` for a ``(6, H, W)`` input."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ValueError(f"Discriminator expects ({self.in_channels}, H, W) input, got {x.shape}")
        cache = ForwardCache()
        for layer, act in zip(self.layers, self.activations):
            cache.shapes.append(x.shape)
            y, cols = layer.forward(x)
            cache.columns.append(cols)
            cache.pre_activations.append(y)
            x = np.where(y > 0, y, LEAKY_SLOPE * y) if act else y
        return x[0], cache

    def backward(self, cache: ForwardCache, d_logits: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """Input gradient ``(6, H, W)`` and parameter gradients keyed like ``parameters()``."""
        grads: Dict[str, np.ndarray] = {}
        dy = np.asarray(d_logits, dtype=np.float64)[None]
        for i in reversed(range(len(self.layers))):
            if self.activations[i]:
                dy = np.where(cache.pre_activations[i] > 0, dy, LEAKY_SLOPE * dy)
            dx, d_weight, d_bias = self.layers[i].backward(cache.shapes[i], cache.columns[i], dy)
            grads[f"conv{i}.weight"] = d_weight
            grads[f"conv{i}.bias"] = d_bias
            dy = dx
        return dy, grads

    def to_blob(self) -> bytes:
        """Versioned little-endian float32 serialization."""
        parts = [BLOB_MAGIC, struct.pack("<II", BLOB_VERSION, len(self.layers))]
        for layer in self.layers:
            c_out, c_in, kh, kw = layer.weight.shape
            parts.append(struct.pack("<6I", c_out, c_in, kh, kw, layer.stride, layer.padding))
        for layer in self.layers:
            parts.append(layer.weight.astype("<f4").tobytes())
            parts.append(layer.bias.astype("<f4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_blob(cls, blob: bytes) -> "Discriminator":
        if blob[:8] != BLOB_MAGIC:
            raise DiscriminatorFormatError(f"Bad magic {blob[:8]!r}, expected {BLOB_MAGIC!r}")
        version, count = struct.unpack_from("<II", blob, 8)
        if version != BLOB_VERSION:
            raise DiscriminatorFormatError(f"Unsupported discriminator blob version {version}")
        disc = cls(seed=0)
        if count != len(disc.layers):
            raise DiscriminatorFormatError(f"Blob has {count} layers, architecture has {len(disc.layers)}")
        offset = 16
        for i, layer in enumerate(disc.layers):
            header = struct.unpack_from("<6I", blob, offset)
            offset += 24
            expected = (*layer.weight.shape, layer.stride, layer.padding)
            if header != expected:
                raise DiscriminatorFormatError(f"Layer {i} header {header} does not match architecture {expected}")
        for layer in disc.layers:
            for name in ("weight", "bias"):
                target = getattr(layer, name)
                nbytes = target.size * 4
                if offset + nbytes > len(blob):
                    raise DiscriminatorFormatError(f"Blob truncated at byte {offset}")
                values = np.frombuffer(blob, dtype="<f4", count=target.size, offset=offset)
                setattr(layer, name, values.astype(np.float64).reshape(target.shape))
                offset += nbytes
        if offset != len(blob):
            raise DiscriminatorFormatError(f"{len(blob) - offset} trailing bytes after parameters")
        logger.debug("Loaded discriminator with %d parameters", disc.num_parameters())
        return disc
