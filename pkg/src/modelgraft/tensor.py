"""Dense tensors: the value type flowing through every graph edge."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class DType(IntEnum):
    F32 = 0
    I8 = 1
    I16 = 2
    I32 = 3


_NUMPY_DTYPES = {
    DType.F32: np.dtype("<f4"),
    DType.I8: np.dtype("i1"),
    DType.I16: np.dtype("<i2"),
    DType.I32: np.dtype("<i4"),
}

MAX_RANK = 4


class TensorError(ValueError):
    pass


@dataclass(frozen=True)
class Tensor:
    """An n-dimensional array with explicit dtype, shape and flat row-major data.

    F32 is the only dtype the interpreter will execute; the integer dtypes
    exist so the codec can read models that use them (and downstream passes
    can reject them with a precise error).
    """

    dtype: DType
    shape: tuple[int, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) > MAX_RANK:
            raise TensorError(f"rank {len(shape)} exceeds maximum {MAX_RANK}")
        if any(d < 0 for d in shape):
            raise TensorError(f"negative extent in shape {shape}")
        want = _NUMPY_DTYPES[DType(self.dtype)]
        buf = np.ascontiguousarray(self.data, dtype=want).reshape(-1)
        if buf.size != self.element_count():
            raise TensorError(
                f"shape {shape} implies {self.element_count()} scalars, got {buf.size}"
            )
        buf.setflags(write=False)
        object.__setattr__(self, "data", buf)

    def element_count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the data in its logical shape."""
        return self.data.reshape(self.shape)

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    @classmethod
    def f32(cls, values) -> "Tensor":
        arr = np.asarray(values, dtype=np.float32)
        return cls(DType.F32, arr.shape, arr.reshape(-1))

    @classmethod
    def scalar(cls, value: float) -> "Tensor":
        return cls(DType.F32, (), np.asarray([value], dtype=np.float32))

    @classmethod
    def from_bytes(cls, dtype: DType, shape: tuple[int, ...], raw: bytes) -> "Tensor":
        arr = np.frombuffer(raw, dtype=_NUMPY_DTYPES[DType(dtype)])
        return cls(dtype, shape, arr)

    def numpy_dtype(self) -> np.dtype:
        return _NUMPY_DTYPES[DType(self.dtype)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def __hash__(self):
        return hash((self.dtype, self.shape, self.data.tobytes()))
