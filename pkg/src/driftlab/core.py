"""Vectors, norms, orthant cones and the reflection that maps an orthant onto R^d_+.

Vectors are plain 1-d float numpy arrays. Orthants are described by an
:class:`OrthantMask`, a tuple of signs (``+1`` for a nonnegative coordinate,
``-1`` for a nonpositive one). Zero satisfies both signs, so every orthant
is a closed cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "OrthantMask",
    "as_vector",
    "in_orthant",
    "leq_orthant",
    "reflect",
    "norm_l1",
    "norm_l2",
]


def as_vector(x, *, name: str = "x") -> np.ndarray:
    """Return ``x`` as a finite 1-d float array, raising ValueError otherwise."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite coordinates: {v.tolist()}")
    return v


@dataclass(frozen=True)
class OrthantMask:
    """Sign pattern selecting one of the 2^d closed orthants."""

    signs: tuple[int, ...]

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if not signs or any(s not in (1, -1) for s in signs):
            raise ValueError(f"mask signs must be a non-empty sequence of +1/-1, got {self.signs!r}")
        object.__setattr__(self, "signs", signs)

    @classmethod
    def positive(cls, d: int) -> "OrthantMask":
        return cls((1,) * d)

    @classmethod
    def parse(cls, spec: str | Iterable) -> "OrthantMask":
        """Build a mask from ``"+-"``, ``["+", "-"]`` or ``[1, -1]``."""
        items = list(spec)
        signs = []
        for s in items:
            if s in ("+", 1, "1", "nonneg"):
                signs.append(1)
            elif s in ("-", -1, "-1", "nonpos"):
                signs.append(-1)
            else:
                raise ValueError(f"unrecognised orthant sign {s!r}")
        return cls(tuple(signs))

    @property
    def dim(self) -> int:
        return len(self.signs)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.signs, dtype=float)

    def to_json(self) -> list[str]:
        return ["+" if s > 0 else "-" for s in self.signs]

    def __str__(self) -> str:
        return "".join(self.to_json())


def _check_dims(mask: OrthantMask, *vectors: np.ndarray) -> None:
    for v in vectors:
        if v.shape[-1] != mask.dim:
            raise ValueError(f"dimension mismatch: vector has {v.shape[-1]} coordinates, mask has {mask.dim}")


def in_orthant(x, mask: OrthantMask) -> bool:
    x = as_vector(x)
    _check_dims(mask, x)
    return bool(np.all(mask.array * x >= 0))


def leq_orthant(x, y, mask: OrthantMask) -> bool:
    """``x <=_mask y``, i.e. ``y - x`` lies in the orthant."""
    x, y = as_vector(x, name="x"), as_vector(y, name="y")
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    _check_dims(mask, x)
    return bool(np.all(mask.array * (y - x) >= 0))


def reflect(x, mask: OrthantMask) -> np.ndarray:
    """Flip the sign of every coordinate whose mask entry is nonpositive.

    The map is an involutive isometry taking the masked orthant onto R^d_+.
    """
    x = as_vector(x)
    _check_dims(mask, x)
    return mask.array * x


def norm_l2(x) -> float:
    # hypot rescales internally, so tiny or huge coordinates neither underflow nor overflow.
    return math.hypot(*as_vector(x))


def norm_l1(x) -> float:
    return float(np.sum(np.abs(as_vector(x))))


def vector_to_json(x: Sequence[float]) -> list[float]:
    return [float(v) for v in as_vector(x)]
