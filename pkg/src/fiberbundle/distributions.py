"""Component strength distributions shared by the simulation and inference code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("weibull", "exponential")


@dataclass(frozen=True)
class StrengthModel:
    """Parametric strength distribution for bundle components.

    ``weibull`` uses the survival form exp(-(x/scale)**shape); ``exponential``
    is the shape-1 special case, kept as a named family for configuration
    clarity. ``scale`` is either a scalar (iid components) or a per-component
    vector.
    """

    family: str = "weibull"
    shape: float = 1.0
    scale: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if isinstance(self.scale, (list, tuple, np.ndarray)):
            object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
            if any(s <= 0 for s in self.scale):
                raise ValueError("all scale parameters must be positive")
        elif self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.shape <= 0:
            raise ValueError("shape must be positive")
        if self.family == "exponential" and self.shape != 1.0:
            raise ValueError("exponential family has fixed shape 1")

    @property
    def rho(self) -> float:
        return 1.0 if self.family == "exponential" else self.shape

    def _scale_array(self, n: int | None = None) -> np.ndarray:
        sig = np.asarray(self.scale, dtype=float)
        if n is not None and sig.ndim == 1 and sig.size != n:
            raise ValueError(f"scale vector has length {sig.size}, expected {n}")
        return sig

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.where(x > 0, x / self._scale_array(), 0.0)
        return -np.expm1(-(z**self.rho))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.where(x > 0, x / self._scale_array(), 0.0)
        return np.exp(-(z**self.rho))

    def logsf(self, x):
        # survival log stays finite far beyond where sf itself underflows
        x = np.asarray(x, dtype=float)
        z = np.where(x > 0, x / self._scale_array(), 0.0)
        return -(z**self.rho)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        sig = self._scale_array()
        rho = self.rho
        out = np.where(
            x > 0,
            (rho / sig) * (x / sig) ** (rho - 1.0) * np.exp(-((x / sig) ** rho)),
            0.0,
        )
        return out

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        return self._scale_array() * (-np.log1p(-q)) ** (1.0 / self.rho)

    def sample(self, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
        """Draw a (size, n) matrix of component strengths by inverse transform."""
        e = rng.standard_exponential((size, n))
        return self._scale_array(n) * e ** (1.0 / self.rho)


def unit_exponential() -> StrengthModel:
    return StrengthModel(family="exponential", shape=1.0, scale=1.0)
