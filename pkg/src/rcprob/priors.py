"""Parameter priors and the transforms used to sample bounded quantities."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class Prior:
    """``normal``: N(a, b**2) (``b`` is the standard deviation);
    ``uniform``: U(a, b); ``horseshoe``: only meaningful for SSVS."""

    kind: str
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("normal", "uniform", "horseshoe"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "normal" and not self.b > 0:
            raise ValueError("normal prior needs a positive scale")
        if self.kind == "uniform" and not self.b > self.a:
            raise ValueError("uniform prior needs low < high")

    @classmethod
    def parse(cls, text) -> "Prior":
        """Accept ``N(0,1)``, ``N(0,10)``, ``Unif(0,1)``, ``Unif(0,10)``, ``horseshoe``."""
        if isinstance(text, Prior):
            return text
        t = str(text).strip()
        if t.lower() == "horseshoe":
            return cls("horseshoe")
        m = re.fullmatch(r"(N|Normal|Unif|Uniform|U)\(\s*([-+.\deE]+)\s*,\s*([-+.\deE]+)\s*\)", t)
        if not m:
            raise ValueError(f"cannot parse prior {text!r}")
        kind = "normal" if m.group(1) in ("N", "Normal") else "uniform"
        return cls(kind, float(m.group(2)), float(m.group(3)))

    def __str__(self) -> str:
        if self.kind == "horseshoe":
            return "horseshoe"
        name = "N" if self.kind == "normal" else "Unif"
        return f"{name}({self.a:g},{self.b:g})"

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "normal"

    def in_support(self, x) -> bool:
        if self.kind != "uniform":
            return True
        x = np.asarray(x)
        return bool(np.all((x > self.a) & (x < self.b)))

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            z = (x - self.a) / self.b
            return float(-0.5 * np.sum(z * z) - x.size * (math.log(self.b) + 0.5 * _LOG_2PI))
        if self.kind == "uniform":
            if not self.in_support(x):
                return -math.inf
            return -x.size * math.log(self.b - self.a)
        raise ValueError("horseshoe density needs the local/global scales; see targets.build_ssvs_target")

    def grad_log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return -(x - self.a) / self.b**2
        return np.zeros_like(x)


def sigmoid(u):
    u = np.asarray(u, dtype=float)
    return np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.abs(u))), np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))))


def log_sigmoid(u):
    u = np.asarray(u, dtype=float)
    return -np.logaddexp(0.0, -u)


def softplus(u):
    return np.logaddexp(0.0, np.asarray(u, dtype=float))


def softplus_inv(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class IntervalTransform:
    """Map the real line onto (low, high) through ``low + (high-low) * sigmoid(u)``."""

    low: float
    high: float

    def forward(self, u):
        return self.low + (self.high - self.low) * sigmoid(u)

    def inverse(self, x):
        p = (np.asarray(x, dtype=float) - self.low) / (self.high - self.low)
        return np.log(p) - np.log1p(-p)

    def log_jacobian(self, u):
        """``log |dx/du|`` elementwise."""
        return math.log(self.high - self.low) + log_sigmoid(u) + log_sigmoid(-np.asarray(u, dtype=float))

    def dx_du(self, u):
        s = sigmoid(u)
        return (self.high - self.low) * s * (1 - s)

    def grad_log_jacobian(self, u):
        return 1.0 - 2.0 * sigmoid(u)
