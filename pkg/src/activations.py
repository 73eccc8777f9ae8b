"""Smooth elementwise activation families and their layer-level constants.

Every hidden layer applies one scalar map elementwise to all but the last
entry of its input and appends the constant bias slot 1. The bound constants
used by the layer, Jacobian and Hessian bounds are derived from a frozen
table of elementwise envelopes; ``constants_oracle.py`` recomputes that table.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Tuple

import numpy as np
from scipy.special import expit


ScalarMap = Callable[[np.ndarray], np.ndarray]


class NonFiniteInputError(ValueError):
    """Raised when a NaN or infinity reaches an activation or layer."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ActivationKind(Enum):
    """Activation family used by every hidden layer."""
    TANH = "tanh"
    LOGISTIC = "logistic"
    SWISH = "swish"

    @classmethod
    def from_name(cls, name: str) -> "ActivationKind":
        """Look up a kind by its lowercase config name."""
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise ValueError(f"Unknown activation '{name}' (expected one of: {choices})") from None


def _tanh(x):
    return np.tanh(x)


def _tanh_d1(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_d2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _logistic(x):
    return expit(x)


def _logistic_d1(x):
    s = expit(x)
    return s * (1.0 - s)


def _logistic_d2(x):
    s = expit(x)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _swish(x):
    return x * expit(x)


def _swish_d1(x):
    s = expit(x)
    return s + x * s * (1.0 - s)


def _swish_d2(x):
    s = expit(x)
    return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s))


_SCALAR_MAPS: Dict[ActivationKind, Tuple[ScalarMap, ScalarMap, ScalarMap]] = {
    ActivationKind.TANH: (_tanh, _tanh_d1, _tanh_d2),
    ActivationKind.LOGISTIC: (_logistic, _logistic_d1, _logistic_d2),
    ActivationKind.SWISH: (_swish, _swish_d1, _swish_d2),
}


def scalar_maps(kind: ActivationKind) -> Tuple[ScalarMap, ScalarMap, ScalarMap]:
    """Return the elementwise (value, first, second) derivative maps of ``kind``."""
    try:
        return _SCALAR_MAPS[kind]
    except KeyError:
        raise ValueError(f"Unknown activation kind: {kind!r}") from None


@dataclass(frozen=True)
class ActivationEnvelope:
    """Elementwise envelope of a scalar activation.

    Attributes:
        slope: m1 in |f(x)| <= m1*|x| + m0
        offset: m0 in |f(x)| <= m1*|x| + m0
        first_sup: sup |f'(x)|
        second_sup: sup |f''(x)|
        bracket: interval the oracle searches for the suprema
    """
    slope: float
    offset: float
    first_sup: float
    second_sup: float
    bracket: Tuple[float, float]


# Frozen from constants_oracle.py (grid step 1e-3 plus bounded refinement).
# tanh: sup|tanh''| = 4/(3*sqrt(3)) at tanh(x) = 1/sqrt(3).
# logistic: sup|s''| = sqrt(3)/18 at s = (3 - sqrt(3))/6.
# swish: offset is the depth of the negative lobe, attained at x = -1 - exp(x);
#        sup|f'| is attained where x*tanh(x/2) = 2; sup|f''| = f''(0) = 1/2.
ENVELOPES: Dict[ActivationKind, ActivationEnvelope] = {
    ActivationKind.TANH: ActivationEnvelope(
        slope=0.0, offset=1.0, first_sup=1.0,
        second_sup=0.769800358919501, bracket=(-5.0, 5.0)),
    ActivationKind.LOGISTIC: ActivationEnvelope(
        slope=0.0, offset=1.0, first_sup=0.25,
        second_sup=0.096225044864938, bracket=(-10.0, 10.0)),
    ActivationKind.SWISH: ActivationEnvelope(
        slope=1.0, offset=0.278464542761074, first_sup=1.099839320128867,
        second_sup=0.5, bracket=(-10.0, 10.0)),
}


@dataclass(frozen=True)
class ActivationConstants:
    """Bound constants of a width-L augmented activation vector.

    For any y of width L: ||phi(y)|| <= a1*||y|| + a0, ||phi'(y)|| <= b0 and
    ||phi''(y)|| <= c0.

    Attributes:
        a1: Growth slope (0 for uniformly bounded activations)
        a0: Growth offset, absorbing the appended bias entry
        b0: Bound on the spectral norm of the diagonal first derivative
        c0: Bound on the spectral norm of the diagonal second derivative
        width: Width L the constants were computed for
    """
    a1: float
    a0: float
    b0: float
    c0: float
    width: int


def eval_layer_activation(kind: ActivationKind,
                          y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate a layer activation and its diagonal derivatives.

    Args:
        kind: Activation family
        y: Layer input of width L >= 1

    Returns:
        Tuple (phi, dphi, ddphi) of width-L vectors. The first L-1 entries
        are f, f', f'' of the matching entries of ``y``; the last entry is
        exactly 1 for ``phi`` and exactly 0 for both derivatives.

    Raises:
        NonFiniteInputError: If an entry of ``y`` is NaN or infinite
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise ValueError(f"Activation input must be a non-empty vector, got shape {y.shape}")
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        idx = int(bad[0])
        raise NonFiniteInputError(f"Non-finite activation input at index {idx}: {y[idx]}", idx)

    f, d1, d2 = scalar_maps(kind)
    head = y[:-1]

    phi = np.ones_like(y)
    dphi = np.zeros_like(y)
    ddphi = np.zeros_like(y)
    phi[:-1] = f(head)
    dphi[:-1] = d1(head)
    ddphi[:-1] = d2(head)
    return phi, dphi, ddphi


def layer_constants(kind: ActivationKind, width: int) -> ActivationConstants:
    """Compute the bound constants for a width-L augmented activation vector.

    a0 = sqrt(m0^2 * (L - 1) + 1) combines the elementwise offset of the L-1
    active slots with the constant bias slot; the derivative constants are the
    elementwise suprema since the derivative maps are diagonal.
    """
    if width < 1:
        raise ValueError(f"Layer width must be positive, got {width}")
    try:
        env = ENVELOPES[kind]
    except KeyError:
        raise ValueError(f"Unknown activation kind: {kind!r}") from None

    return ActivationConstants(
        a1=env.slope,
        a0=float(np.sqrt(env.offset ** 2 * (width - 1) + 1.0)),
        b0=env.first_sup,
        c0=env.second_sup,
        width=width,
    )
