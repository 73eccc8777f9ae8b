"""Fully-connected network architecture, parameters and forward recursion.

Biases live inside the weight matrices: the input is augmented with a
constant 1 and every hidden activation vector ends with a constant 1 slot.
With widths L_0..L_{k+1}, weight matrix V_j has shape L_j x L_{j+1} and

    Phi_0 = V_0^T sigma_a,    Phi_j = V_j^T phi_j(Phi_{j-1})  (j = 1..k).

The parameter vector theta stacks vec(V_0), ..., vec(V_k) with vec taken
column-major.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from activations import ActivationKind, NonFiniteInputError, eval_layer_activation


class ShapeMismatchError(ValueError):
    """Raised when vectors or matrices do not match the network widths."""
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a fully-connected network.

    Attributes:
        widths: Layer widths L_0..L_{k+1}; L_0 = L_in + 1 includes the bias slot
        activation: Activation family of the hidden layers
    """
    widths: Tuple[int, ...]
    activation: ActivationKind = ActivationKind.TANH

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if isinstance(self.activation, str):
            object.__setattr__(self, "activation", ActivationKind.from_name(self.activation))

        if len(widths) < 3:
            raise ShapeMismatchError(
                f"Need at least one hidden layer (3 widths), got {len(widths)} widths")
        if widths[0] < 2:
            raise ShapeMismatchError(
                f"L_0 must be at least 2 (one input plus the bias slot), got {widths[0]}")
        if any(w < 1 for w in widths):
            raise ShapeMismatchError(f"All widths must be positive, got {widths}")

    @property
    def k(self) -> int:
        """Number of hidden layers."""
        return len(self.widths) - 2

    @property
    def input_dim(self) -> int:
        return self.widths[0] - 1

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def hidden_widths(self) -> Tuple[int, ...]:
        """Widths L_1..L_k of the activation vectors phi_1..phi_k."""
        return self.widths[1:-1]

    def block_shape(self, j: int) -> Tuple[int, int]:
        """Shape (L_j, L_{j+1}) of weight matrix V_j."""
        self._check_layer(j)
        return self.widths[j], self.widths[j + 1]

    def block_size(self, j: int) -> int:
        rows, cols = self.block_shape(j)
        return rows * cols

    def block_slice(self, j: int) -> slice:
        """Span of vec(V_j) inside theta."""
        self._check_layer(j)
        start = sum(self.block_size(i) for i in range(j))
        return slice(start, start + self.block_size(j))

    @property
    def num_parameters(self) -> int:
        """Total parameter count p = sum_j L_j * L_{j+1}."""
        return sum(self.block_size(j) for j in range(self.k + 1))

    def _check_layer(self, j: int) -> None:
        if not 0 <= j <= self.k:
            raise IndexError(f"Weight layer index {j} out of range 0..{self.k}")


@dataclass(frozen=True)
class Parameters:
    """Weight matrices V_0..V_k (biases folded in as last rows).

    The matrices are stored as read-only float64 copies.
    """
    matrices: Tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen = []
        for matrix in self.matrices:
            arr = np.array(matrix, dtype=np.float64, copy=True)
            if arr.ndim != 2:
                raise ShapeMismatchError(f"Weight matrices must be 2-D, got shape {arr.shape}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "matrices", tuple(frozen))

    def __len__(self) -> int:
        return len(self.matrices)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.matrices[j]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Parameters):
            return NotImplemented
        if len(self) != len(other):
            return False
        return all(a.shape == b.shape and np.array_equal(a, b)
                   for a, b in zip(self.matrices, other.matrices))

    def check_against(self, spec: NetworkSpec) -> None:
        """Verify that the matrix shapes chain according to ``spec``."""
        if len(self.matrices) != spec.k + 1:
            raise ShapeMismatchError(
                f"Expected {spec.k + 1} weight matrices, got {len(self.matrices)}")
        for j, matrix in enumerate(self.matrices):
            if matrix.shape != spec.block_shape(j):
                raise ShapeMismatchError(
                    f"V_{j} has shape {matrix.shape}, expected {spec.block_shape(j)}")

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "Parameters":
        return cls(tuple(np.zeros(spec.block_shape(j)) for j in range(spec.k + 1)))


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Everything a forward pass computes, cached for derivative reuse.

    Attributes:
        spec: Architecture the trace belongs to
        sigma: Raw input (length L_in)
        sigma_a: Augmented input (length L_0, last entry 1)
        pre: Phi_0..Phi_k; Phi_j has length L_{j+1}
        phi: phi_0..phi_k with phi_0 = sigma_a and phi_j = phi_j(Phi_{j-1})
        dphi: Diagonal first derivatives; entry 0 is None, entry j is phi_j'(Phi_{j-1})
        ddphi: Diagonal second derivatives, indexed like ``dphi``
    """
    spec: NetworkSpec
    sigma: np.ndarray
    sigma_a: np.ndarray
    pre: Tuple[np.ndarray, ...]
    phi: Tuple[np.ndarray, ...]
    dphi: Tuple[Optional[np.ndarray], ...] = field(repr=False)
    ddphi: Tuple[Optional[np.ndarray], ...] = field(repr=False)

    @property
    def output(self) -> np.ndarray:
        """Network output Phi(sigma, theta) = Phi_k."""
        return self.pre[-1]


def _as_finite_vector(values, name: str) -> np.ndarray:
    vec_ = np.asarray(values, dtype=np.float64)
    if vec_.ndim != 1:
        raise ShapeMismatchError(f"{name} must be a vector, got shape {vec_.shape}")
    bad = np.flatnonzero(~np.isfinite(vec_))
    if bad.size:
        idx = int(bad[0])
        raise NonFiniteInputError(f"Non-finite {name} entry at index {idx}: {vec_[idx]}", idx)
    return vec_


def augment(sigma: Sequence[float]) -> np.ndarray:
    """Append the bias entry: [sigma^T, 1]^T."""
    sigma = _as_finite_vector(sigma, "input")
    return np.append(sigma, 1.0)


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major vectorization [a_11, ..., a_n1, a_12, ..., a_nm]."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeMismatchError(f"vec expects a matrix, got shape {matrix.shape}")
    return matrix.reshape(-1, order="F").copy()


def unvec(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size != rows * cols:
        raise ShapeMismatchError(
            f"Cannot reshape {values.size} entries into a {rows}x{cols} matrix")
    return values.reshape((rows, cols), order="F").copy()


def flatten(params: Parameters) -> np.ndarray:
    """theta = [vec(V_0)^T ... vec(V_k)^T]^T."""
    return np.concatenate([vec(matrix) for matrix in params.matrices])


def unflatten(theta: np.ndarray, spec: NetworkSpec) -> Parameters:
    """Split theta back into V_0..V_k."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size != spec.num_parameters:
        raise ShapeMismatchError(
            f"theta has {theta.size} entries, network has {spec.num_parameters} parameters")
    return Parameters(tuple(
        unvec(theta[spec.block_slice(j)], *spec.block_shape(j))
        for j in range(spec.k + 1)
    ))


def _check_layer_output(values: np.ndarray, layer: int) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteInputError(
            f"Non-finite output of layer {layer} at index {int(bad[0])}", layer)


def forward(spec: NetworkSpec, params: Parameters, sigma: Sequence[float]) -> ForwardTrace:
    """Run the forward recursion and keep every intermediate.

    Args:
        spec: Network architecture
        params: Weight matrices matching ``spec``
        sigma: Input vector of length L_in

    Returns:
        ForwardTrace with Phi_0..Phi_k, the activation vectors and their
        diagonal derivatives

    Raises:
        ShapeMismatchError: If the input or parameters do not fit ``spec``
        NonFiniteInputError: If an intermediate overflows (index = layer)
    """
    params.check_against(spec)
    sigma_a = augment(sigma)
    if sigma_a.size != spec.widths[0]:
        raise ShapeMismatchError(
            f"Input has length {sigma_a.size - 1}, network expects {spec.input_dim}")

    pre = [params[0].T @ sigma_a]
    _check_layer_output(pre[0], 0)
    phi = [sigma_a]
    dphi = [None]
    ddphi = [None]

    for j in range(1, spec.k + 1):
        act, d1, d2 = eval_layer_activation(spec.activation, pre[j - 1])
        phi.append(act)
        dphi.append(d1)
        ddphi.append(d2)
        pre.append(params[j].T @ act)
        _check_layer_output(pre[j], j)

    return ForwardTrace(
        spec=spec,
        sigma=np.asarray(sigma, dtype=np.float64).copy(),
        sigma_a=sigma_a,
        pre=tuple(pre),
        phi=tuple(phi),
        dphi=tuple(dphi),
        ddphi=tuple(ddphi),
    )


def network_output(spec: NetworkSpec, params: Parameters, sigma: Sequence[float]) -> np.ndarray:
    """Output Phi(sigma, theta) without keeping the trace."""
    return forward(spec, params, sigma).output
