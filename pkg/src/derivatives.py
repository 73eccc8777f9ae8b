"""Exact parameter Jacobians and Hessian blocks, and finite-difference oracles.

The Jacobian of layer output Phi_w with respect to vec(V_j) is

    dPhi_w/dvec(V_j) = V_w^T D_w ... V_{j+1}^T D_{j+1} (I_{L_{j+1}} kron phi_j^T)

for w >= j and 0 for j > w, where D_l = diag(phi_l'(Phi_{l-1})). The Hessian
blocks of one output element come from differentiating that product once
more: every D_l with l > q picks up a second-derivative term, and V_q itself
contributes a mixed Kronecker term when q > j. Because the activations are
elementwise, the second-derivative tensor is diagonal and each contraction is
a row scaling of an existing Jacobian block.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from network import ForwardTrace, NetworkSpec, Parameters, flatten, network_output, unflatten


logger = logging.getLogger(__name__)

# Step scales of the central-difference oracles (multiplied by max(1, |theta_r|)).
JACOBIAN_FD_STEP = 1e-6
HESSIAN_FD_STEP = float(np.finfo(np.float64).eps ** (1.0 / 3.0))
MIN_FD_STEP = 1e-10


@dataclass(frozen=True, eq=False)
class JacobianBlock:
    """dPhi_w / dvec(V_j), shape L_{w+1} x (L_j * L_{j+1})."""
    w: int
    j: int
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class FullJacobian:
    """dPhi_k / dtheta, shape L_out x p, columns in flatten order."""
    matrix: np.ndarray
    spec: NetworkSpec

    def block(self, j: int) -> np.ndarray:
        return self.matrix[:, self.spec.block_slice(j)]


@dataclass(frozen=True, eq=False)
class HessianBlock:
    """d^2 Phi_k^(i) / dvec(V_q) dvec(V_j), shape (L_q L_{q+1}) x (L_j L_{j+1})."""
    output_index: int
    q: int
    j: int
    matrix: np.ndarray


def _check_index(name: str, value: int, upper: int) -> None:
    if not 0 <= value <= upper:
        raise IndexError(f"{name} = {value} out of range 0..{upper}")


def layer_jacobians(trace: ForwardTrace, params: Parameters, j: int) -> List[np.ndarray]:
    """Chain dPhi_l / dvec(V_j) for l = j..k.

    Returns:
        List whose entry ``l - j`` is the Jacobian of Phi_l
    """
    spec = trace.spec
    _check_index("j", j, spec.k)

    block = np.kron(np.eye(spec.widths[j + 1]), trace.phi[j][np.newaxis, :])
    chain = [block]
    for l in range(j + 1, spec.k + 1):
        block = params[l].T @ (trace.dphi[l][:, np.newaxis] * block)
        chain.append(block)
    return chain


def jacobian_block(trace: ForwardTrace, params: Parameters, w: int, j: int) -> JacobianBlock:
    """Jacobian of layer output Phi_w with respect to vec(V_j).

    Raises:
        IndexError: If ``w`` or ``j`` is outside 0..k
    """
    spec = trace.spec
    _check_index("w", w, spec.k)
    _check_index("j", j, spec.k)

    if j > w:
        return JacobianBlock(w, j, np.zeros((spec.widths[w + 1], spec.block_size(j))))

    block = np.kron(np.eye(spec.widths[j + 1]), trace.phi[j][np.newaxis, :])
    for l in range(j + 1, w + 1):
        block = params[l].T @ (trace.dphi[l][:, np.newaxis] * block)
    return JacobianBlock(w, j, block)


def full_jacobian(trace: ForwardTrace, params: Parameters) -> FullJacobian:
    """Concatenate the output Jacobian blocks for j = 0..k."""
    k = trace.spec.k
    blocks = [jacobian_block(trace, params, k, j).matrix for j in range(k + 1)]
    return FullJacobian(np.hstack(blocks), trace.spec)


def output_sensitivities(trace: ForwardTrace, params: Parameters, i: int) -> List[np.ndarray]:
    """Rows r_m = e_i^T dPhi_k / dPhi_m for m = 0..k.

    r_k = e_i and r_m = (r_{m+1} V_{m+1}^T) * phi'_{m+1}.
    """
    spec = trace.spec
    _check_index("output index", i, spec.output_dim - 1)

    rows = [None] * (spec.k + 1)
    row = np.zeros(spec.output_dim)
    row[i] = 1.0
    rows[spec.k] = row
    for m in range(spec.k - 1, -1, -1):
        row = (row @ params[m + 1].T) * trace.dphi[m + 1]
        rows[m] = row
    return rows


def hessian_block_analytic(trace: ForwardTrace, params: Parameters,
                           i: int, q: int, j: int) -> HessianBlock:
    """Exact Hessian block of output element ``i`` for weight layers (q, j).

    For q >= j the block is

        sum_{l=q+1}^{k} J_{l-1,q}^T diag((r_l V_l^T) * phi_l'') J_{l-1,j}
        + [q > j] r_q^T kron (diag(phi_q') J_{q-1,j})

    where J_{l,j} = dPhi_l/dvec(V_j) and r_l = e_i^T dPhi_k/dPhi_l. For
    q < j the (j, q) block is computed and transposed.

    Raises:
        IndexError: If an index is out of range
    """
    spec = trace.spec
    _check_index("q", q, spec.k)
    _check_index("j", j, spec.k)
    _check_index("output index", i, spec.output_dim - 1)

    if q < j:
        mirrored = hessian_block_analytic(trace, params, i, j, q)
        return HessianBlock(i, q, j, mirrored.matrix.T)

    jac_q = layer_jacobians(trace, params, q)
    jac_j = layer_jacobians(trace, params, j)
    rows = output_sensitivities(trace, params, i)

    block = np.zeros((spec.block_size(q), spec.block_size(j)))

    # second-derivative terms, one per activation layer above V_q
    for l in range(q + 1, spec.k + 1):
        weights = (rows[l] @ params[l].T) * trace.ddphi[l]
        block += jac_q[l - 1 - q].T @ (weights[:, np.newaxis] * jac_j[l - 1 - j])

    # mixed term: V_q appears explicitly in dPhi_k/dvec(V_j)
    if q > j:
        inner = trace.dphi[q][:, np.newaxis] * jac_j[q - 1 - j]
        block += np.kron(rows[q][:, np.newaxis], inner)

    return HessianBlock(i, q, j, block)


def full_hessian(trace: ForwardTrace, params: Parameters, i: int) -> np.ndarray:
    """Assemble the p x p Hessian of output ``i`` in flatten order."""
    spec = trace.spec
    size = spec.num_parameters
    hessian = np.zeros((size, size))
    for q in range(spec.k + 1):
        for j in range(spec.k + 1):
            block = hessian_block_analytic(trace, params, i, q, j).matrix
            hessian[spec.block_slice(q), spec.block_slice(j)] = block
    return hessian


def _warn_small_step(h: float) -> None:
    if h < MIN_FD_STEP:
        message = f"Finite-difference step {h:g} is below {MIN_FD_STEP:g}; cancellation will dominate"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=3)


def fd_jacobian(spec: NetworkSpec, params: Parameters, sigma: Sequence[float],
                h: float = JACOBIAN_FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of the output over theta.

    Entry r uses the step h * max(1, |theta_r|); truncation error is O(h^2).
    """
    if h <= 0:
        raise ValueError(f"Step must be positive, got {h}")
    _warn_small_step(h)

    theta = flatten(params)
    jac = np.zeros((spec.output_dim, theta.size))
    for r in range(theta.size):
        step = h * max(1.0, abs(theta[r]))
        plus = theta.copy()
        minus = theta.copy()
        plus[r] += step
        minus[r] -= step
        f_plus = network_output(spec, unflatten(plus, spec), sigma)
        f_minus = network_output(spec, unflatten(minus, spec), sigma)
        jac[:, r] = (f_plus - f_minus) / (2.0 * step)
    return jac


def fd_hessian_block(spec: NetworkSpec, params: Parameters, sigma: Sequence[float],
                     i: int, q: int, j: int, h: float = HESSIAN_FD_STEP) -> np.ndarray:
    """Second-order central-difference estimate of a Hessian block.

    Uses the four-point stencil
    [f(+a,+b) - f(+a,-b) - f(-a,+b) + f(-a,-b)] / (4 h_a h_b),
    which is O(h^2) accurate for both mixed and diagonal entries.
    """
    if h <= 0:
        raise ValueError(f"Step must be positive, got {h}")
    _check_index("q", q, spec.k)
    _check_index("j", j, spec.k)
    _check_index("output index", i, spec.output_dim - 1)
    _warn_small_step(h)

    theta = flatten(params)
    rows_idx = np.arange(theta.size)[spec.block_slice(q)]
    cols_idx = np.arange(theta.size)[spec.block_slice(j)]

    def evaluate(point: np.ndarray) -> float:
        return float(network_output(spec, unflatten(point, spec), sigma)[i])

    block = np.zeros((rows_idx.size, cols_idx.size))
    for ra, a in enumerate(rows_idx):
        step_a = h * max(1.0, abs(theta[a]))
        for cb, b in enumerate(cols_idx):
            step_b = h * max(1.0, abs(theta[b]))
            total = 0.0
            for sign_a, sign_b, weight in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
                point = theta.copy()
                point[a] += sign_a * step_a
                point[b] += sign_b * step_b
                total += weight * evaluate(point)
            block[ra, cb] = total / (4.0 * step_a * step_b)
    return block
