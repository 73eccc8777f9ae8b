"""Closed-form bounds on layer outputs, Jacobians, Hessian blocks and the
first-order Taylor remainder of a fully-connected network.

All matrix norms are spectral norms. Every bound is evaluated from a
:class:`BoundContext` holding the activation constants, the per-layer weight
norms nu_j = ||V_j|| and s = ||sigma_a||. The uniform forms substitute theta_bar
for every nu_j (see :meth:`BoundContext.as_uniform`). Empty products are 1,
empty sums are 0 and 0**0 = 1 throughout.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import svdvals

from activations import layer_constants
from network import NetworkSpec, Parameters, augment


logger = logging.getLogger(__name__)

POWER_ITERATION_TOL = 1e-12
POWER_ITERATION_MAX_ITER = 10_000
POWER_ITERATION_SEED = 0
# changes of lam within this many ulps are rounding noise
POWER_ITERATION_NOISE_ULPS = 8
POWER_ITERATION_SETTLE = 3


@dataclass(frozen=True)
class SpectralEstimate:
    """Result of a power iteration.

    Attributes:
        value: Estimated largest singular value
        iterations: Iterations used
        converged: False if the tolerance was not certified (degraded precision)
    """
    value: float
    iterations: int
    converged: bool


def power_iteration(matrix: np.ndarray, tol: float = POWER_ITERATION_TOL,
                    max_iter: int = POWER_ITERATION_MAX_ITER) -> SpectralEstimate:
    """Largest singular value via power iteration on M^T M.

    The start vector is drawn from a fixed seed, so results are
    deterministic. The Rayleigh quotient lam approaches the top eigenvalue
    geometrically: with successive changes d_prev > d and rate r = d / d_prev
    the remaining relative change is about d * r / (1 - r). The estimate is
    converged once that is below ``tol * lam`` on POWER_ITERATION_SETTLE
    consecutive iterations.

    Nearly equal top singular values contract too slowly for that. The
    iteration gives up early, flagged as not converged, when the projected
    change cannot reach ``tol`` within ``max_iter`` or when lam stops moving
    by more than rounding noise.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"Expected a matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Matrix has non-finite entries")
    if matrix.size == 0 or not np.any(matrix):
        return SpectralEstimate(0.0, 0, True)

    # unit max entry keeps M^T M finite
    scale = float(np.max(np.abs(matrix)))
    unit = matrix / scale
    gram = unit.T @ unit
    x = np.random.default_rng(POWER_ITERATION_SEED).normal(size=gram.shape[0])
    x /= np.linalg.norm(x)

    lam = 0.0
    lam_prev: Optional[float] = None
    delta_prev: Optional[float] = None
    settled = 0
    iteration = 0
    y = gram @ x
    for iteration in range(1, max_iter + 1):
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            # start vector in the null space; restart along the largest column
            x = gram[:, int(np.argmax(np.linalg.norm(gram, axis=0)))].copy()
            x /= np.linalg.norm(x)
            y = gram @ x
            lam_prev = delta_prev = None
            settled = 0
            continue
        x = y / y_norm
        y = gram @ x
        lam = float(x @ y)
        if lam_prev is not None:
            delta = abs(lam - lam_prev)
            if delta <= POWER_ITERATION_NOISE_ULPS * np.spacing(lam):
                break
            if delta_prev is not None and delta < delta_prev:
                rate = delta / delta_prev
                remaining = delta * rate / (1.0 - rate)
                if remaining <= tol * lam:
                    settled += 1
                    if settled == POWER_ITERATION_SETTLE:
                        return SpectralEstimate(scale * float(np.sqrt(lam)), iteration, True)
                else:
                    settled = 0
                    if remaining * rate ** (max_iter - iteration) > tol * lam:
                        break
            else:
                settled = 0
            delta_prev = delta
        lam_prev = lam

    return SpectralEstimate(scale * float(np.sqrt(max(lam, 0.0))), iteration, False)


def spectral_norm(matrix: np.ndarray) -> float:
    """Spectral norm (largest singular value) of ``matrix``.

    Falls back to a dense SVD when the power iteration does not converge.
    """
    estimate = power_iteration(matrix)
    if estimate.converged:
        return estimate.value
    exact = float(svdvals(np.asarray(matrix, dtype=np.float64))[0])
    logger.debug("Power iteration not converged after %d iterations (estimate %.17g); using SVD value %.17g",
                 estimate.iterations, estimate.value, exact)
    return exact


@dataclass(frozen=True)
class BoundContext:
    """Inputs shared by all bound calculators.

    Attributes:
        a1, a0, b0, c0: Activation constants, maximized over the hidden layers
        norms: Per-layer weight norms nu_0..nu_k
        sigma_a_norm: s = ||sigma_a|| (>= 1)
        output_dim: L_out
        theta_bar: Admissible per-layer radius, if known
    """
    a1: float
    a0: float
    b0: float
    c0: float
    norms: Tuple[float, ...]
    sigma_a_norm: float
    output_dim: int
    theta_bar: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "norms", tuple(float(n) for n in self.norms))
        if not self.norms:
            raise ValueError("BoundContext needs at least one layer norm")
        if any(n < 0 for n in self.norms):
            raise ValueError(f"Layer norms must be nonnegative, got {self.norms}")
        if min(self.a1, self.a0, self.b0, self.c0) < 0:
            raise ValueError("Activation constants must be nonnegative")
        if self.sigma_a_norm < 1.0:
            raise ValueError(f"||sigma_a|| must be at least 1, got {self.sigma_a_norm}")
        if self.theta_bar is not None:
            if self.theta_bar <= 0:
                raise ValueError(f"theta_bar must be positive, got {self.theta_bar}")
            if max(self.norms) > self.theta_bar * (1.0 + 1e-9):
                raise ValueError(
                    f"Layer norm {max(self.norms):.6g} exceeds theta_bar {self.theta_bar:.6g}")

    @property
    def k(self) -> int:
        return len(self.norms) - 1

    @classmethod
    def from_constants(cls, spec: NetworkSpec, norms: Sequence[float], sigma_a_norm: float,
                       theta_bar: Optional[float] = None) -> "BoundContext":
        """Context with constants taken as the max over the hidden widths of ``spec``."""
        per_layer = [layer_constants(spec.activation, width) for width in spec.hidden_widths]
        return cls(
            a1=max(c.a1 for c in per_layer),
            a0=max(c.a0 for c in per_layer),
            b0=max(c.b0 for c in per_layer),
            c0=max(c.c0 for c in per_layer),
            norms=tuple(norms),
            sigma_a_norm=float(sigma_a_norm),
            output_dim=spec.output_dim,
            theta_bar=theta_bar,
        )

    @classmethod
    def from_network(cls, spec: NetworkSpec, params: Parameters, sigma: Sequence[float],
                     theta_bar: Optional[float] = None) -> "BoundContext":
        """Norm-resolved context for concrete parameters and input."""
        params.check_against(spec)
        norms = [spectral_norm(matrix) for matrix in params.matrices]
        return cls.from_constants(spec, norms, float(np.linalg.norm(augment(sigma))), theta_bar)

    @classmethod
    def uniform(cls, spec: NetworkSpec, theta_bar: float, sigma_a_norm: float) -> "BoundContext":
        """Context with nu_j = theta_bar for every layer."""
        return cls.from_constants(spec, [theta_bar] * (spec.k + 1), sigma_a_norm, theta_bar)

    def as_uniform(self) -> "BoundContext":
        """Same context with every nu_j replaced by theta_bar."""
        if self.theta_bar is None:
            raise ValueError("Context has no theta_bar to substitute")
        return replace(self, norms=(self.theta_bar,) * len(self.norms))

    def with_sigma_a_norm(self, sigma_a_norm: float) -> "BoundContext":
        return replace(self, sigma_a_norm=float(sigma_a_norm))

    def norm_product(self, first: int, last: int) -> float:
        """prod_{l=first}^{last} nu_l (1 when first > last)."""
        return float(np.prod(self.norms[first:last + 1])) if first <= last else 1.0


@dataclass(frozen=True)
class QuadraticPolynomial:
    """rho_0(x) = a2 x^2 + a1 x + a0 in x = ||sigma||."""
    a2: float
    a1: float
    a0: float

    def __call__(self, x: float) -> float:
        return self.a2 * x * x + self.a1 * x + self.a0

    def coefficients(self) -> Tuple[float, float, float]:
        """(a2, a1, a0)."""
        return self.a2, self.a1, self.a0


@dataclass(frozen=True)
class QTRFactors:
    """Factors of a Hessian block bound.

    Attributes:
        Q_j, Q_q: Activation-output bounds (Q_0 = s)
        T: Reference mixed-term factor b0^(w-j+1) prod_{l=j+1}^{w} nu_l (not used by the bound)
        R: Second-derivative chain factor
        mixed: Mixed-term factor used by the bound, b0^(w-j) prod_{l=j+1,l!=q}^{w} nu_l
            for q > j and 0 for q = j
    """
    Q_j: float
    Q_q: float
    T: float
    R: float
    mixed: float


def _check_layer(name: str, value: int, ctx: BoundContext, lower: int = 0) -> None:
    if not lower <= value <= ctx.k:
        raise IndexError(f"{name} = {value} out of range {lower}..{ctx.k}")


def _q_affine(j: int, ctx: BoundContext) -> Tuple[float, float]:
    """Q_j = alpha * s + beta; returns (alpha, beta)."""
    if j == 0:
        return 1.0, 0.0
    alpha = ctx.a1 ** j * ctx.norm_product(0, j - 1)
    beta = ctx.a0 * sum(ctx.a1 ** (j - i) * ctx.norm_product(i, j - 1) for i in range(1, j)) + ctx.a0
    return alpha, beta


def q_factor(j: int, ctx: BoundContext) -> float:
    """Q_j: ||sigma_a|| for j = 0, the activation-output bound otherwise."""
    _check_layer("j", j, ctx)
    alpha, beta = _q_affine(j, ctx)
    return alpha * ctx.sigma_a_norm + beta


def layer_output_bound(j: int, ctx: BoundContext) -> float:
    """Bound on ||Phi_j||.

    a1^j s prod_{i=0}^{j} nu_i + a0 sum_{i=1}^{j} a1^(j-i) prod_{l=i}^{j} nu_l
    """
    _check_layer("j", j, ctx)
    head = ctx.a1 ** j * ctx.sigma_a_norm * ctx.norm_product(0, j)
    tail = sum(ctx.a1 ** (j - i) * ctx.norm_product(i, j) for i in range(1, j + 1))
    return head + ctx.a0 * tail


def activation_output_bound(j: int, ctx: BoundContext) -> float:
    """Bound on ||phi_j(Phi_{j-1})|| for j >= 1; equals Q_j."""
    _check_layer("j", j, ctx, lower=1)
    return q_factor(j, ctx)


def jacobian_block_bound(w: int, j: int, ctx: BoundContext) -> float:
    """Bound on ||dPhi_w / dvec(V_j)||: b0^(w-j) prod_{l=j+1}^{w} nu_l Q_j, or 0 if j > w."""
    _check_layer("w", w, ctx)
    _check_layer("j", j, ctx)
    if j > w:
        return 0.0
    return ctx.b0 ** (w - j) * ctx.norm_product(j + 1, w) * q_factor(j, ctx)


def full_jacobian_bound(ctx: BoundContext) -> float:
    """Triangle-inequality sum of the output Jacobian block bounds."""
    return sum(jacobian_block_bound(ctx.k, j, ctx) for j in range(ctx.k + 1))


def qtr_factors(w: int, q: int, j: int, ctx: BoundContext) -> QTRFactors:
    """Q, T, R and mixed-term factors of a Hessian block bound.

    The pair is normalized so that q >= j before evaluation.

    Raises:
        IndexError: Unless j, q <= w <= k
    """
    _check_layer("w", w, ctx)
    _check_layer("q", q, ctx)
    _check_layer("j", j, ctx)
    if q > w or j > w:
        raise IndexError(f"Need j, q <= w, got w={w}, q={q}, j={j}")
    if q < j:
        q, j = j, q

    b0, c0 = ctx.b0, ctx.c0
    outer = ctx.norm_product(j + 1, w)
    chain = sum(c0 * b0 ** (2 * w - q - j - h - 1) * ctx.norm_product(q + 1, w - h)
                for h in range(1, w - q + 1))
    if q > j:
        mixed = b0 ** (w - j) * ctx.norm_product(j + 1, q - 1) * ctx.norm_product(q + 1, w)
    else:
        mixed = 0.0

    return QTRFactors(
        Q_j=q_factor(j, ctx),
        Q_q=q_factor(q, ctx),
        T=b0 ** (w - j + 1) * outer,
        R=chain * outer,
        mixed=mixed,
    )


def hessian_block_bound(w: int, q: int, j: int, ctx: BoundContext) -> float:
    """Bound on ||d^2 Phi_w^(i) / dvec(V_q) dvec(V_j)|| for every output element i."""
    f = qtr_factors(w, q, j, ctx)
    return f.R * f.Q_j * f.Q_q + f.mixed * f.Q_j


def hessian_sum_bound(ctx: BoundContext) -> float:
    """1/2 * sum_i sum_q sum_j of the output Hessian block bounds."""
    k = ctx.k
    per_output = sum(hessian_block_bound(k, q, j, ctx)
                     for q in range(k + 1) for j in range(k + 1))
    return 0.5 * ctx.output_dim * per_output


def rho0(ctx: BoundContext) -> QuadraticPolynomial:
    """Expand the remainder coefficient into a quadratic in x = ||sigma||.

    The context is made uniform (nu_l = theta_bar) and each Q is rewritten with
    the envelope ||sigma_a|| <= x + 1, so Q = alpha x + (alpha + beta).
    """
    uniform = ctx.as_uniform()
    k = uniform.k
    q_polys = []
    for j in range(k + 1):
        alpha, beta = _q_affine(j, uniform)
        q_polys.append(Polynomial([alpha + beta, alpha]))

    total = Polynomial([0.0])
    for q in range(k + 1):
        for j in range(k + 1):
            f = qtr_factors(k, q, j, uniform)
            lo, hi = min(q, j), max(q, j)
            total = total + f.R * q_polys[lo] * q_polys[hi] + f.mixed * q_polys[lo]

    coef = np.zeros(3)
    raw = (0.5 * uniform.output_dim * total).coef
    coef[:raw.size] = raw
    return QuadraticPolynomial(a2=float(coef[2]), a1=float(coef[1]), a0=float(coef[0]))


def remainder_bound(poly: QuadraticPolynomial, sigma_norm: float, theta_tilde_norm: float) -> float:
    """rho_0(||sigma||) * ||theta_tilde||^2."""
    if sigma_norm < 0 or theta_tilde_norm < 0:
        raise ValueError("Norms must be nonnegative")
    return poly(sigma_norm) * theta_tilde_norm ** 2
