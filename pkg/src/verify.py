"""Randomized certification campaigns for the network bounds.

A campaign samples admissible parameters (every ||V_j|| <= theta_bar) and
inputs of prescribed norm, computes the exact quantities and compares them
with the norm-resolved and uniform bounds. Every (check, sample id) pair
draws from its own Philox stream, so samples can be evaluated in any order
or in worker processes and the merged report is still identical.
"""

import logging
import multiprocessing as mp
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from bounds import (
    BoundContext,
    QuadraticPolynomial,
    activation_output_bound,
    full_jacobian_bound,
    hessian_block_bound,
    hessian_sum_bound,
    jacobian_block_bound,
    layer_output_bound,
    remainder_bound,
    rho0,
    spectral_norm,
)
from config import CHECK_ORDER, CampaignConfig, Check
from derivatives import full_jacobian, hessian_block_analytic, jacobian_block
from network import NetworkSpec, Parameters, flatten, forward, network_output, unflatten


logger = logging.getLogger(__name__)

TOL_REL = 1e-12
TOL_ABS = 1e-12
SWEEP_SCALES: Tuple[float, ...] = (1.0, 0.5, 0.25, 0.125, 0.0625)
SWEEP_COARSE = 0.125
SWEEP_FINE = 0.0625
# ||R_s||/s^2 is in its quadratic regime when it moves by less than this
SWEEP_CHANGE_LIMIT = 0.25
# share of samples that must be in that regime at the coarse scale
SWEEP_PASS_FRACTION = 0.9

# Record kinds in report order; each check emits one or more kinds.
RECORD_KINDS: Tuple[str, ...] = (
    "layer_output",
    "activation_output",
    "jacobian_block",
    "full_jacobian",
    "hessian_block",
    "remainder",
)


class CampaignError(RuntimeError):
    """Raised on an internal inconsistency; the message names the sample to replay."""
    pass


def tolerant_bound(bound: float) -> float:
    """Bound inflated by the rounding allowance of a norm computation."""
    return bound * (1.0 + TOL_REL) + TOL_ABS


@dataclass(frozen=True)
class VerificationRecord:
    """One sampled comparison of an observed norm against its bounds.

    Indices that do not apply to a record kind are None.
    """
    check: str
    sample_id: int
    output_index: Optional[int]
    w: Optional[int]
    q: Optional[int]
    j: Optional[int]
    observed: float
    bound_norm_resolved: float
    bound_uniform: float

    def __post_init__(self):
        for name in ("observed", "bound_norm_resolved", "bound_uniform"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise CampaignError(
                    f"{self.check} sample {self.sample_id}: {name} = {value} is not a finite nonnegative value")

    @property
    def margin(self) -> float:
        """Tolerant margin against the norm-resolved bound; negative means violated."""
        return tolerant_bound(self.bound_norm_resolved) - self.observed

    @property
    def uniform_margin(self) -> float:
        return tolerant_bound(self.bound_uniform) - self.observed

    @property
    def violated(self) -> bool:
        return self.margin < 0 or self.uniform_margin < 0

    def sort_key(self) -> Tuple[int, int, int, int, int, int]:
        def index(value):
            return -1 if value is None else value
        return (RECORD_KINDS.index(self.check), self.sample_id, index(self.output_index),
                index(self.w), index(self.q), index(self.j))


@dataclass(frozen=True, eq=False)
class RemainderSample:
    """One first-order Taylor remainder experiment.

    Attributes:
        sample_id: Sample index inside the campaign
        theta_star, theta_hat: Admissible parameter vectors
        sigma: Input
        remainder: R = Phi(theta*) - Phi(theta_hat) - J(theta_hat) theta_tilde
        bound_uniform: rho_0(||sigma||) ||theta_tilde||^2
        bound_norm_resolved: Same sum with nu_l = max(||V_l*||, ||V_l_hat||) and exact ||sigma_a||
        sweep: (s, ||R_s|| / s^2) for theta_hat + s * theta_tilde
        second_order_limit: 1/2 ||[theta_tilde^T H_i(theta_hat) theta_tilde]_i||
    """
    sample_id: int
    theta_star: np.ndarray
    theta_hat: np.ndarray
    sigma: np.ndarray
    remainder: np.ndarray
    bound_uniform: float
    bound_norm_resolved: float
    sweep: Tuple[Tuple[float, float], ...]
    second_order_limit: float

    @property
    def theta_tilde(self) -> np.ndarray:
        return self.theta_star - self.theta_hat

    @property
    def observed(self) -> float:
        return float(np.linalg.norm(self.remainder))

    def sweep_ratio(self, scale: float) -> float:
        for s, ratio in self.sweep:
            if s == scale:
                return ratio
        raise KeyError(f"Scale {scale} not in sweep")

    def to_record(self) -> VerificationRecord:
        return VerificationRecord(
            check="remainder",
            sample_id=self.sample_id,
            output_index=None, w=None, q=None, j=None,
            observed=self.observed,
            bound_norm_resolved=self.bound_norm_resolved,
            bound_uniform=self.bound_uniform,
        )


@dataclass(frozen=True)
class CheckSummary:
    """Aggregates of one record kind."""
    kind: str
    records: int
    samples: int
    violations: int
    min_margin: float
    median_margin: float


@dataclass(frozen=True)
class SweepSummary:
    """Distribution of the ||R_s||/s^2 changes between s=1/8 and s=1/16.

    Large ||theta_star - theta_hat|| puts a sample outside the quadratic
    regime at s=1/8, so the sweep holds for a campaign when at least
    SWEEP_PASS_FRACTION of its samples move by less than SWEEP_CHANGE_LIMIT.
    """
    samples: int
    within_limit: int
    median_change: float
    max_change: float

    @property
    def fraction_within_limit(self) -> float:
        return self.within_limit / self.samples

    @property
    def holds(self) -> bool:
        return self.fraction_within_limit >= SWEEP_PASS_FRACTION


@dataclass(frozen=True, eq=False)
class CampaignReport:
    """Result of :func:`run_campaign`."""
    config: CampaignConfig
    records: Tuple[VerificationRecord, ...]
    summaries: Tuple[CheckSummary, ...]
    remainder_samples: Tuple[RemainderSample, ...]
    wall_time: float

    @property
    def violations(self) -> int:
        return sum(summary.violations for summary in self.summaries)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def sweep_changes(self, coarse: float = SWEEP_COARSE, fine: float = SWEEP_FINE) -> List[float]:
        """Relative change of ||R_s||/s^2 between two sweep scales, per sample.

        Samples with a zero remainder at both scales are skipped.
        """
        changes = []
        for sample in self.remainder_samples:
            a, b = sample.sweep_ratio(coarse), sample.sweep_ratio(fine)
            if max(a, b) > 0:
                changes.append(abs(a - b) / max(a, b))
        return changes

    def max_sweep_change(self, coarse: float = SWEEP_COARSE, fine: float = SWEEP_FINE) -> Optional[float]:
        changes = self.sweep_changes(coarse, fine)
        return max(changes) if changes else None

    def sweep_summary(self) -> Optional[SweepSummary]:
        changes = self.sweep_changes()
        if not changes:
            return None
        return SweepSummary(
            samples=len(changes),
            within_limit=sum(change < SWEEP_CHANGE_LIMIT for change in changes),
            median_change=float(np.median(changes)),
            max_change=max(changes),
        )


def sample_rng(seed: int, check: Check, sample_id: int) -> np.random.Generator:
    """Philox stream dedicated to one (seed, check, sample id)."""
    entropy = np.random.SeedSequence([seed, CHECK_ORDER.index(check), sample_id])
    return np.random.Generator(np.random.Philox(entropy))


def sample_params(spec: NetworkSpec, theta_bar: float, rng: np.random.Generator) -> Parameters:
    """Draw parameters with ||V_j|| = u * theta_bar, u uniform on (0, 1].

    Each V_j starts with standard-normal entries and is rescaled to its drawn
    spectral norm.
    """
    if not theta_bar > 0:
        raise ValueError(f"theta_bar must be positive, got {theta_bar}")
    matrices = []
    for j in range(spec.k + 1):
        gaussian = rng.standard_normal(spec.block_shape(j))
        norm = np.linalg.norm(gaussian, 2)
        while norm == 0.0:
            gaussian = rng.standard_normal(spec.block_shape(j))
            norm = np.linalg.norm(gaussian, 2)
        radius = (1.0 - rng.random()) * theta_bar
        matrices.append(gaussian * (radius / norm))
    return Parameters(tuple(matrices))


def sample_input(spec: NetworkSpec, norm: float, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal direction rescaled to ``norm``."""
    direction = rng.standard_normal(spec.input_dim)
    length = np.linalg.norm(direction)
    if norm == 0.0 or length == 0.0:
        return np.zeros(spec.input_dim)
    return direction * (norm / length)


def layer_records(spec: NetworkSpec, params: Parameters, sigma: Sequence[float],
                  theta_bar: float, sample_id: int = 0,
                  bound_scale: float = 1.0) -> List[VerificationRecord]:
    """||Phi_j|| and ||phi_j(Phi_{j-1})|| against their bounds."""
    trace = forward(spec, params, sigma)
    resolved = BoundContext.from_network(spec, params, sigma, theta_bar)
    uniform = resolved.as_uniform()

    records = []
    for j in range(spec.k + 1):
        records.append(VerificationRecord(
            "layer_output", sample_id, None, j, None, None,
            observed=float(np.linalg.norm(trace.pre[j])),
            bound_norm_resolved=bound_scale * layer_output_bound(j, resolved),
            bound_uniform=bound_scale * layer_output_bound(j, uniform),
        ))
    for j in range(1, spec.k + 1):
        records.append(VerificationRecord(
            "activation_output", sample_id, None, None, None, j,
            observed=float(np.linalg.norm(trace.phi[j])),
            bound_norm_resolved=bound_scale * activation_output_bound(j, resolved),
            bound_uniform=bound_scale * activation_output_bound(j, uniform),
        ))
    return records


def jacobian_records(spec: NetworkSpec, params: Parameters, sigma: Sequence[float],
                     theta_bar: float, sample_id: int = 0,
                     bound_scale: float = 1.0) -> List[VerificationRecord]:
    """Output Jacobian blocks and the full Jacobian against their bounds."""
    trace = forward(spec, params, sigma)
    resolved = BoundContext.from_network(spec, params, sigma, theta_bar)
    uniform = resolved.as_uniform()
    k = spec.k

    records = []
    for j in range(k + 1):
        block = jacobian_block(trace, params, k, j)
        records.append(VerificationRecord(
            "jacobian_block", sample_id, None, k, None, j,
            observed=spectral_norm(block.matrix),
            bound_norm_resolved=bound_scale * jacobian_block_bound(k, j, resolved),
            bound_uniform=bound_scale * jacobian_block_bound(k, j, uniform),
        ))
    records.append(VerificationRecord(
        "full_jacobian", sample_id, None, k, None, None,
        observed=spectral_norm(full_jacobian(trace, params).matrix),
        bound_norm_resolved=bound_scale * full_jacobian_bound(resolved),
        bound_uniform=bound_scale * full_jacobian_bound(uniform),
    ))
    return records


def hessian_records(spec: NetworkSpec, params: Parameters, sigma: Sequence[float],
                    theta_bar: float, sample_id: int = 0,
                    bound_scale: float = 1.0) -> List[VerificationRecord]:
    """Every output Hessian block against its bound.

    The (q, j) and (j, q) blocks are transposes, so one norm serves both records.
    """
    trace = forward(spec, params, sigma)
    resolved = BoundContext.from_network(spec, params, sigma, theta_bar)
    uniform = resolved.as_uniform()
    k = spec.k

    records = []
    for i in range(spec.output_dim):
        for q in range(k + 1):
            for j in range(q + 1):
                observed = spectral_norm(hessian_block_analytic(trace, params, i, q, j).matrix)
                resolved_bound = bound_scale * hessian_block_bound(k, q, j, resolved)
                uniform_bound = bound_scale * hessian_block_bound(k, q, j, uniform)
                pairs = [(q, j)] if q == j else [(q, j), (j, q)]
                for qq, jj in pairs:
                    records.append(VerificationRecord(
                        "hessian_block", sample_id, i, k, qq, jj,
                        observed=observed,
                        bound_norm_resolved=resolved_bound,
                        bound_uniform=uniform_bound,
                    ))
    return records


@lru_cache(maxsize=32)
def uniform_rho0(spec: NetworkSpec, theta_bar: float) -> QuadraticPolynomial:
    """rho_0 of the admissible set {||V_j|| <= theta_bar}."""
    return rho0(BoundContext.uniform(spec, theta_bar, 1.0))


def _second_order_term(trace, params: Parameters, theta_tilde: np.ndarray) -> np.ndarray:
    """[1/2 theta_tilde^T H_i theta_tilde]_i assembled block by block."""
    spec = trace.spec
    pieces = [theta_tilde[spec.block_slice(j)] for j in range(spec.k + 1)]
    values = np.zeros(spec.output_dim)
    for i in range(spec.output_dim):
        total = 0.0
        for q in range(spec.k + 1):
            for j in range(spec.k + 1):
                block = hessian_block_analytic(trace, params, i, q, j).matrix
                total += pieces[q] @ block @ pieces[j]
        values[i] = 0.5 * total
    return values


def remainder_sample(spec: NetworkSpec, theta_star: np.ndarray, theta_hat: np.ndarray,
                     sigma: Sequence[float], theta_bar: float, sample_id: int = 0,
                     bound_scale: float = 1.0) -> RemainderSample:
    """Evaluate the first-order Taylor remainder between two admissible points.

    Raises:
        CampaignError: If a sweep point leaves the admissible set
    """
    theta_star = np.asarray(theta_star, dtype=np.float64)
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    params_star = unflatten(theta_star, spec)
    params_hat = unflatten(theta_hat, spec)
    theta_tilde = theta_star - theta_hat
    tilde_norm = float(np.linalg.norm(theta_tilde))

    trace_hat = forward(spec, params_hat, sigma)
    jac = full_jacobian(trace_hat, params_hat).matrix
    linear = jac @ theta_tilde
    base = trace_hat.output

    remainder = network_output(spec, params_star, sigma) - base - linear

    sweep = []
    for s in SWEEP_SCALES:
        params_s = unflatten(theta_hat + s * theta_tilde, spec)
        for j, matrix in enumerate(params_s.matrices):
            if np.linalg.norm(matrix, 2) > theta_bar * (1.0 + 1e-9):
                raise CampaignError(
                    f"remainder sample {sample_id}: sweep point s={s} left the admissible set at V_{j}")
        r_s = network_output(spec, params_s, sigma) - base - s * linear
        sweep.append((s, float(np.linalg.norm(r_s)) / (s * s)))

    segment_norms = [max(spectral_norm(a), spectral_norm(b))
                     for a, b in zip(params_star.matrices, params_hat.matrices)]
    segment_ctx = BoundContext.from_constants(
        spec, segment_norms, float(np.linalg.norm(trace_hat.sigma_a)), theta_bar)

    return RemainderSample(
        sample_id=sample_id,
        theta_star=theta_star,
        theta_hat=theta_hat,
        sigma=sigma,
        remainder=remainder,
        bound_uniform=bound_scale * remainder_bound(
            uniform_rho0(spec, theta_bar), float(np.linalg.norm(sigma)), tilde_norm),
        bound_norm_resolved=bound_scale * hessian_sum_bound(segment_ctx) * tilde_norm ** 2,
        sweep=tuple(sweep),
        second_order_limit=float(np.linalg.norm(_second_order_term(trace_hat, params_hat, theta_tilde))),
    )


def _draw(config: CampaignConfig, check: Check, sample_id: int):
    rng = sample_rng(config.seed, check, sample_id)
    norm = config.input_norms[sample_id % len(config.input_norms)]
    params = sample_params(config.spec, config.theta_bar, rng)
    sigma = sample_input(config.spec, norm, rng)
    return rng, params, sigma


def _layer_sample(config: CampaignConfig, sample_id: int) -> List[VerificationRecord]:
    _, params, sigma = _draw(config, Check.LAYERS, sample_id)
    return layer_records(config.spec, params, sigma, config.theta_bar, sample_id, config.bound_scale)


def _jacobian_sample(config: CampaignConfig, sample_id: int) -> List[VerificationRecord]:
    _, params, sigma = _draw(config, Check.JACOBIAN, sample_id)
    return jacobian_records(config.spec, params, sigma, config.theta_bar, sample_id, config.bound_scale)


def _hessian_sample(config: CampaignConfig, sample_id: int) -> List[VerificationRecord]:
    _, params, sigma = _draw(config, Check.HESSIAN, sample_id)
    return hessian_records(config.spec, params, sigma, config.theta_bar, sample_id, config.bound_scale)


def _remainder_sample(config: CampaignConfig, sample_id: int) -> RemainderSample:
    rng, params_hat, sigma = _draw(config, Check.REMAINDER, sample_id)
    params_star = sample_params(config.spec, config.theta_bar, rng)
    return remainder_sample(config.spec, flatten(params_star), flatten(params_hat), sigma,
                            config.theta_bar, sample_id, config.bound_scale)


_SAMPLERS: Dict[Check, Callable] = {
    Check.LAYERS: _layer_sample,
    Check.JACOBIAN: _jacobian_sample,
    Check.HESSIAN: _hessian_sample,
    Check.REMAINDER: _remainder_sample,
}


def _evaluate(config: CampaignConfig, check: Check, sample_id: int):
    """Run one sample of one check; top-level so worker processes can pickle it."""
    try:
        return _SAMPLERS[check](config, sample_id)
    except CampaignError:
        raise
    except (ValueError, IndexError, ArithmeticError) as e:
        raise CampaignError(f"{check.value} sample {sample_id} (seed {config.seed}): {e}") from e


def _map_samples(config: CampaignConfig, check: Check) -> list:
    tasks = [(config, check, sample_id) for sample_id in range(config.samples)]
    logger.debug("Running %s check: %d samples on %d worker(s)", check.value, config.samples, config.workers)
    if config.workers > 1:
        with mp.Pool(config.workers) as pool:
            return pool.starmap(_evaluate, tasks)
    return [_evaluate(*task) for task in tasks]


def verify_layer_bounds(config: CampaignConfig) -> List[VerificationRecord]:
    return [record for chunk in _map_samples(config, Check.LAYERS) for record in chunk]


def verify_jacobian_bounds(config: CampaignConfig) -> List[VerificationRecord]:
    return [record for chunk in _map_samples(config, Check.JACOBIAN) for record in chunk]


def verify_hessian_bounds(config: CampaignConfig) -> List[VerificationRecord]:
    return [record for chunk in _map_samples(config, Check.HESSIAN) for record in chunk]


def verify_remainder(config: CampaignConfig) -> List[RemainderSample]:
    return _map_samples(config, Check.REMAINDER)


def summarize(records: Sequence[VerificationRecord]) -> Tuple[CheckSummary, ...]:
    """Per-kind violation counts and margins, in report order."""
    summaries = []
    for kind in RECORD_KINDS:
        selected = [record for record in records if record.check == kind]
        if not selected:
            continue
        margins = [record.margin for record in selected]
        summaries.append(CheckSummary(
            kind=kind,
            records=len(selected),
            samples=len({record.sample_id for record in selected}),
            violations=sum(record.violated for record in selected),
            min_margin=min(margins),
            median_margin=float(np.median(margins)),
        ))
    return tuple(summaries)


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Run every configured check and aggregate the records.

    The records are sorted by (kind, sample id, indices), so the report only
    depends on the config.
    """
    start = time.perf_counter()
    records: List[VerificationRecord] = []
    remainder_samples: List[RemainderSample] = []

    for check in config.checks:
        if check is Check.LAYERS:
            records.extend(verify_layer_bounds(config))
        elif check is Check.JACOBIAN:
            records.extend(verify_jacobian_bounds(config))
        elif check is Check.HESSIAN:
            records.extend(verify_hessian_bounds(config))
        elif check is Check.REMAINDER:
            remainder_samples = verify_remainder(config)
            records.extend(sample.to_record() for sample in remainder_samples)

    records.sort(key=VerificationRecord.sort_key)
    summaries = summarize(records)
    report = CampaignReport(
        config=config,
        records=tuple(records),
        summaries=summaries,
        remainder_samples=tuple(remainder_samples),
        wall_time=time.perf_counter() - start,
    )
    logger.info("Campaign finished: %d records, %d violations, %.2fs",
                len(report.records), report.violations, report.wall_time)
    return report
