"""Falsification adaptive sets: relevance screening, interval assembly, the
population oracle, and the falsification frontier.

Three reporting modes share one engine. Excl keeps each instrument with all
others as controls, Exo keeps each instrument alone, General enumerates every
control partition. In each mode the reported interval is the span of the
just-identified estimates whose first-stage F clears the cutoff.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import Dataset
from .errors import (
    DegenerateInstrumentError,
    DimensionMismatchError,
    SingularSigmaError,
    ZeroFirstStageError,
)
from .estimators import SpecEstimate, failed_estimate, just_id_iv
from .linalg import partial_out
from .specs import (
    JustIdSpec,
    enumerate_specs,
    is_fully_controlled,
    is_marginal,
    transform_instrument,
)

# Relative tolerance for population-level "pi != 0" decisions.
POPULATION_RELEVANCE_TOL = 1e-12

# Guard band for declaring an intersection empty; rescues pure rounding noise
# while staying far below any substantive perturbation (see identified_set).
_EMPTY_SLACK = 1e-10

DEFAULT_CUTOFF = 10.0


class Mode(str, Enum):
    """FAS reporting mode."""

    EXCL = "excl"
    EXO = "exo"
    GENERAL = "general"


@dataclass(eq=False)
class RelevanceSelection:
    """Outcome of the first-stage relevance screen.

    Attributes
    ----------
    cutoff : float
        The F cutoff applied (or, for population results, the relative
        tolerance on the population first-stage coefficient).
    selected : set of int
        spec_ids that passed.
    rejected : dict
        spec_id -> reason, one of "low-F", "degenerate", "zero-first-stage".
    """

    cutoff: float
    selected: set[int] = field(default_factory=set)
    rejected: dict[int, str] = field(default_factory=dict)


@dataclass(eq=False)
class FasResult:
    """A FAS interval with its supporting evidence.

    ``interval`` is ``(lo, hi)`` with ``lo <= hi``, or None when every spec
    was rejected.
    """

    mode: Mode
    interval: tuple[float, float] | None
    selection: RelevanceSelection
    estimates: list[SpecEstimate]


@dataclass(eq=False)
class PopulationModel:
    """Population parameters of the linear IV model.

    y = x * beta + Z'gamma + U with cov(Z, U) = alpha, first stage
    x = Z'pi + V. ``sigma_z`` is the instrument covariance matrix;
    ``var_u`` and ``var_v`` are the structural and first-stage error
    variances used by the simulator.
    """

    beta: float
    gamma: np.ndarray
    alpha: np.ndarray
    pi: np.ndarray
    sigma_z: np.ndarray
    var_v: float = 1.0
    var_u: float = 1.0

    def __post_init__(self) -> None:
        self.gamma = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        self.pi = np.asarray(self.pi, dtype=np.float64).reshape(-1)
        self.sigma_z = np.atleast_2d(np.asarray(self.sigma_z, dtype=np.float64))
        k = self.pi.shape[0]
        if self.gamma.shape[0] != k or self.alpha.shape[0] != k:
            raise DimensionMismatchError(
                f"pi, gamma, alpha lengths disagree: "
                f"{k}, {self.gamma.shape[0]}, {self.alpha.shape[0]}"
            )
        if self.sigma_z.shape != (k, k):
            raise DimensionMismatchError(
                f"sigma_z has shape {self.sigma_z.shape}, expected ({k}, {k})"
            )

    @property
    def k_z(self) -> int:
        return self.pi.shape[0]

    def validate(self) -> None:
        """Check sigma_z is symmetric positive definite and variances positive.

        Raises SingularSigmaError when the smallest eigenvalue is at or
        below 1e-10 times the largest.
        """
        if not np.allclose(self.sigma_z, self.sigma_z.T, rtol=1e-8, atol=1e-12):
            raise SingularSigmaError("sigma_z is not symmetric")
        eigvals = np.linalg.eigvalsh(self.sigma_z)
        if eigvals[0] <= 1e-10 * eigvals[-1] or eigvals[-1] <= 0.0:
            raise SingularSigmaError(
                f"sigma_z is numerically singular (eigenvalues "
                f"{np.array2string(eigvals, precision=3)})"
            )
        if self.var_u <= 0.0 or self.var_v <= 0.0:
            raise SingularSigmaError(
                f"error variances must be positive: var_u={self.var_u}, var_v={self.var_v}"
            )

    def violations_disjoint(self) -> bool:
        """True when no instrument violates both exclusion and exogeneity,
        i.e. gamma_l * alpha_l == 0 for every l."""
        return bool(np.all(self.gamma * self.alpha == 0.0))


@dataclass(eq=False)
class FrontierPoint:
    """One point of the falsification frontier.

    ``delta`` holds |psi_j - b * pi_j| for every component of the mode's
    moment vectors; ``identified_set`` is the interval the model admits at
    exactly that delta (None when empty); ``on_frontier`` is False for b
    outside the span of the relevant ratios.
    """

    b: float
    delta: np.ndarray
    identified_set: tuple[float, float] | None
    on_frontier: bool


def specs_for_mode(mode: Mode, k_z: int) -> list[JustIdSpec]:
    """The spec family a mode reports over, in enumeration order."""
    all_specs = enumerate_specs(k_z)
    if mode == Mode.GENERAL:
        return all_specs
    if mode == Mode.EXCL:
        return [s for s in all_specs if is_fully_controlled(s, k_z)]
    if mode == Mode.EXO:
        return [s for s in all_specs if is_marginal(s)]
    raise ValueError(f"unknown mode: {mode!r}")


def _estimate_one(dataset: Dataset, spec: JustIdSpec, robust_flavor: str) -> SpecEstimate:
    try:
        zt = transform_instrument(dataset, spec)
    except DegenerateInstrumentError:
        return failed_estimate(spec, "degenerate")
    try:
        return just_id_iv(dataset, zt, robust_flavor)
    except DegenerateInstrumentError:
        return failed_estimate(spec, "degenerate")
    except ZeroFirstStageError:
        return failed_estimate(spec, "zero-first-stage")


def estimate_specs(
    dataset: Dataset,
    specs: list[JustIdSpec],
    robust_flavor: str = "hc1",
    threads: int | None = None,
) -> list[SpecEstimate]:
    """Estimate a list of specifications on an already-partialled dataset.

    Failures (collinear transform, zero first stage) become placeholder
    estimates with a recorded reason instead of aborting the sweep. Results
    are returned in the order of ``specs`` regardless of thread schedule;
    per-spec computations are independent, so the numbers do not depend on
    the degree of parallelism.
    """
    workers = os.cpu_count() or 1 if threads is None else max(1, threads)
    if workers > 1 and len(specs) >= 16:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(
                pool.map(lambda s: _estimate_one(dataset, s, robust_flavor), specs)
            )
    return [_estimate_one(dataset, spec, robust_flavor) for spec in specs]


def select_relevant(estimates: list[SpecEstimate], cutoff: float) -> RelevanceSelection:
    """Partition specs into selected and rejected by first-stage F.

    A spec is selected when it produced an estimate and its F statistic is
    at or above ``cutoff``. Rejected specs carry a reason: a recorded
    failure ("degenerate", "zero-first-stage") or "low-F".
    """
    if not cutoff > 0.0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    selection = RelevanceSelection(cutoff=float(cutoff))
    for est in estimates:
        if est.failure is not None:
            selection.rejected[est.spec.spec_id] = est.failure
        elif est.f_stat >= cutoff:
            selection.selected.add(est.spec.spec_id)
        else:
            selection.rejected[est.spec.spec_id] = "low-F"
    return selection


def fas_from_estimates(
    estimates: list[SpecEstimate],
    cutoff: float,
    mode: Mode,
) -> FasResult:
    """Assemble a FAS interval from per-spec estimates.

    The interval spans the selected estimates: [min beta_hat, max beta_hat].
    With no selected spec the interval is None (reported, not raised).
    """
    selection = select_relevant(estimates, cutoff)
    betas = [
        est.beta_hat
        for est in estimates
        if est.spec.spec_id in selection.selected and est.beta_hat is not None
    ]
    interval = (min(betas), max(betas)) if betas else None
    return FasResult(mode=mode, interval=interval, selection=selection, estimates=estimates)


def fas_estimate(
    dataset: Dataset,
    mode: Mode = Mode.GENERAL,
    cutoff: float = DEFAULT_CUTOFF,
    robust_flavor: str = "hc1",
    threads: int | None = None,
) -> FasResult:
    """Estimate the FAS of the requested mode from data.

    The dataset is partialled of (intercept, controls) first; every spec in
    the mode's family is then estimated on the partialled sample and the
    interval spans the estimates that clear the relevance cutoff.
    """
    mode = Mode(mode)
    partialled = partial_out(dataset)
    family = specs_for_mode(mode, dataset.k_z)
    estimates = estimate_specs(partialled, family, robust_flavor, threads)
    return fas_from_estimates(estimates, cutoff, mode)


# ---------------------------------------------------------------------------
# population oracle

def population_spec_moments(
    model: PopulationModel, specs: list[JustIdSpec]
) -> tuple[np.ndarray, np.ndarray]:
    """Population first-stage and reduced-form coefficients per spec.

    For spec (l, C) these are the coefficients of x and y on the residual of
    Z_l after population projection on Z_C:

        pi~ = cov(Z_res, x) / var(Z_res),  psi~ = cov(Z_res, y) / var(Z_res).

    Returns (pi~, psi~) arrays aligned with ``specs``.
    """
    model.validate()
    sigma = model.sigma_z
    cov_zx = sigma @ model.pi
    cov_zy = sigma @ (model.pi * model.beta + model.gamma) + model.alpha

    pi_t = np.empty(len(specs))
    psi_t = np.empty(len(specs))
    for pos, spec in enumerate(specs):
        ell = spec.instrument_index - 1
        C = [i - 1 for i in spec.control_subset]
        if not C:
            variance = sigma[ell, ell]
            cx = cov_zx[ell]
            cy = cov_zy[ell]
        else:
            phi = np.linalg.solve(sigma[np.ix_(C, C)], sigma[C, ell])
            variance = sigma[ell, ell] - sigma[ell, C] @ phi
            cx = cov_zx[ell] - phi @ cov_zx[C]
            cy = cov_zy[ell] - phi @ cov_zy[C]
        pi_t[pos] = cx / variance
        psi_t[pos] = cy / variance
    return pi_t, psi_t


def _relevance_mask(pi_t: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(pi_t))) if pi_t.size else 1.0)
    return np.abs(pi_t) > POPULATION_RELEVANCE_TOL * scale


def population_fas(model: PopulationModel, mode: Mode = Mode.GENERAL) -> FasResult:
    """Population FAS: the span of the relevant specs' estimand ratios.

    Relevance is exact: |pi~| above 1e-12 relative. The returned estimates
    carry the population ratios with f_stat +inf for relevant specs and 0
    for irrelevant ones; the selection's ``cutoff`` field records the
    relevance tolerance.
    """
    mode = Mode(mode)
    family = specs_for_mode(mode, model.k_z)
    pi_t, psi_t = population_spec_moments(model, family)
    mask = _relevance_mask(pi_t)

    estimates: list[SpecEstimate] = []
    selection = RelevanceSelection(cutoff=POPULATION_RELEVANCE_TOL)
    ratios: list[float] = []
    for pos, spec in enumerate(family):
        if mask[pos]:
            ratio = float(psi_t[pos] / pi_t[pos])
            ratios.append(ratio)
            selection.selected.add(spec.spec_id)
            estimates.append(
                SpecEstimate(
                    spec=spec,
                    beta_hat=ratio,
                    se=None,
                    pi_hat=float(pi_t[pos]),
                    psi_hat=float(psi_t[pos]),
                    f_stat=float("inf"),
                )
            )
        else:
            selection.rejected[spec.spec_id] = "zero-first-stage"
            estimates.append(
                SpecEstimate(
                    spec=spec,
                    beta_hat=None,
                    se=None,
                    pi_hat=float(pi_t[pos]),
                    psi_hat=float(psi_t[pos]),
                    f_stat=0.0,
                    degenerate=True,
                    failure="zero-first-stage",
                )
            )
    interval = (min(ratios), max(ratios)) if ratios else None
    return FasResult(mode=mode, interval=interval, selection=selection, estimates=estimates)


# ---------------------------------------------------------------------------
# identified sets and the falsification frontier

def identified_set(
    pi: np.ndarray,
    psi: np.ndarray,
    delta: np.ndarray,
) -> tuple[float, float] | None:
    """Set of b with |psi_j - pi_j * b| <= delta_j for every component.

    Componentwise: with pi_j != 0 the constraint is the interval
    psi_j/pi_j +- delta_j/|pi_j|; with pi_j == 0 it is everything when
    |psi_j| <= delta_j and empty otherwise. Returns the intersection as
    (lo, hi), which may have infinite endpoints when no component pins a
    side, or None when the intersection is empty.

    A guard band of 1e-10 (relative) absorbs rounding noise when bounds
    cross by a few ulp; genuinely conflicting constraints still come out
    empty.
    """
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if not pi.shape == psi.shape == delta.shape:
        raise DimensionMismatchError(
            f"component counts disagree: {pi.shape[0]}, {psi.shape[0]}, {delta.shape[0]}"
        )
    if np.any(delta < 0.0):
        raise ValueError("delta components must be nonnegative")

    mask = _relevance_mask(pi)
    lo = -np.inf
    hi = np.inf
    for j in range(pi.shape[0]):
        if mask[j]:
            center = psi[j] / pi[j]
            radius = delta[j] / abs(pi[j])
            lo = max(lo, center - radius)
            hi = min(hi, center + radius)
        else:
            if abs(psi[j]) > delta[j]:
                return None
    if lo > hi:
        slack = _EMPTY_SLACK * max(1.0, abs(lo), abs(hi))
        if lo - hi > slack:
            return None
        mid = 0.5 * (lo + hi)
        return (float(mid), float(mid))
    return (float(lo), float(hi))


def frontier(
    pi: np.ndarray,
    psi: np.ndarray,
    relevant: np.ndarray | list[int],
    b_grid: np.ndarray,
) -> list[FrontierPoint]:
    """Falsification frontier over a grid of candidate effects.

    Parameters
    ----------
    pi, psi : ndarray
        Population moment vectors, one entry per spec of the mode in force.
    relevant : boolean mask or list of 0-based positions
        Components whose ratios span the frontier range.
    b_grid : ndarray
        Candidate effect values. Values outside the span of the relevant
        ratios are computed but flagged ``on_frontier=False``.

    Returns
    -------
    list of FrontierPoint
        For each b: delta_j(b) = |psi_j - b * pi_j| and the identified set
        at that delta, which is {b} itself on the frontier.
    """
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    mask = np.zeros(pi.shape[0], dtype=bool)
    rel = np.asarray(relevant)
    if rel.dtype == bool:
        mask = rel.copy()
    else:
        mask[np.asarray(relevant, dtype=int)] = True
    if not np.any(mask):
        raise DimensionMismatchError("frontier needs at least one relevant component")
    ratios = psi[mask] / pi[mask]
    b_lo = float(np.min(ratios))
    b_hi = float(np.max(ratios))
    span_slack = 1e-12 * max(1.0, abs(b_lo), abs(b_hi))

    points: list[FrontierPoint] = []
    for b in np.asarray(b_grid, dtype=np.float64).reshape(-1):
        delta = np.abs(psi - b * pi)
        points.append(
            FrontierPoint(
                b=float(b),
                delta=delta,
                identified_set=identified_set(pi, psi, delta),
                on_frontier=b_lo - span_slack <= b <= b_hi + span_slack,
            )
        )
    return points


def population_frontier(
    model: PopulationModel,
    mode: Mode = Mode.EXCL,
    grid_points: int = 201,
) -> tuple[list[JustIdSpec], np.ndarray, np.ndarray, list[FrontierPoint]]:
    """Frontier of a population model over an even grid spanning its FAS.

    Returns (specs, pi~, psi~, points). The grid runs from the smallest to
    the largest relevant ratio with ``grid_points`` points; a degenerate
    span yields a single point.
    """
    mode = Mode(mode)
    family = specs_for_mode(mode, model.k_z)
    pi_t, psi_t = population_spec_moments(model, family)
    mask = _relevance_mask(pi_t)
    if not np.any(mask):
        raise ZeroFirstStageError("no relevant component; frontier is undefined")
    ratios = psi_t[mask] / pi_t[mask]
    lo, hi = float(np.min(ratios)), float(np.max(ratios))
    grid = np.linspace(lo, hi, grid_points) if hi > lo else np.array([lo])
    return family, pi_t, psi_t, frontier(pi_t, psi_t, mask, grid)
