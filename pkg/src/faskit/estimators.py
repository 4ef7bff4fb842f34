"""Just-identified IV estimates, 2SLS with its weight decomposition, and the
overidentification test.

Each just-identified specification is estimated as a ratio of two simple
regressions on its transformed instrument, so ``beta_hat * pi_hat ==
psi_hat`` holds to rounding. 2SLS over any instrument subset is reported
together with the weights that write it as a weighted sum of the
just-identified estimates, and with a two-step efficient GMM J statistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chi2 import chi2_sf
from .data import Dataset
from .errors import (
    DegenerateInstrumentError,
    DimensionMismatchError,
    WeakIdentificationError,
    ZeroFirstStageError,
)
from .linalg import ols, projection_basis, residualize
from .specs import JustIdSpec, TransformedInstrument

# Relative threshold below which a just-identifying moment z'x counts as zero.
FIRST_STAGE_TOL = 1e-12


@dataclass(eq=False)
class SpecEstimate:
    """Estimate of one just-identified specification.

    ``beta_hat`` is absent (None) when the spec could not be estimated; the
    ``failure`` field then says why ("degenerate" or "zero-first-stage").

    Attributes
    ----------
    spec : JustIdSpec
    beta_hat : float or None
        Ratio psi_hat / pi_hat, computed directly as z'y / z'x.
    se : float or None
        Heteroskedasticity-robust standard error of ``beta_hat``.
    pi_hat : float or None
        First-stage coefficient of x on the transformed instrument.
    psi_hat : float or None
        Reduced-form coefficient of y on the transformed instrument.
    f_stat : float
        Squared robust t-ratio of ``pi_hat``; 0.0 for failed specs.
    degenerate : bool
        True when no estimate exists.
    failure : str or None
        "degenerate", "zero-first-stage", or None.
    """

    spec: JustIdSpec
    beta_hat: float | None
    se: float | None
    pi_hat: float | None
    psi_hat: float | None
    f_stat: float
    degenerate: bool = False
    failure: str | None = None


@dataclass(eq=False)
class TslsResult:
    """Two stage least squares over an instrument set.

    Attributes
    ----------
    beta_2sls : float
        (x'P_Z x)^{-1} x'P_Z y.
    se : float
        Robust standard error.
    first_stage_f : float
        Joint robust Wald statistic of the first stage, divided by the
        number of instruments.
    j_stat : float
        Two-step efficient GMM overidentification statistic; 0.0 when just
        identified.
    j_pvalue : float or None
        Chi-square upper tail of ``j_stat`` on ``j_dof`` degrees of
        freedom; None when ``j_dof`` is 0.
    j_dof : int
        Number of instruments minus one.
    weights : ndarray
        Per-instrument weights writing ``beta_2sls`` as a weighted sum of
        the just-identified estimates; they sum to one and can be negative.
    """

    beta_2sls: float
    se: float
    first_stage_f: float
    j_stat: float
    j_pvalue: float | None
    j_dof: int
    weights: np.ndarray


@dataclass(eq=False)
class PairwiseTsls:
    """One row of the pairwise report: a two-instrument 2SLS fit."""

    pair: tuple[int, int]
    variant: str  # "raw" or "partialled"
    labels: tuple[str, str]
    result: TslsResult


def _demean_if(dataset: Dataset):
    """(y, x, Z, n_absorbed) with the intercept absorbed when present."""
    if dataset.intercept:
        return (
            dataset.y - dataset.y.mean(),
            dataset.x - dataset.x.mean(),
            dataset.Z - dataset.Z.mean(axis=0),
            dataset.n_absorbed + 1,
        )
    return dataset.y, dataset.x, dataset.Z, dataset.n_absorbed


def just_id_iv(
    dataset: Dataset,
    zt: TransformedInstrument,
    robust_flavor: str = "hc1",
) -> SpecEstimate:
    """Estimate one just-identified specification.

    Parameters
    ----------
    dataset : Dataset
        Sample, normally already partialled of user controls.
    zt : TransformedInstrument
        Transformed instrument realizing the spec.
    robust_flavor : {"hc1", "hc0"}

    Returns
    -------
    SpecEstimate
        With ``beta_hat = z'y / z'x`` and ``f_stat`` equal to the squared
        robust t-ratio of the first-stage coefficient.

    Raises
    ------
    DegenerateInstrumentError
        If the transformed instrument has numerically zero variance.
    ZeroFirstStageError
        If ``|z'x|`` is below ``1e-12 * |z| * |x|``.
    """
    w = np.asarray(zt.values, dtype=np.float64)
    if w.shape[0] != dataset.n:
        raise DimensionMismatchError(
            f"transformed instrument has {w.shape[0]} rows, dataset has {dataset.n}"
        )
    if dataset.intercept:
        design = np.column_stack([np.ones(dataset.n), w])
        coef_pos = 1
    else:
        design = w[:, None]
        coef_pos = 0

    ww = float(w @ w)
    if ww <= 0.0:
        raise DegenerateInstrumentError(f"{zt.spec.label}: instrument is identically zero")

    wx = float(w @ dataset.x)
    xx = float(dataset.x @ dataset.x)
    if abs(wx) <= FIRST_STAGE_TOL * np.sqrt(ww * xx):
        raise ZeroFirstStageError(
            f"{zt.spec.label}: z'x = {wx:.3e} is numerically zero"
        )

    first = ols(design, dataset.x, robust_flavor, dataset.n_absorbed)
    reduced = ols(design, dataset.y, robust_flavor, dataset.n_absorbed)
    pi_hat = float(first.coefficients[coef_pos])
    psi_hat = float(reduced.coefficients[coef_pos])
    var_pi = float(first.robust_cov[coef_pos, coef_pos])
    f_stat = pi_hat * pi_hat / var_pi if var_pi > 0.0 else np.inf

    beta_hat = float(w @ dataset.y) / wx

    # robust IV sandwich for the coefficient on x
    if dataset.intercept:
        X_iv = np.column_stack([np.ones(dataset.n), dataset.x])
        WtX = design.T @ X_iv
        coefs = np.linalg.solve(WtX, design.T @ dataset.y)
        resid = dataset.y - X_iv @ coefs
        bread = np.linalg.inv(WtX)
        scored = design * resid[:, None]
        cov = bread @ (scored.T @ scored) @ bread.T
        p = 2
        var_beta = cov[1, 1]
    else:
        resid = dataset.y - dataset.x * beta_hat
        var_beta = float((w * resid) @ (w * resid)) / (wx * wx)
        p = 1
    if robust_flavor.lower() == "hc1":
        var_beta *= dataset.n / (dataset.n - p - dataset.n_absorbed)
    se = float(np.sqrt(var_beta)) if var_beta >= 0.0 else float("nan")

    return SpecEstimate(
        spec=zt.spec,
        beta_hat=beta_hat,
        se=se,
        pi_hat=pi_hat,
        psi_hat=psi_hat,
        f_stat=float(f_stat),
    )


def failed_estimate(spec: JustIdSpec, reason: str) -> SpecEstimate:
    """Placeholder estimate for a spec that could not be computed."""
    return SpecEstimate(
        spec=spec,
        beta_hat=None,
        se=None,
        pi_hat=None,
        psi_hat=None,
        f_stat=0.0,
        degenerate=True,
        failure=reason,
    )


def _tsls_core(
    y: np.ndarray,
    x: np.ndarray,
    Zm: np.ndarray,
    n_absorbed: int,
    robust_flavor: str,
) -> TslsResult:
    """2SLS of y on x with instrument matrix Zm, no intercept.

    Callers absorb the intercept by demeaning first.
    """
    n, q = Zm.shape
    Q = projection_basis(Zm)  # full-rank check lives here
    xhat = Q @ (Q.T @ x)
    denom = float(x @ xhat)
    xx = float(x @ x)
    if denom <= FIRST_STAGE_TOL * xx or denom <= 0.0:
        raise WeakIdentificationError(
            f"projected first stage x'P_Z x = {denom:.3e} is numerically zero"
        )
    beta = float(xhat @ y) / denom
    resid = y - x * beta

    var_beta = float((xhat * resid) @ (xhat * resid)) / (denom * denom)
    if robust_flavor.lower() == "hc1":
        var_beta *= n / (n - 1 - n_absorbed)
    se = float(np.sqrt(var_beta))

    first = ols(Zm, x, robust_flavor, n_absorbed)
    pi = first.coefficients
    try:
        wald = float(pi @ np.linalg.solve(first.robust_cov, pi))
    except np.linalg.LinAlgError:
        wald = float(pi @ (np.linalg.pinv(first.robust_cov) @ pi))
    first_stage_f = wald / q

    weights = pi * (Zm.T @ x) / denom

    j_dof = q - 1
    if j_dof == 0:
        j_stat = 0.0
        j_pvalue = None
    else:
        # two-step efficient GMM: weight from 2SLS residuals, re-minimize,
        # evaluate the criterion at the second-step estimate
        moments_x = Zm.T @ x
        moments_y = Zm.T @ y
        scored = Zm * resid[:, None]
        S = scored.T @ scored
        try:
            S_inv_x = np.linalg.solve(S, moments_x)
            S_inv_y = np.linalg.solve(S, moments_y)
        except np.linalg.LinAlgError:
            S_pinv = np.linalg.pinv(S)
            S_inv_x = S_pinv @ moments_x
            S_inv_y = S_pinv @ moments_y
        beta_two = float(moments_x @ S_inv_y) / float(moments_x @ S_inv_x)
        gap = moments_y - moments_x * beta_two
        try:
            j_stat = float(gap @ np.linalg.solve(S, gap))
        except np.linalg.LinAlgError:
            j_stat = float(gap @ (np.linalg.pinv(S) @ gap))
        j_stat = max(0.0, j_stat)
        j_pvalue = chi2_sf(j_stat, j_dof)

    return TslsResult(
        beta_2sls=beta,
        se=se,
        first_stage_f=first_stage_f,
        j_stat=j_stat,
        j_pvalue=j_pvalue,
        j_dof=j_dof,
        weights=weights,
    )


def tsls(
    dataset: Dataset,
    instrument_indices: list[int] | None = None,
    robust_flavor: str = "hc1",
) -> TslsResult:
    """2SLS of the treatment effect using a subset of the instruments.

    Parameters
    ----------
    dataset : Dataset
    instrument_indices : list of int, optional
        1-based instrument indices; defaults to all of them.
    robust_flavor : {"hc1", "hc0"}

    Returns
    -------
    TslsResult
        ``weights[i]`` corresponds to ``instrument_indices[i]``.
    """
    if instrument_indices is None:
        instrument_indices = list(range(1, dataset.k_z + 1))
    if not instrument_indices:
        raise DimensionMismatchError("instrument subset is empty")
    bad = [i for i in instrument_indices if not 1 <= i <= dataset.k_z]
    if bad:
        raise DimensionMismatchError(
            f"instrument indices out of range 1..{dataset.k_z}: {bad}"
        )
    y, x, Z, n_absorbed = _demean_if(dataset)
    Zm = Z[:, [i - 1 for i in instrument_indices]]
    return _tsls_core(y, x, Zm, n_absorbed, robust_flavor)


def tsls_matrix(
    dataset: Dataset,
    instrument_matrix: np.ndarray,
    robust_flavor: str = "hc1",
) -> TslsResult:
    """2SLS with an explicit instrument matrix (e.g. transformed columns)."""
    y, x, _, n_absorbed = _demean_if(dataset)
    Zm = np.atleast_2d(np.asarray(instrument_matrix, dtype=np.float64))
    if Zm.shape[0] != dataset.n and Zm.shape[1] == dataset.n:
        Zm = Zm.T
    if dataset.intercept:
        Zm = Zm - Zm.mean(axis=0)
    return _tsls_core(y, x, Zm, n_absorbed, robust_flavor)


def tsls_pairwise_report(
    dataset: Dataset,
    robust_flavor: str = "hc1",
) -> list[PairwiseTsls]:
    """2SLS over every instrument pair, raw and partialled variants.

    For each unordered pair {a, b} the raw variant instruments with
    (Z_a, Z_b); when other instruments remain, the partialled variant
    instruments with both columns residualized on all of them. Disagreement
    between the two J p-values localizes which instruments a rejection comes
    from.

    Requires at least two instruments. Rows are ordered pair-major with the
    raw variant first.
    """
    if dataset.k_z < 2:
        raise DimensionMismatchError("pairwise report needs at least two instruments")
    y, x, Z, n_absorbed = _demean_if(dataset)
    k_z = dataset.k_z
    rows: list[PairwiseTsls] = []
    for a in range(1, k_z + 1):
        for b in range(a + 1, k_z + 1):
            cols = Z[:, [a - 1, b - 1]]
            rows.append(
                PairwiseTsls(
                    pair=(a, b),
                    variant="raw",
                    labels=(f"Z{a}", f"Z{b}"),
                    result=_tsls_core(y, x, cols, n_absorbed, robust_flavor),
                )
            )
            rest = [i for i in range(1, k_z + 1) if i not in (a, b)]
            if rest:
                part = residualize(cols, Z[:, [i - 1 for i in rest]])
                tag = ",".join(str(i) for i in rest)
                rows.append(
                    PairwiseTsls(
                        pair=(a, b),
                        variant="partialled",
                        labels=(f"Z{a}|{tag}", f"Z{b}|{tag}"),
                        result=_tsls_core(y, x, part, n_absorbed, robust_flavor),
                    )
                )
    return rows
