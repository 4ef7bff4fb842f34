"""Enumeration of just-identified specifications and instrument transforms.

With k_z instruments, each specification keeps one instrument l as the
identifying moment, moves a subset C of the others into the controls, and
drops the rest. There are k_z * 2^(k_z - 1) of them. The transformed
instrument for (l, C) is the residual of Z_l after linear projection on the
controls in C, so its estimand is a ratio of two simple regressions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import (
    DegenerateInstrumentError,
    InvalidCountError,
    TooManyInstrumentsError,
)
from .linalg import residualize

# Enumeration cap: 20 * 2^19 specs is already ~10.5 million.
MAX_INSTRUMENTS = 20

# A transform whose residual variance falls below this times var(Z_l) is
# treated as collinear with its controls.
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class JustIdSpec:
    """One just-identified specification.

    Attributes
    ----------
    instrument_index : int
        1-based index l of the identifying instrument.
    control_subset : tuple of int
        Sorted 1-based indices of instruments used as controls; never
        contains ``instrument_index``.
    spec_id : int
        Stable 1-based identifier within the enumeration for given k_z.
    label : str
        Human-readable form, e.g. ``"Z2|1,3"`` or ``"Z1"``.
    """

    instrument_index: int
    control_subset: tuple[int, ...]
    spec_id: int
    label: str


def _label(instrument_index: int, control_subset: tuple[int, ...]) -> str:
    if not control_subset:
        return f"Z{instrument_index}"
    return f"Z{instrument_index}|" + ",".join(str(i) for i in control_subset)


def spec_count(k_z: int) -> int:
    """Number of just-identified specifications, k_z * 2^(k_z - 1)."""
    if k_z < 1:
        raise InvalidCountError(f"instrument count must be >= 1, got {k_z}")
    return k_z * 2 ** (k_z - 1)


def enumerate_specs(k_z: int) -> list[JustIdSpec]:
    """All just-identified specifications for ``k_z`` instruments.

    The order is deterministic: instrument-major (l ascending), and within
    each l the control subsets follow a binary counter over the remaining
    indices in ascending order, so the empty subset comes first and the full
    complement last. ``spec_id`` is the 1-based position in this order.

    Raises
    ------
    InvalidCountError
        If ``k_z < 1``.
    TooManyInstrumentsError
        If ``k_z`` exceeds :data:`MAX_INSTRUMENTS`.
    """
    if k_z < 1:
        raise InvalidCountError(f"instrument count must be >= 1, got {k_z}")
    if k_z > MAX_INSTRUMENTS:
        raise TooManyInstrumentsError(
            f"k_z={k_z} exceeds the cap of {MAX_INSTRUMENTS} "
            f"({spec_count(k_z)} specifications)"
        )
    specs: list[JustIdSpec] = []
    spec_id = 0
    for ell in range(1, k_z + 1):
        others = [i for i in range(1, k_z + 1) if i != ell]
        for mask in range(2 ** len(others)):
            subset = tuple(others[t] for t in range(len(others)) if mask >> t & 1)
            spec_id += 1
            specs.append(
                JustIdSpec(
                    instrument_index=ell,
                    control_subset=subset,
                    spec_id=spec_id,
                    label=_label(ell, subset),
                )
            )
    return specs


def is_fully_controlled(spec: JustIdSpec, k_z: int) -> bool:
    """True when the spec's controls are all other instruments (Excl family)."""
    return len(spec.control_subset) == k_z - 1


def is_marginal(spec: JustIdSpec) -> bool:
    """True when the spec has no instrument controls (Exo family)."""
    return not spec.control_subset


@dataclass(eq=False)
class TransformedInstrument:
    """A realized transformed instrument.

    Attributes
    ----------
    spec : JustIdSpec
        The specification the transform realizes.
    values : ndarray, shape (n,)
        Residual of Z_l on (intercept, Z_C); equals demeaned Z_l when C is
        empty and the dataset carries an intercept, and raw Z_l when both
        are absent.
    projection_coeffs : ndarray
        Coefficients of Z_l on the control instruments (excluding any
        intercept), in ``spec.control_subset`` order. Empty when C is empty.
    """

    spec: JustIdSpec
    values: np.ndarray
    projection_coeffs: np.ndarray


def transform_instrument(dataset: Dataset, spec: JustIdSpec) -> TransformedInstrument:
    """Residualize the spec's instrument on its control instruments.

    The projection block is (intercept if the dataset has one, Z columns in
    ``spec.control_subset``). In the usual pipeline the dataset has already
    been partialled of user controls, so the intercept flag is off and the
    columns are zero mean.

    Raises
    ------
    DegenerateInstrumentError
        If the residual variance is below ``1e-12 * var(Z_l)``, i.e. the
        instrument is numerically collinear with its controls (or constant).
    """
    z = dataset.Z[:, spec.instrument_index - 1]
    controls = dataset.Z[:, [i - 1 for i in spec.control_subset]]

    pieces = []
    if dataset.intercept:
        pieces.append(np.ones((dataset.n, 1)))
    if controls.shape[1]:
        pieces.append(controls)

    center = z - z.mean() if dataset.intercept else z
    base_ss = float(center @ center)
    if base_ss <= 0.0:
        raise DegenerateInstrumentError(
            f"{spec.label}: instrument has zero variance"
        )

    if not pieces:
        values = z.copy()
        coeffs = np.empty(0)
    else:
        B = np.hstack(pieces)
        values = residualize(z, B)
        if controls.shape[1]:
            # projection coefficients on the instrument controls only
            fit_coef, *_ = np.linalg.lstsq(B, z, rcond=None)
            coeffs = fit_coef[-controls.shape[1]:]
        else:
            coeffs = np.empty(0)

    resid_ss = float(values @ values)
    if resid_ss < DEGENERACY_TOL * base_ss:
        raise DegenerateInstrumentError(
            f"{spec.label}: residual variance {resid_ss / dataset.n:.3e} is below "
            f"{DEGENERACY_TOL:g} of var(Z_{spec.instrument_index})"
        )
    return TransformedInstrument(spec=spec, values=values, projection_coeffs=coeffs)
