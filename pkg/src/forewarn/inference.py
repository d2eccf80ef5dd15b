"""Synthetic autoregressive forecast engine.

The dynamics are deliberately toy: each 6-hour step shifts every field
eastward by a whole number of cells (a circular roll, so mass is conserved
exactly) and optionally applies a 3-point zonal smoother whose weights sum
to one. The value of the module is not meteorology; it is that the engine
exercises the same coordinate discipline, stepping contract, and output
shapes as a real model while staying cheap enough to run on a desk.

Smoothing is computed in float64 and cast back to float32 so that global
sums survive long rollouts, and so an independent per-element reference
implementation lands on bit-identical results.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from itertools import islice

import numpy as np

from .errors import CycleAlignmentError, NumericInstabilityError, SequenceError
from .grid import (
    CYCLE_HOURS,
    LEAD_STEP_HOURS,
    ForecastTensor,
    GridSpec,
    VariableCatalog,
    coords_for_grid,
    ensure_utc,
    validate_coords,
)

LEAD_AXIS = 2  # position of lead_time in DIMS


@dataclass(frozen=True)
class ToyModelConfig:
    """Dynamics parameters; defaults give a pure eastward drift."""

    zonal_shift_cells: int = 1
    smoothing_weight: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.smoothing_weight < 1.0):
            raise ValueError(
                f"smoothing_weight must be in [0, 1): {self.smoothing_weight}"
            )


def check_cycle_alignment(t: datetime) -> datetime:
    """Return t as UTC, or raise if it is not on a 00/06/12/18Z boundary."""
    t = ensure_utc(t)
    if (
        t.hour % CYCLE_HOURS != 0
        or t.minute != 0
        or t.second != 0
        or t.microsecond != 0
    ):
        raise CycleAlignmentError(
            f"{t.isoformat()} is not aligned to a {CYCLE_HOURS}-hour cycle"
        )
    return t


# Per-kind (center, amplitude) for synthetic initial fields. Centers sit
# well away from zero so global sums are stable targets for conservation
# checks; tcwv spans [0, 80] mm so flood logic sees realistic magnitudes.
_FIELD_RANGES = {
    "u10m": (6.0, 5.0),
    "v10m": (6.0, 5.0),
    "u100m": (8.0, 6.0),
    "v100m": (8.0, 6.0),
    "t2m": (288.0, 25.0),
    "sp": (96000.0, 6000.0),
    "msl": (101325.0, 2500.0),
    "tcwv": (40.0, 40.0),
    "u": (12.0, 9.0),
    "v": (12.0, 9.0),
    "z": (80000.0, 50000.0),
    "t": (250.0, 40.0),
    "q": (0.005, 0.0049),
    "sst": (290.0, 12.0),
    "tp": (2.0, 2.0),
}

_N_MODES = 3


def _range_key(name: str, kind: str) -> str:
    if kind == "pressure":
        return name.rstrip("0123456789")
    return name


def variable_field(
    spec: GridSpec, name: str, kind: str, var_index: int, seed: int
) -> np.ndarray:
    """Deterministic smooth field for one variable, shape (nlat, nlon) f32.

    A small sum of low-wavenumber cosine modes, normalized into the
    variable's physical range. Same (spec, var_index, seed) always yields
    the same bits.
    """
    center, amp = _FIELD_RANGES[_range_key(name, kind)]
    rng = np.random.default_rng([seed, var_index])
    latn = (90.0 - spec.latitudes()) / 180.0
    lonn = spec.longitudes() / 360.0
    weights = rng.uniform(0.2, 1.0, _N_MODES)
    p = rng.integers(1, 5, _N_MODES)
    q = rng.integers(1, 7, _N_MODES)
    phase = rng.uniform(0.0, 2.0 * np.pi, _N_MODES)
    g = np.zeros((spec.nlat, spec.nlon))
    for m in range(_N_MODES):
        g += weights[m] * np.cos(
            2.0 * np.pi * (p[m] * latn[:, None] + q[m] * lonn[None, :]) + phase[m]
        )
    g /= weights.sum()
    return (center + amp * g).astype(np.float32)


def make_initial_state(
    spec: GridSpec, catalog: VariableCatalog, cycle_time: datetime, seed: int = 0
) -> ForecastTensor:
    """Initial condition tensor at lead 0 over the full catalog."""
    cycle_time = check_cycle_alignment(cycle_time)
    values = np.empty((1, 1, 1, len(catalog), spec.nlat, spec.nlon), dtype=np.float32)
    for i, entry in enumerate(catalog):
        values[0, 0, 0, i] = variable_field(spec, entry.name, entry.kind, i, seed)
    coords = coords_for_grid(spec, catalog, cycle_time, lead_hours=(0,))
    return ForecastTensor(values=values, coords=coords)


def advance_field(values: np.ndarray, config: ToyModelConfig) -> np.ndarray:
    """One model step along the last (longitude) axis, float32 in and out."""
    out = np.roll(values, config.zonal_shift_cells, axis=-1)
    w = config.smoothing_weight
    if w != 0.0:
        x = out.astype(np.float64)
        y = (1.0 - w) * x + (w / 2.0) * (np.roll(x, 1, axis=-1) + np.roll(x, -1, axis=-1))
        out = y.astype(np.float32)
    return out


@dataclass(frozen=True)
class StepOutput:
    tensor: ForecastTensor
    step: int  # 1-based; lead_time = step * LEAD_STEP_HOURS


class ForecastStepper:
    """Iterator producing one 6-hour step per __next__, indefinitely."""

    def __init__(self, config: ToyModelConfig, initial: ForecastTensor):
        expected = initial.coords.replace(lead_time=(0,))
        validate_coords(initial.coords, expected)
        self._config = config
        self._base_coords = initial.coords
        self._current = initial.values
        self._step = 0

    def __iter__(self) -> "ForecastStepper":
        return self

    def __next__(self) -> StepOutput:
        self._step += 1
        self._current = advance_field(self._current, self._config)
        coords = self._base_coords.replace(
            lead_time=(self._step * LEAD_STEP_HOURS,)
        )
        tensor = ForecastTensor(values=self._current, coords=coords)
        return StepOutput(tensor=tensor, step=self._step)


def create_iterator(config: ToyModelConfig, initial: ForecastTensor) -> ForecastStepper:
    """Stepper over the initial state; raises coordinate-mismatch if the
    initial frame is not at lead_time [0]."""
    return ForecastStepper(config, initial)


def _first_nonfinite_variable(values: np.ndarray, variables: tuple[str, ...]) -> str:
    nvar = values.shape[3]
    flat = np.isfinite(values[0, 0, 0]).reshape(nvar, -1).all(axis=1)
    for i in range(nvar):
        if not flat[i]:
            return variables[i]
    return "unknown"


def run_forecast(
    config: ToyModelConfig, initial: ForecastTensor, forecast_steps: int
) -> list[ForecastTensor]:
    """Initial state plus forecast_steps stepped states, leads 0..6*steps.

    Raises numeric-instability naming the first bad step and variable if
    any output stops being finite.
    """
    if forecast_steps < 1:
        raise ValueError(f"forecast_steps must be >= 1, got {forecast_steps}")
    if not np.isfinite(initial.values).all():
        raise NumericInstabilityError(
            step=0,
            variable=_first_nonfinite_variable(initial.values, initial.variables),
        )
    states = [initial]
    stepper = create_iterator(config, initial)
    for out in islice(stepper, forecast_steps):
        vals = out.tensor.values
        if not np.isfinite(vals).all():
            raise NumericInstabilityError(
                step=out.step,
                variable=_first_nonfinite_variable(vals, out.tensor.variables),
            )
        states.append(out.tensor)
    return states


def stack_forecast(states: list[ForecastTensor]) -> ForecastTensor:
    """Concatenate per-step states along lead_time.

    All states must agree on every other dimension, and the combined lead
    sequence must be consecutive 6-hour multiples starting at its first
    entry; a gap or duplicate raises a sequence error.
    """
    if not states:
        raise ValueError("cannot stack an empty state list")
    base = states[0].coords.replace(lead_time=(0,))
    for s in states[1:]:
        validate_coords(s.coords.replace(lead_time=(0,)), base)
    leads: list[int] = []
    for s in states:
        leads.extend(s.coords.lead_time)
    for a, b in zip(leads, leads[1:]):
        if b - a != LEAD_STEP_HOURS:
            raise SequenceError(
                f"lead_time sequence must advance by {LEAD_STEP_HOURS} h, "
                f"got {a} -> {b}"
            )
    values = np.concatenate([s.values for s in states], axis=LEAD_AXIS)
    coords = states[0].coords.replace(lead_time=tuple(leads))
    return ForecastTensor(values=values, coords=coords)


def run_and_stack_lean(
    config: ToyModelConfig,
    initial: ForecastTensor,
    forecast_steps: int,
) -> ForecastTensor:
    """run_forecast + stack_forecast with one preallocated output buffer.

    Peak memory is one stacked tensor plus one step field, instead of the
    stacked tensor plus every intermediate state; on big grids that halves
    the footprint. Output bits match the compose-of-parts path exactly.
    """
    if forecast_steps < 1:
        raise ValueError(f"forecast_steps must be >= 1, got {forecast_steps}")
    if not np.isfinite(initial.values).all():
        raise NumericInstabilityError(
            step=0,
            variable=_first_nonfinite_variable(initial.values, initial.variables),
        )
    nsteps = forecast_steps + 1
    b, t, _, v, nlat, nlon = initial.values.shape
    out = np.empty((b, t, nsteps, v, nlat, nlon), dtype=np.float32)
    out[:, :, 0] = initial.values
    stepper = create_iterator(config, initial)
    leads = [0]
    for step_out in islice(stepper, forecast_steps):
        vals = step_out.tensor.values
        if not np.isfinite(vals).all():
            raise NumericInstabilityError(
                step=step_out.step,
                variable=_first_nonfinite_variable(vals, step_out.tensor.variables),
            )
        out[:, :, step_out.step] = vals[:, :, 0]
        leads.append(step_out.tensor.coords.lead_time[0])
    coords = initial.coords.replace(lead_time=tuple(leads))
    return ForecastTensor(values=out, coords=coords)
