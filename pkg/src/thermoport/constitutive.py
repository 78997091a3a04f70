"""Thermodynamic state, energy functionals, and the co-energy maps.

The energy density splits into a quadratic species part and an
exponential thermal part::

    u(c, s) = sum_i (alpha_i / 2) c_i^2 + c_v T_ref exp(s / c_v)

so the intensive fields follow by differentiation:

    T    = T_ref exp(s / c_v)        (positive for every finite s)
    mu_i = alpha_i c_i

The exponential form needs no clamping to keep temperature positive,
and the linear potential law keeps all nonlinearity inside the
state-modulated transport structure.  Transport coefficients are
spatially constant scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import MimeticGrid, ScalarField

__all__ = [
    "InvalidStateError",
    "SaturationError",
    "ConstitutiveModel",
    "ThermoState",
    "CoEnergyFields",
    "energy_density",
    "co_energy",
    "total_energy",
    "total_entropy",
    "entropy_for_temperature",
]


class InvalidStateError(ValueError):
    """State fields are unusable (non-finite values or mismatched species)."""


class SaturationError(FloatingPointError):
    """The temperature map overflowed; carries the first offending cell index."""

    def __init__(self, cell_index):
        self.cell_index = tuple(int(i) for i in np.atleast_1d(cell_index))
        super().__init__(
            f"temperature map saturated (exp overflow) at cell {self.cell_index}"
        )


@dataclass(frozen=True)
class ConstitutiveModel:
    """Material parameters; all strictly positive.

    heat_capacity         volumetric heat capacity (the c_v of the thermal law)
    reference_temperature temperature at zero entropy density
    alpha                 per-species chemical stiffness (mu_i = alpha_i c_i)
    conductivity          heat conduction coefficient of Fourier's law
    diffusivities         per-species coefficients of Fick's law f = -d grad(mu)
    """

    heat_capacity: float
    reference_temperature: float
    conductivity: float
    alpha: tuple[float, ...] = ()
    diffusivities: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(
            self, "diffusivities", tuple(float(d) for d in self.diffusivities)
        )
        if len(self.alpha) != len(self.diffusivities):
            raise ValueError("alpha and diffusivities must pair up per species")
        for name in ("heat_capacity", "reference_temperature", "conductivity"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if any(a <= 0.0 for a in self.alpha):
            raise ValueError("every alpha must be positive")
        if any(d <= 0.0 for d in self.diffusivities):
            raise ValueError("every diffusivity must be positive")

    @property
    def n_species(self) -> int:
        return len(self.alpha)


@dataclass
class ThermoState:
    """Extensive fields on a grid: species concentrations and entropy density.

    Temperature positivity is a property of the exponential constitutive
    map, so any finite entropy density is admissible here; overflow is
    caught when the co-energy map runs.
    """

    grid: MimeticGrid
    concentrations: tuple[ScalarField, ...]
    entropy_density: ScalarField
    time: float = 0.0

    def __post_init__(self):
        self.concentrations = tuple(self.concentrations)
        for c in self.concentrations:
            if c.grid != self.grid:
                raise InvalidStateError("species field on a foreign grid")
        if self.entropy_density.grid != self.grid:
            raise InvalidStateError("entropy field on a foreign grid")

    @property
    def n_species(self) -> int:
        return len(self.concentrations)

    def copy(self) -> "ThermoState":
        return ThermoState(
            self.grid,
            tuple(c.copy() for c in self.concentrations),
            self.entropy_density.copy(),
            self.time,
        )

    def pack(self) -> np.ndarray:
        """Flatten to a single vector, species first, entropy last."""
        parts = [c.values.ravel() for c in self.concentrations]
        parts.append(self.entropy_density.values.ravel())
        return np.concatenate(parts) if parts else np.empty(0)

    @classmethod
    def unpack(cls, flat: np.ndarray, grid: MimeticGrid, n_species: int, time: float):
        flat = np.asarray(flat, dtype=float)
        nc = grid.n_cells
        if flat.shape != ((n_species + 1) * nc,):
            raise InvalidStateError("flat state vector has the wrong length")
        fields = [
            ScalarField(grid, flat[k * nc : (k + 1) * nc].reshape(grid.extents).copy())
            for k in range(n_species)
        ]
        s = ScalarField(grid, flat[n_species * nc :].reshape(grid.extents).copy())
        return cls(grid, tuple(fields), s, time)


@dataclass
class CoEnergyFields:
    """Intensive fields: temperature and per-species chemical potential.

    Producers guarantee positive temperature; the co-energy map raises
    instead of emitting a non-positive or overflowed field.
    """

    temperature: ScalarField
    chemical_potentials: tuple[ScalarField, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.chemical_potentials = tuple(self.chemical_potentials)

    @property
    def n_species(self) -> int:
        return len(self.chemical_potentials)


def _check_species(state: ThermoState, model: ConstitutiveModel) -> None:
    if state.n_species != model.n_species:
        raise InvalidStateError(
            f"state carries {state.n_species} species, model {model.n_species}"
        )


def energy_density(state: ThermoState, model: ConstitutiveModel) -> ScalarField:
    """Cell-centered energy density u(c, s)."""
    _check_species(state, model)
    s = state.entropy_density.values
    if not np.all(np.isfinite(s)):
        raise InvalidStateError("non-finite entropy density")
    with np.errstate(over="ignore"):
        thermal = (
            model.heat_capacity
            * model.reference_temperature
            * np.exp(s / model.heat_capacity)
        )
    if not np.all(np.isfinite(thermal)):
        raise SaturationError(np.argwhere(~np.isfinite(thermal))[0])
    u = thermal.copy()
    for a, c in zip(model.alpha, state.concentrations):
        u += 0.5 * a * c.values**2
    return ScalarField(state.grid, u)


def co_energy(state: ThermoState, model: ConstitutiveModel) -> CoEnergyFields:
    """Temperature and chemical potentials of a state under a model."""
    _check_species(state, model)
    s = state.entropy_density.values
    if not np.all(np.isfinite(s)):
        raise InvalidStateError("non-finite entropy density")
    with np.errstate(over="ignore"):
        T = model.reference_temperature * np.exp(s / model.heat_capacity)
    if not np.all(np.isfinite(T)):
        raise SaturationError(np.argwhere(~np.isfinite(T))[0])
    mus = tuple(
        ScalarField(state.grid, a * c.values)
        for a, c in zip(model.alpha, state.concentrations)
    )
    return CoEnergyFields(ScalarField(state.grid, T), mus)


def total_energy(state: ThermoState, model: ConstitutiveModel) -> float:
    """Volume integral of the energy density, fixed-order compensated sum."""
    u = energy_density(state, model)
    return state.grid.cell_measure * math.fsum(u.values.ravel().tolist())


def total_entropy(state: ThermoState) -> float:
    """Volume integral of the entropy density."""
    s = state.entropy_density.values
    if not np.all(np.isfinite(s)):
        raise InvalidStateError("non-finite entropy density")
    return state.grid.cell_measure * math.fsum(s.ravel().tolist())


def entropy_for_temperature(temperature, model: ConstitutiveModel):
    """Invert the thermal law: the entropy density that yields a temperature."""
    T = np.asarray(temperature, dtype=float)
    if np.any(T <= 0.0):
        raise ValueError("temperature must be positive")
    return model.heat_capacity * np.log(T / model.reference_temperature)
