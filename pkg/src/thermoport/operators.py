"""State-modulated skew transport structure on staggered grids.

The conduction-diffusion dynamics are generated by applying a formally
skew-symmetric operator, modulated by the present state, to the
co-energy fields (chemical potentials and temperature)::

    dc_i/dt = div( r_ci * E(e_T) )
    ds/dt   = sum_i avg( r_ci * grad(e_mu_i) )
              + avg( r_s * grad(e_T) ) + div( r_s * E(e_T) )

with face modulators r_s = (lambda / T_f^2) grad(T) for conduction and
r_ci = (d_i / T_f) grad(mu_i) for diffusion.  E(.) interpolates a cell
field to faces and avg(.) transfers per-face products back to cells.

Discretization choices here are load bearing, so they are spelled out:

* E(.) is the arithmetic mean across interior faces and the prescribed
  trace on boundary faces.  Boundary faces therefore carry no coupling
  to cell unknowns, which is one half of why the zero-trace probe
  matrix of the full operator is skew to rounding error.
* avg(.) is the adjoint (under the cell/face quadratures) of the
  interior-face part of E(.): interior cells receive the mean of their
  two face products per axis, boundary-adjacent cells receive half of
  their single interior face product, and boundary faces are excluded.
  This is the other half of exact skewness, and it also makes every
  entropy production cell value a nonnegative combination of
  gamma * ghat^2 terms, so the second law holds without tolerance.
* Face temperatures are harmonic means of the two adjacent cells on
  interior faces.  On boundary faces the 1/T factor of the diffusion
  modulator uses the trace, while the 1/T^2 factor of the conduction
  modulator uses the product trace * T_adjacent.  The mixed product is
  what makes the discrete energy balance close exactly against the
  boundary port pairs; see the ports module for the matching side.

Modulators are frozen within an integration stage: each stage sees a
linear operator, so skewness statements are meaningful per stage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .constitutive import CoEnergyFields
from .mesh import (
    BoundaryField,
    FaceField,
    MimeticGrid,
    ScalarField,
    div,
    grad,
)

__all__ = [
    "ConstitutiveViolationError",
    "SpeciesCountError",
    "CoEnergyTraces",
    "Modulators",
    "FluxSet",
    "AssembledStructure",
    "driving_forces",
    "modulators",
    "apply_psi",
    "apply_jglob",
    "factorized_jglob",
    "entropy_production",
    "fluxes",
    "assemble_structure",
    "assemble_dense",
    "write_dense_csv",
]


class ConstitutiveViolationError(ValueError):
    """A face temperature came out non-positive."""


class SpeciesCountError(ValueError):
    """Species-indexed inputs disagree on the species count."""


def _sl(ndim, axis, index):
    out = [slice(None)] * ndim
    out[axis] = index
    return tuple(out)


@dataclass
class CoEnergyTraces:
    """Boundary traces of the co-energy fields (temperature and potentials)."""

    temperature: BoundaryField
    chemical_potentials: tuple[BoundaryField, ...] = ()

    def __post_init__(self):
        self.chemical_potentials = tuple(self.chemical_potentials)

    @classmethod
    def zeros(cls, grid: MimeticGrid, n_species: int) -> "CoEnergyTraces":
        return cls(
            BoundaryField.zeros(grid),
            tuple(BoundaryField.zeros(grid) for _ in range(n_species)),
        )

    @property
    def n_species(self) -> int:
        return len(self.chemical_potentials)


@dataclass
class Modulators:
    """Face modulators of the skew structure, frozen for one stage.

    ``r_s`` and ``r_c`` follow the conventions in the module docstring.
    ``face_temperature`` is the multiplicative face temperature
    (harmonic inside, trace on the boundary) satisfying
    ``entropy_flux = -face_temperature * r_s`` exactly fieldwise.
    The gradients that produced the modulators ride along because the
    flux laws need them.
    """

    r_s: FaceField
    r_c: tuple[FaceField, ...]
    face_temperature: FaceField
    grad_temperature: FaceField
    grad_potentials: tuple[FaceField, ...]
    g_s: float = 1.0

    def __post_init__(self):
        self.r_c = tuple(self.r_c)
        self.grad_potentials = tuple(self.grad_potentials)

    @property
    def n_species(self) -> int:
        return len(self.r_c)


@dataclass
class FluxSet:
    """Physical fluxes: heat, entropy carried by heat, and per-species moles."""

    heat: FaceField
    entropy: FaceField
    species: tuple[FaceField, ...]

    def __post_init__(self):
        self.species = tuple(self.species)


def driving_forces(
    coe: CoEnergyFields, grid: MimeticGrid, traces: CoEnergyTraces
) -> tuple[FaceField, tuple[FaceField, ...]]:
    """Gradients of temperature and of each chemical potential."""
    if coe.n_species != traces.n_species:
        raise SpeciesCountError(
            f"co-energy has {coe.n_species} species, traces {traces.n_species}"
        )
    grad_T = grad(coe.temperature, traces.temperature)
    grad_mu = tuple(
        grad(mu, tr)
        for mu, tr in zip(coe.chemical_potentials, traces.chemical_potentials)
    )
    return grad_T, grad_mu


def _face_temperature_arrays(temperature: ScalarField, trace: BoundaryField):
    """Per axis: (linear face T, squared-convention face T product).

    The linear array holds harmonic means inside and the trace on the
    boundary.  The pair array holds harmonic^2 inside and the product
    trace * adjacent-cell value on the boundary.
    """
    g = temperature.grid
    T = temperature.values
    if np.any(T <= 0.0):
        raise ConstitutiveViolationError("non-positive cell temperature")
    lin, pair = [], []
    for ax in range(g.dim):
        nd = g.dim
        t_lin = np.empty(g.face_shape(ax))
        t_pair = np.empty(g.face_shape(ax))
        left = T[_sl(nd, ax, slice(0, -1))]
        right = T[_sl(nd, ax, slice(1, None))]
        harm = 2.0 * left * right / (left + right)
        t_lin[_sl(nd, ax, slice(1, -1))] = harm
        t_pair[_sl(nd, ax, slice(1, -1))] = harm * harm
        lo = trace.sides[(ax, 0)]
        hi = trace.sides[(ax, 1)]
        first = T[_sl(nd, ax, 0)]
        last = T[_sl(nd, ax, -1)]
        t_lin[_sl(nd, ax, 0)] = lo
        t_lin[_sl(nd, ax, -1)] = hi
        t_pair[_sl(nd, ax, 0)] = lo * first
        t_pair[_sl(nd, ax, -1)] = hi * last
        if np.any(t_lin <= 0.0) or np.any(t_pair <= 0.0):
            raise ConstitutiveViolationError(
                f"non-positive face temperature on axis {ax}"
            )
        lin.append(t_lin)
        pair.append(t_pair)
    return lin, pair


def modulators(coe, forces, model, temperature_trace: BoundaryField) -> Modulators:
    """Build the stage modulators from co-energy fields and their gradients.

    ``temperature_trace`` supplies the boundary-face temperatures; it
    must be the same trace field the forces were built with.
    """
    grad_T, grad_mu = forces
    grid = coe.temperature.grid
    if len(grad_mu) != len(model.diffusivities):
        raise SpeciesCountError("forces and model disagree on the species count")
    lin, pair = _face_temperature_arrays(coe.temperature, temperature_trace)
    lam = model.conductivity
    r_s = FaceField(
        grid,
        tuple(lam * grad_T.components[ax] / pair[ax] for ax in range(grid.dim)),
    )
    r_c = tuple(
        FaceField(
            grid,
            tuple(d * gm.components[ax] / lin[ax] for ax in range(grid.dim)),
        )
        for d, gm in zip(model.diffusivities, grad_mu)
    )
    t_face = FaceField(grid, tuple(lin))
    return Modulators(
        r_s=r_s,
        r_c=r_c,
        face_temperature=t_face,
        grad_temperature=grad_T,
        grad_potentials=tuple(grad_mu),
    )


def _interp_to_faces(phi: ScalarField, trace: BoundaryField) -> FaceField:
    """Arithmetic mean across interior faces, prescribed trace on the boundary."""
    g = phi.grid
    vals = phi.values
    comps = []
    for ax in range(g.dim):
        nd = g.dim
        out = np.empty(g.face_shape(ax))
        left = vals[_sl(nd, ax, slice(0, -1))]
        right = vals[_sl(nd, ax, slice(1, None))]
        out[_sl(nd, ax, slice(1, -1))] = 0.5 * (left + right)
        out[_sl(nd, ax, 0)] = trace.sides[(ax, 0)]
        out[_sl(nd, ax, -1)] = trace.sides[(ax, 1)]
        comps.append(out)
    return FaceField(g, tuple(comps))


def _face_to_cell(products, grid: MimeticGrid) -> np.ndarray:
    """Adjoint transfer of per-face products to cells, interior faces only.

    Interior cells get the mean of their two face values per axis;
    boundary-adjacent cells get half of their single interior face
    value.  Boundary faces never contribute.
    """
    out = np.zeros(grid.extents)
    nd = grid.dim
    for ax in range(nd):
        p = np.array(products[ax], dtype=float)
        p[_sl(nd, ax, 0)] = 0.0
        p[_sl(nd, ax, -1)] = 0.0
        lo = p[_sl(nd, ax, slice(0, -1))]
        hi = p[_sl(nd, ax, slice(1, None))]
        out += 0.5 * (lo + hi)
    return out


def _mul(a: FaceField, b: FaceField) -> FaceField:
    return FaceField(
        a.grid,
        tuple(a.components[ax] * b.components[ax] for ax in range(a.grid.dim)),
    )


def _split_effort(e):
    if isinstance(e, CoEnergyFields):
        return e.temperature, e.chemical_potentials
    e_T, e_mu = e
    return e_T, tuple(e_mu)


def apply_psi(
    e_T: ScalarField, mods: Modulators, grid: MimeticGrid, trace: BoundaryField
) -> ScalarField:
    """Conduction part of the entropy equation.

    Returns avg(r_s * grad(e_T)) + div(r_s * E(e_T)) where E uses the
    given boundary trace.  With zero traces this map is skew under the
    volume quadratures; with nonzero traces the defect is the boundary
    quadrature pairing one trace factor with one adjacent-cell factor.
    """
    ghat = grad(e_T, trace)
    produced = _face_to_cell(
        [mods.r_s.components[ax] * ghat.components[ax] for ax in range(grid.dim)],
        grid,
    )
    carried = div(_mul(mods.r_s, _interp_to_faces(e_T, trace)))
    return ScalarField(grid, produced + carried.values)


def apply_jglob(e, mods: Modulators, grid: MimeticGrid, traces: CoEnergyTraces):
    """Apply the full modulated structure to a co-energy input.

    ``e`` is either a CoEnergyFields bundle or a ``(e_T, e_mu_tuple)``
    pair (the probe path needs inputs a physical co-energy field could
    never be).  Returns ``(cdots, sdot)``.
    """
    e_T, e_mu = _split_effort(e)
    n = mods.n_species
    if len(e_mu) != n or traces.n_species != n:
        raise SpeciesCountError(
            f"operator carries {n} species, effort {len(e_mu)}, traces {traces.n_species}"
        )
    interp_T = _interp_to_faces(e_T, traces.temperature)
    cdots = tuple(div(_mul(mods.r_c[i], interp_T)) for i in range(n))

    sdot_vals = np.zeros(grid.extents)
    for i in range(n):
        gmu = grad(e_mu[i], traces.chemical_potentials[i])
        sdot_vals += _face_to_cell(
            [
                mods.r_c[i].components[ax] * gmu.components[ax]
                for ax in range(grid.dim)
            ],
            grid,
        )
    ghT = grad(e_T, traces.temperature)
    sdot_vals += _face_to_cell(
        [mods.r_s.components[ax] * ghT.components[ax] for ax in range(grid.dim)],
        grid,
    )
    sdot_vals += div(_mul(mods.r_s, interp_T)).values
    return cdots, ScalarField(grid, sdot_vals)


def factorized_jglob(e, mods: Modulators, grid: MimeticGrid, traces: CoEnergyTraces):
    """Same output as apply_jglob, composed through the factored maps.

    The species block runs as divergence-after-modulation and the
    entropy contribution as the negated adjoint pair: gradients of the
    potentials are modulated and transferred back to cells.  Same
    stencils, different composition order.
    """
    e_T, e_mu = _split_effort(e)
    n = mods.n_species
    if len(e_mu) != n or traces.n_species != n:
        raise SpeciesCountError("species counts disagree")

    def modulate(i: int, theta: ScalarField) -> FaceField:
        return _mul(mods.r_c[i], _interp_to_faces(theta, traces.temperature))

    def neg_gradient(i: int, d_i: ScalarField) -> FaceField:
        gout = grad(d_i, traces.chemical_potentials[i])
        return FaceField(grid, tuple(-c for c in gout.components))

    def collect(face_fields) -> ScalarField:
        vals = np.zeros(grid.extents)
        for i, ff in enumerate(face_fields):
            vals += _face_to_cell(
                [
                    mods.r_c[i].components[ax] * ff.components[ax]
                    for ax in range(grid.dim)
                ],
                grid,
            )
        return ScalarField(grid, vals)

    cdots = tuple(div(modulate(i, e_T)) for i in range(n))
    downhill = collect([neg_gradient(i, e_mu[i]) for i in range(n)])
    psi_part = apply_psi(e_T, mods, grid, traces.temperature)
    sdot = ScalarField(grid, psi_part.values - downhill.values)
    return cdots, sdot


def entropy_production(coe: CoEnergyFields, forces, model):
    """Cell-centered entropy production rates, nonnegative by construction.

    Each cell value is the interior-face average of modulator times
    driving force, which is gamma * ghat^2 per face, so no cell can go
    negative in exact or floating arithmetic.
    """
    grad_T, grad_mu = forces
    grid = coe.temperature.grid
    T = coe.temperature.values
    if np.any(T <= 0.0):
        raise ConstitutiveViolationError("non-positive cell temperature")
    nd = grid.dim
    lam = model.conductivity

    lin, pair = [], []
    for ax in range(nd):
        left = T[_sl(nd, ax, slice(0, -1))]
        right = T[_sl(nd, ax, slice(1, None))]
        harm = 2.0 * left * right / (left + right)
        lin.append(harm)
        pair.append(harm * harm)

    def interior(ff: FaceField, ax):
        return ff.components[ax][_sl(nd, ax, slice(1, -1))]

    sigma_products = []
    for ax in range(nd):
        p = np.zeros(grid.face_shape(ax))
        gT = interior(grad_T, ax)
        p[_sl(nd, ax, slice(1, -1))] = (lam * gT / pair[ax]) * gT
        sigma_products.append(p)
    sigma_s = ScalarField(grid, _face_to_cell(sigma_products, grid))

    sigma_c = []
    for d, gm in zip(model.diffusivities, grad_mu):
        per_axis = []
        for ax in range(nd):
            p = np.zeros(grid.face_shape(ax))
            gmu = interior(gm, ax)
            p[_sl(nd, ax, slice(1, -1))] = (d * gmu / lin[ax]) * gmu
            per_axis.append(p)
        sigma_c.append(ScalarField(grid, _face_to_cell(per_axis, grid)))
    return sigma_s, tuple(sigma_c)


def fluxes(mods: Modulators, model) -> FluxSet:
    """Physical fluxes from the frozen modulators.

    The entropy flux is computed as the product -face_temperature * r_s
    so that identity holds exactly fieldwise; the heat flux comes
    straight from the temperature gradient.
    """
    grid = mods.r_s.grid
    lam = model.conductivity
    heat = FaceField(
        grid, tuple(-lam * c for c in mods.grad_temperature.components)
    )
    entropy = FaceField(
        grid,
        tuple(
            -(mods.face_temperature.components[ax] * mods.r_s.components[ax])
            for ax in range(grid.dim)
        ),
    )
    species = tuple(
        FaceField(
            grid,
            tuple(
                -(mods.face_temperature.components[ax] * rc.components[ax])
                for ax in range(grid.dim)
            ),
        )
        for rc in mods.r_c
    )
    return FluxSet(heat=heat, entropy=entropy, species=species)


@dataclass
class AssembledStructure:
    """The frozen structure for one stage: row actions plus boundary functionals.

    ``species_row(i, e_T)`` and ``entropy_row(e_mu, e_T)`` apply the
    block rows.  The boundary functionals return the boundary
    quadratures those rows generate inside energy and entropy balances;
    audits use them so the balance bookkeeping and the operator share
    one set of numbers.
    """

    grid: MimeticGrid
    mods: Modulators
    traces: CoEnergyTraces

    def species_row(self, i: int, e_T: ScalarField) -> ScalarField:
        interp_T = _interp_to_faces(e_T, self.traces.temperature)
        return div(_mul(self.mods.r_c[i], interp_T))

    def entropy_row(self, e_mu, e_T: ScalarField) -> ScalarField:
        _, sdot = apply_jglob((e_T, tuple(e_mu)), self.mods, self.grid, self.traces)
        return sdot

    def apply(self, e):
        return apply_jglob(e, self.mods, self.grid, self.traces)

    def _boundary_sum(self, face_value) -> float:
        total = 0.0
        g = self.grid
        nd = g.dim
        for ax in range(nd):
            m = g.boundary_measure(ax)
            for side, sign in ((0, -1.0), (1, 1.0)):
                idx = _sl(nd, ax, 0 if side == 0 else -1)
                total += m * sign * float(np.sum(face_value(ax, side, idx)))
        return total

    def thermal_boundary_power(self, adjacent_T: BoundaryField) -> float:
        """Boundary quadrature sum_b m n r_s tau_T T_adj (energy balance term)."""
        r = self.mods.r_s
        tau = self.traces.temperature
        return self._boundary_sum(
            lambda ax, side, idx: r.components[ax][idx]
            * tau.sides[(ax, side)]
            * adjacent_T.sides[(ax, side)]
        )

    def thermal_entropy_boundary(self) -> float:
        """Boundary quadrature sum_b m n r_s tau_T (entropy balance term)."""
        r = self.mods.r_s
        tau = self.traces.temperature
        return self._boundary_sum(
            lambda ax, side, idx: r.components[ax][idx] * tau.sides[(ax, side)]
        )

    def species_boundary_power(self, i: int, adjacent_mu: BoundaryField) -> float:
        """Boundary quadrature sum_b m n r_ci tau_T mu_adj (energy balance term)."""
        r = self.mods.r_c[i]
        tau = self.traces.temperature
        return self._boundary_sum(
            lambda ax, side, idx: r.components[ax][idx]
            * tau.sides[(ax, side)]
            * adjacent_mu.sides[(ax, side)]
        )


def assemble_structure(mods, grid, traces) -> AssembledStructure:
    return AssembledStructure(grid=grid, mods=mods, traces=traces)


def assemble_dense(mods: Modulators, grid: MimeticGrid, weighted: bool = True):
    """Probe the full operator with unit vectors under zero traces.

    Layout stacks species efforts first and temperature last, matching
    the state stacking.  With ``weighted`` the rows are scaled by the
    cell measure so the skew test runs in the quadrature inner product.
    """
    n = mods.n_species
    nc = grid.n_cells
    size = (n + 1) * nc
    zero_traces = CoEnergyTraces.zeros(grid, n)
    A = np.empty((size, size))
    for k in range(size):
        flat = np.zeros(size)
        flat[k] = 1.0
        e_mu = tuple(
            ScalarField(grid, flat[i * nc : (i + 1) * nc].reshape(grid.extents))
            for i in range(n)
        )
        e_T = ScalarField(grid, flat[n * nc :].reshape(grid.extents))
        cdots, sdot = apply_jglob((e_T, e_mu), mods, grid, zero_traces)
        col = np.concatenate(
            [c.values.ravel() for c in cdots] + [sdot.values.ravel()]
        )
        A[:, k] = col
    if weighted:
        A = grid.cell_measure * A
    return A


def write_dense_csv(matrix: np.ndarray, path) -> None:
    """Dump nonzero entries of an assembled operator as row,col,value CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        rows, cols = np.nonzero(matrix)
        for r, c in zip(rows, cols):
            w.writerow([int(r), int(c), repr(float(matrix[r, c]))])
