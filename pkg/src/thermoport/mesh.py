"""Staggered grids with an exact discrete integration-by-parts identity.

Scalars are stored at cell centers.  Vector quantities are stored as
normal components on cell faces, one array per axis, boundary faces
included.  Boundary data enters through trace fields holding one value
per boundary face, oriented by the outward normal where a sign matters.

The discrete gradient uses plain differences across interior faces and
half-cell one-sided differences at boundary faces::

    interior face:   (phi_R - phi_L) / h
    low  boundary:   (phi_first - trace) * 2/h
    high boundary:   (trace - phi_last)  * 2/h

The discrete divergence is the conservative difference of face values
over each cell.  Cell volumes provide the scalar quadrature.  Faces
carry one cell volume per interior face and half a cell volume per
boundary face.  Under these weights the combination

    <phi, div f> + <grad phi, f> - sum_Gamma trace(phi) (f . n) m_face

telescopes to zero for every choice of fields, not merely to O(h^p).
The rest of the package treats this identity as a contract: energy and
entropy audits are exact in space because of it, so ``ibp_residual``
is tested to rounding error rather than to a truncation tolerance.

Layout in 2D, Nx by Ny cells: axis-0 faces form an (Nx+1, Ny) array,
axis-1 faces an (Nx, Ny+1) array.  Spacing is uniform per axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridShapeError",
    "MimeticGrid",
    "ScalarField",
    "FaceField",
    "BoundaryField",
    "grad",
    "div",
    "adjacent_cell_values",
    "boundary_integral",
    "ibp_residual",
    "cell_inner",
    "face_inner",
    "face_weights",
    "normal_trace",
    "outward_sign",
    "write_scalar_csv",
    "read_scalar_csv",
]


class GridShapeError(ValueError):
    """A field does not fit the grid it is used with."""


def _axis_slice(ndim: int, axis: int, index):
    sl = [slice(None)] * ndim
    sl[axis] = index
    return tuple(sl)


def outward_sign(side: int) -> float:
    """Outward-normal sign of a boundary side: -1 at the low end, +1 at the high end."""
    return -1.0 if side == 0 else 1.0


@dataclass(frozen=True)
class MimeticGrid:
    """Uniform structured grid on a 1D interval or a 2D box.

    ``extents`` counts cells per axis and ``bounds`` gives the closed
    interval per axis.  Spacing and measures are derived, never stored.
    """

    extents: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        extents = tuple(int(n) for n in self.extents)
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "bounds", bounds)
        if len(extents) not in (1, 2):
            raise GridShapeError(
                f"only 1D and 2D grids are supported, got {len(extents)} axes"
            )
        if len(bounds) != len(extents):
            raise GridShapeError("bounds and extents disagree on the number of axes")
        for ax, n in enumerate(extents):
            if n < 2:
                raise GridShapeError(f"axis {ax} needs at least 2 cells, got {n}")
            a, b = bounds[ax]
            if not b > a:
                raise GridShapeError(f"axis {ax} has an empty interval [{a}, {b}]")

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (b - a) / n for (a, b), n in zip(self.bounds, self.extents)
        )

    @property
    def cell_measure(self) -> float:
        return math.prod(self.spacing)

    @property
    def n_cells(self) -> int:
        return math.prod(self.extents)

    def face_shape(self, axis: int) -> tuple[int, ...]:
        shape = list(self.extents)
        shape[axis] += 1
        return tuple(shape)

    def boundary_shape(self, axis: int) -> tuple[int, ...]:
        """Shape of the trace array on either side normal to ``axis``."""
        return tuple(n for ax, n in enumerate(self.extents) if ax != axis)

    def boundary_measure(self, axis: int) -> float:
        """Measure of one boundary face normal to ``axis`` (1 in 1D)."""
        return math.prod(
            h for ax, h in enumerate(self.spacing) if ax != axis
        )

    def cell_centers(self, axis: int) -> np.ndarray:
        a, _ = self.bounds[axis]
        h = self.spacing[axis]
        return a + (np.arange(self.extents[axis]) + 0.5) * h

    def face_positions(self, axis: int) -> np.ndarray:
        a, _ = self.bounds[axis]
        h = self.spacing[axis]
        return a + np.arange(self.extents[axis] + 1) * h

    def meshed_centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays shaped like ``extents`` (ij indexing)."""
        axes = [self.cell_centers(ax) for ax in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))


def _require_same_grid(a: MimeticGrid, b: MimeticGrid) -> None:
    if a != b:
        raise GridShapeError("fields live on different grids")


@dataclass
class ScalarField:
    """One value per cell."""

    grid: MimeticGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.extents:
            raise GridShapeError(
                f"cell data of shape {values.shape} on a grid of {self.grid.extents} cells"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite cell values")
        self.values = values

    @classmethod
    def zeros(cls, grid: MimeticGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.extents))

    @classmethod
    def full(cls, grid: MimeticGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.extents, float(value)))

    @classmethod
    def from_function(cls, grid: MimeticGrid, fn) -> "ScalarField":
        vals = np.broadcast_to(
            np.asarray(fn(*grid.meshed_centers()), dtype=float), grid.extents
        )
        return cls(grid, vals.copy())

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class FaceField:
    """Normal components on every face, one array per axis, boundary included."""

    grid: MimeticGrid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.dim:
            raise GridShapeError("one component array per axis is required")
        for ax, c in enumerate(comps):
            if c.shape != self.grid.face_shape(ax):
                raise GridShapeError(
                    f"axis {ax} faces have shape {self.grid.face_shape(ax)}, got {c.shape}"
                )
            if not np.all(np.isfinite(c)):
                raise ValueError(f"non-finite face values on axis {ax}")
        self.components = comps

    @classmethod
    def zeros(cls, grid: MimeticGrid) -> "FaceField":
        return cls(grid, tuple(np.zeros(grid.face_shape(ax)) for ax in range(grid.dim)))

    def copy(self) -> "FaceField":
        return FaceField(self.grid, tuple(c.copy() for c in self.components))


@dataclass
class BoundaryField:
    """One value per boundary face, keyed by (axis, side); side 0 is the low end."""

    grid: MimeticGrid
    sides: dict

    def __post_init__(self):
        wanted = {(ax, side) for ax in range(self.grid.dim) for side in (0, 1)}
        if set(self.sides) != wanted:
            raise GridShapeError(f"boundary data must cover exactly the sides {sorted(wanted)}")
        fixed = {}
        for (ax, side), arr in self.sides.items():
            arr = np.asarray(arr, dtype=float)
            shape = self.grid.boundary_shape(ax)
            if arr.shape != shape:
                arr = np.broadcast_to(arr, shape).copy()
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite trace on side {(ax, side)}")
            fixed[(ax, side)] = arr
        self.sides = fixed

    @classmethod
    def zeros(cls, grid: MimeticGrid) -> "BoundaryField":
        return cls.full(grid, 0.0)

    @classmethod
    def full(cls, grid: MimeticGrid, value: float) -> "BoundaryField":
        sides = {
            (ax, side): np.full(grid.boundary_shape(ax), float(value))
            for ax in range(grid.dim)
            for side in (0, 1)
        }
        return cls(grid, sides)

    def n_faces(self) -> int:
        return sum(int(np.prod(a.shape)) if a.shape else 1 for a in self.sides.values())

    def copy(self) -> "BoundaryField":
        return BoundaryField(self.grid, {k: v.copy() for k, v in self.sides.items()})


def grad(phi: ScalarField, trace: BoundaryField) -> FaceField:
    """Discrete gradient of a cell field with prescribed boundary traces.

    Interior faces carry the centered difference of the two adjacent
    cells; boundary faces carry the one-sided half-cell difference
    against the trace.  Components point along the positive axis.
    """
    g = phi.grid
    _require_same_grid(g, trace.grid)
    vals = phi.values
    comps = []
    for ax in range(g.dim):
        h = g.spacing[ax]
        out = np.empty(g.face_shape(ax))
        out[_axis_slice(g.dim, ax, slice(1, -1))] = np.diff(vals, axis=ax) / h
        lo = trace.sides[(ax, 0)]
        hi = trace.sides[(ax, 1)]
        first = vals[_axis_slice(g.dim, ax, 0)]
        last = vals[_axis_slice(g.dim, ax, -1)]
        out[_axis_slice(g.dim, ax, 0)] = (first - lo) * (2.0 / h)
        out[_axis_slice(g.dim, ax, -1)] = (hi - last) * (2.0 / h)
        comps.append(out)
    return FaceField(g, tuple(comps))


def div(f: FaceField) -> ScalarField:
    """Discrete divergence: per-cell conservative difference of face values."""
    g = f.grid
    out = np.zeros(g.extents)
    for ax in range(g.dim):
        out += np.diff(f.components[ax], axis=ax) / g.spacing[ax]
    return ScalarField(g, out)


def face_weights(grid: MimeticGrid) -> FaceField:
    """Quadrature weights of the face inner product.

    Every interior face weighs one cell volume, every boundary face half
    of one.  These are the weights under which div and grad are exact
    adjoints of each other up to the boundary quadrature.
    """
    vol = grid.cell_measure
    comps = []
    for ax in range(grid.dim):
        w = np.full(grid.face_shape(ax), vol)
        w[_axis_slice(grid.dim, ax, 0)] = vol / 2.0
        w[_axis_slice(grid.dim, ax, -1)] = vol / 2.0
        comps.append(w)
    return FaceField(grid, tuple(comps))


def cell_inner(a: ScalarField, b: ScalarField) -> float:
    """Volume-weighted inner product over cells, summed in compensated fixed order."""
    _require_same_grid(a.grid, b.grid)
    prods = (a.values * b.values).ravel()
    return a.grid.cell_measure * math.fsum(prods.tolist())


def face_inner(a: FaceField, b: FaceField) -> float:
    """Weighted inner product over all faces of all axes."""
    _require_same_grid(a.grid, b.grid)
    w = face_weights(a.grid)
    terms = []
    for ax in range(a.grid.dim):
        terms.extend(
            (w.components[ax] * a.components[ax] * b.components[ax]).ravel().tolist()
        )
    return math.fsum(terms)


def boundary_integral(trace_a: BoundaryField, trace_b: BoundaryField) -> float:
    """Quadrature of trace_a * trace_b over the boundary.

    Each boundary face contributes its tangential measure (1 in 1D).
    Accumulation runs in a fixed side order with compensated summation
    so results are independent of evaluation order.
    """
    g = trace_a.grid
    _require_same_grid(g, trace_b.grid)
    terms = []
    for key in sorted(trace_a.sides):
        ax, _side = key
        m = g.boundary_measure(ax)
        prod = np.asarray(trace_a.sides[key] * trace_b.sides[key], dtype=float)
        terms.extend((m * prod).ravel().tolist())
    return math.fsum(terms)


def adjacent_cell_values(phi: ScalarField) -> BoundaryField:
    """Restriction of a cell field to the layer of cells touching the boundary.

    This is not a trace in the interpolated sense; it is the raw value
    of the cell next to each boundary face, which is what the balance
    quadratures pair against prescribed traces.
    """
    g = phi.grid
    sides = {}
    for ax in range(g.dim):
        first = np.asarray(phi.values[_axis_slice(g.dim, ax, 0)]).copy()
        last = np.asarray(phi.values[_axis_slice(g.dim, ax, -1)]).copy()
        sides[(ax, 0)] = first
        sides[(ax, 1)] = last
    return BoundaryField(g, sides)


def normal_trace(f: FaceField) -> BoundaryField:
    """Outward normal component f.n of a face field on the boundary."""
    g = f.grid
    sides = {}
    for ax in range(g.dim):
        lo = -np.asarray(f.components[ax][_axis_slice(g.dim, ax, 0)])
        hi = np.asarray(f.components[ax][_axis_slice(g.dim, ax, -1)]).copy()
        sides[(ax, 0)] = lo
        sides[(ax, 1)] = hi
    return BoundaryField(g, sides)


def ibp_residual(
    phi: ScalarField,
    f: FaceField,
    phi_trace: BoundaryField,
    f_normal_trace: BoundaryField,
) -> float:
    """Defect of the discrete integration-by-parts identity.

    Returns ``<phi, div f> + <grad phi, f> - boundary_integral(phi_trace,
    f_normal_trace)`` where ``f_normal_trace`` holds the outward normal
    component of ``f`` on the boundary.  For traces consistent with the
    face field this is zero for all inputs up to rounding; callers may
    treat anything above 1e-13 times the term scale as a broken grid.
    """
    vol = cell_inner(phi, div(f))
    fac = face_inner(grad(phi, phi_trace), f)
    bdy = boundary_integral(phi_trace, f_normal_trace)
    return vol + fac - bdy


def write_scalar_csv(field: ScalarField, path) -> None:
    """Export a cell field as CSV with explicit integer cell indices.

    Header is ``axis0_index,axis1_index,value``; the axis1 column is
    omitted on 1D grids.  Values are written with repr so a re-read is
    bitwise faithful.
    """
    g = field.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if g.dim == 1:
            w.writerow(["axis0_index", "value"])
            for i, v in enumerate(field.values):
                w.writerow([i, repr(float(v))])
        else:
            w.writerow(["axis0_index", "axis1_index", "value"])
            for i in range(g.extents[0]):
                for j in range(g.extents[1]):
                    w.writerow([i, j, repr(float(field.values[i, j]))])


def read_scalar_csv(path, grid: MimeticGrid) -> ScalarField:
    """Read a cell field written by :func:`write_scalar_csv`."""
    vals = np.empty(grid.extents)
    filled = np.zeros(grid.extents, dtype=bool)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if grid.dim == 1 and header != ["axis0_index", "value"]:
            raise ValueError(f"unexpected header {header!r} for a 1D field")
        if grid.dim == 2 and header != ["axis0_index", "axis1_index", "value"]:
            raise ValueError(f"unexpected header {header!r} for a 2D field")
        for row in r:
            if grid.dim == 1:
                i, v = int(row[0]), float(row[1])
                vals[i] = v
                filled[i] = True
            else:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
                vals[i, j] = v
                filled[i, j] = True
    if not filled.all():
        raise ValueError("field file does not cover every cell")
    return ScalarField(grid, vals)
