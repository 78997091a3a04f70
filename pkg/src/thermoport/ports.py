"""Boundary port variables: 1D synthesis algebra and ND port pairs.

The 1D side packs the lumped structure data (P0, P1, G0, G1, g_s) into
the symmetric port matrix

    P_e = scale * [ P1   0   G1   0  ]
                  [ 0    0   0   g_s ]
                  [ G1'  0   0    0  ]
                  [ 0   g_s  0    0  ]

with row blocks ordered species, entropy, auxiliary, boundary-generator.
A reduction basis M spans its columns, and a validated pair (Xi1, Xi2)
turns the reduced matrix into input and output maps W_B, W_C acting on
the reduced boundary efforts of the two ends.

Two scaling conventions are fixed here rather than left implicit.  The
block matrix carries ``PE_SCALE = 1/2``, and the reduced matrix is
normalized by its spectral radius before entering the W formulas.  That
pair of choices makes the pure-conduction case come out as the
canonical half-swap matrix with ports (conduction entropy flux at each
end, temperature at each end), which is the anchor every downstream
check is calibrated against.

The ND side does not use a W parametrization at all; it exposes the
boundary (input, output) pairs directly: (-entropy_flux . n, T) for
energy accounting, (-heat_flux . n, 1/T) for entropy accounting, and
(-species_flux . n, mu_i) per species.  Inputs are built from boundary
data through the flux laws; outputs are read on the interior side of
each face, so the pair powers reproduce the balance quadratures of the
assembled structure to rounding error.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

from .mesh import BoundaryField, adjacent_cell_values, boundary_integral, normal_trace

__all__ = [
    "PE_SCALE",
    "InvalidStructureError",
    "XiValidationError",
    "RankAmbiguityError",
    "PortDimensionError",
    "StructureMatrices1D",
    "PortSynthesis",
    "PortPair",
    "NDPortPairs",
    "PortRecord",
    "build_Pe",
    "validate_xi",
    "synthesize_ports",
    "modified_effort",
    "nd_port_pairs",
    "read_structure_csv",
    "read_xi_csv",
    "write_port_matrices_csv",
]

PE_SCALE = 0.5

XI_TOL = 1e-13
STRUCTURE_TOL = 1e-14
RANK_TOL = 1e-12
AMBIGUITY_WINDOW = (1e-14, 1e-10)


class InvalidStructureError(ValueError):
    """Structure matrices break a symmetry or shape requirement."""


class XiValidationError(ValueError):
    """The (Xi1, Xi2) pair fails the skew or isometry condition."""


class RankAmbiguityError(ValueError):
    """A singular value sits in the window where rank cannot be decided."""


class PortDimensionError(ValueError):
    """Vector or matrix dimensions do not fit the synthesized ports."""


@dataclass
class StructureMatrices1D:
    """Lumped structure data: P0 skew, P1 symmetric, couplings, g_s."""

    P0: np.ndarray
    P1: np.ndarray
    G0: np.ndarray
    G1: np.ndarray
    g_s: float

    def __post_init__(self):
        self.P0 = np.asarray(self.P0, dtype=float)
        self.P1 = np.asarray(self.P1, dtype=float)
        self.G0 = np.asarray(self.G0, dtype=float)
        self.G1 = np.asarray(self.G1, dtype=float)
        self.g_s = float(self.g_s)
        if self.P0.ndim != 2 or self.P0.shape[0] != self.P0.shape[1]:
            raise InvalidStructureError(f"P0 must be square, got {self.P0.shape}")
        n = self.P0.shape[0]
        if self.P1.shape != (n, n):
            raise InvalidStructureError(
                f"P1 must be {n}x{n} to match P0, got {self.P1.shape}"
            )
        if self.G0.ndim != 2 or self.G0.shape[0] != n:
            raise InvalidStructureError(f"G0 must have {n} rows, got {self.G0.shape}")
        if self.G1.shape != self.G0.shape:
            raise InvalidStructureError(
                f"G0 and G1 must share a shape, got {self.G0.shape} and {self.G1.shape}"
            )
        skew = np.abs(self.P0 + self.P0.T).max(initial=0.0)
        if skew > STRUCTURE_TOL * max(1.0, np.abs(self.P0).max(initial=0.0)):
            raise InvalidStructureError(f"P0 is not skew, defect {skew:.3e}")
        sym = np.abs(self.P1 - self.P1.T).max(initial=0.0)
        if sym > STRUCTURE_TOL * max(1.0, np.abs(self.P1).max(initial=0.0)):
            raise InvalidStructureError(f"P1 is not symmetric, defect {sym:.3e}")

    @property
    def n(self) -> int:
        return self.P0.shape[0]

    @property
    def m(self) -> int:
        return self.G0.shape[1]


def build_Pe(sm: StructureMatrices1D, scale: float = PE_SCALE) -> np.ndarray:
    """Assemble the symmetric port matrix from the structure blocks.

    Stacking order is species rows, the entropy row, auxiliary rows,
    and the boundary-generator row, giving an (n+m+2) square matrix.
    Zero blocks stay exactly zero.
    """
    n, m = sm.n, sm.m
    size = n + m + 2
    s_row = n
    g_row = n + m + 1
    Pe = np.zeros((size, size))
    Pe[:n, :n] = scale * sm.P1
    Pe[:n, n + 1 : n + 1 + m] = scale * sm.G1
    Pe[n + 1 : n + 1 + m, :n] = scale * sm.G1.T
    Pe[s_row, g_row] = scale * sm.g_s
    Pe[g_row, s_row] = scale * sm.g_s
    return Pe


def validate_xi(Xi1, Xi2, tol: float = XI_TOL) -> tuple[float, float]:
    """Check the defining conditions of an admissible (Xi1, Xi2) pair.

    Returns (skew residual, isometry residual); raises when either
    exceeds ``tol``.
    """
    Xi1 = np.asarray(Xi1, dtype=float)
    Xi2 = np.asarray(Xi2, dtype=float)
    if Xi1.ndim != 2 or Xi1.shape[0] != Xi1.shape[1] or Xi1.shape != Xi2.shape:
        raise PortDimensionError(
            f"Xi1 and Xi2 must be square with equal shape, got {Xi1.shape} and {Xi2.shape}"
        )
    skew = np.abs(Xi2.T @ Xi1 + Xi1.T @ Xi2).max(initial=0.0)
    iso = np.abs(Xi1.T @ Xi1 + Xi2.T @ Xi2 - np.eye(Xi1.shape[0])).max(initial=0.0)
    if skew > tol or iso > tol:
        raise XiValidationError(
            f"Xi conditions violated: skew residual {skew:.3e}, isometry residual {iso:.3e}"
        )
    return float(skew), float(iso)


@dataclass
class PortSynthesis:
    """Everything the 1D port construction produces, kept for audit."""

    P_e: np.ndarray
    rank_k: int
    M: np.ndarray
    M_p: np.ndarray
    P_ep: np.ndarray
    Xi1: np.ndarray
    Xi2: np.ndarray
    W_B: np.ndarray
    W_C: np.ndarray
    xi_skew_residual: float
    xi_isometry_residual: float
    column_space_defect: float

    def evaluate(self, e_b, e_a) -> tuple[np.ndarray, np.ndarray]:
        """Inputs v and outputs y from the two boundary efforts.

        ``e_b`` and ``e_a`` are full-length modified efforts at the
        high and low end; they are reduced through M_p and stacked
        high end first, matching the sign conventions of W_B.
        """
        e_b = np.asarray(e_b, dtype=float).ravel()
        e_a = np.asarray(e_a, dtype=float).ravel()
        size = self.P_e.shape[0]
        if e_b.shape != (size,) or e_a.shape != (size,):
            raise PortDimensionError(
                f"efforts must have length {size}, got {e_b.shape} and {e_a.shape}"
            )
        z = np.concatenate([self.M_p @ e_b, self.M_p @ e_a])
        return self.W_B @ z, self.W_C @ z

    def report(self) -> str:
        return "\n".join(
            [
                f"rank k = {self.rank_k}",
                f"xi skew residual = {self.xi_skew_residual:.3e}",
                f"xi isometry residual = {self.xi_isometry_residual:.3e}",
                f"column space defect = {self.column_space_defect:.3e}",
                f"W_B shape = {self.W_B.shape[0]} x {self.W_B.shape[1]}",
                f"W_C shape = {self.W_C.shape[0]} x {self.W_C.shape[1]}",
            ]
        )


def synthesize_ports(sm: StructureMatrices1D, Xi1, Xi2) -> PortSynthesis:
    """Build the reduced port maps W_B, W_C from structure data and Xi.

    Rank detection runs on a column-pivoted QR of P_e with threshold
    ``RANK_TOL`` times the spectral norm; a singular value falling in
    the open ambiguity window raises instead of silently rounding the
    rank either way.  The basis M holds the selected columns of P_e,
    unit-normalized and ordered by leading nonzero row so the reduced
    effort layout is stable under pivoting accidents.
    """
    skew_res, iso_res = validate_xi(Xi1, Xi2)
    Xi1 = np.asarray(Xi1, dtype=float)
    Xi2 = np.asarray(Xi2, dtype=float)
    Pe = build_Pe(sm)
    size = Pe.shape[0]

    svals = np.linalg.svd(Pe, compute_uv=False)
    norm2 = float(svals[0]) if svals.size else 0.0
    if norm2 == 0.0:
        k = 0
    else:
        lo, hi = AMBIGUITY_WINDOW
        inside = (svals > lo * norm2) & (svals < hi * norm2)
        if np.any(inside):
            raise RankAmbiguityError(
                "singular values "
                f"{svals[inside].tolist()} fall inside the ambiguity window "
                f"({lo:.0e}, {hi:.0e}) * {norm2:.3e}"
            )
        _, R, piv = qr(Pe, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        k = int(np.count_nonzero(diag > RANK_TOL * norm2))

    if k == 0:
        M = np.zeros((size, 0))
        M_p = np.zeros((0, size))
        P_ep = np.zeros((0, 0))
        W_B = np.zeros((0, 0))
        W_C = np.zeros((0, 0))
        defect = float(np.abs(Pe).max(initial=0.0))
        return PortSynthesis(
            P_e=Pe,
            rank_k=0,
            M=M,
            M_p=M_p,
            P_ep=P_ep,
            Xi1=Xi1,
            Xi2=Xi2,
            W_B=W_B,
            W_C=W_C,
            xi_skew_residual=skew_res,
            xi_isometry_residual=iso_res,
            column_space_defect=defect,
        )

    if Xi1.shape != (k, k):
        raise PortDimensionError(
            f"Xi matrices are {Xi1.shape[0]}x{Xi1.shape[1]} but rank is {k}"
        )

    cols = []
    for j in range(k):
        c = Pe[:, piv[j]]
        cols.append(c / np.linalg.norm(c))
    leading = [int(np.argmax(np.abs(c) > RANK_TOL)) for c in cols]
    order = sorted(range(k), key=lambda j: (leading[j], j))
    M = np.column_stack([cols[j] for j in order])

    M_p = np.linalg.solve(M.T @ M, M.T)
    P_ep = M.T @ Pe @ M
    spectral = float(np.abs(np.linalg.eigvalsh(P_ep)).max())
    P_hat = P_ep / spectral

    half = 1.0 / np.sqrt(2.0)
    W_B = half * np.hstack([Xi2 + Xi1 @ P_hat, Xi2 - Xi1 @ P_hat])
    W_C = half * np.hstack([Xi1 + Xi2 @ P_hat, Xi1 - Xi2 @ P_hat])
    defect = float(np.abs(Pe - M @ (M_p @ Pe)).max())
    return PortSynthesis(
        P_e=Pe,
        rank_k=k,
        M=M,
        M_p=M_p,
        P_ep=P_ep,
        Xi1=Xi1,
        Xi2=Xi2,
        W_B=W_B,
        W_C=W_C,
        xi_skew_residual=skew_res,
        xi_isometry_residual=iso_res,
        column_space_defect=defect,
    )


def modified_effort(coe, mods, traces, model, end: str, n=None, m=None) -> np.ndarray:
    """Boundary effort vector [mu_i; T; d_i dmu_i; (lambda/T) dT] at one end.

    1D only; ``end`` is "a" (low) or "b" (high).  Entries use the trace
    temperature and the one-sided boundary gradients, which is the
    discrete version of evaluating the continuum effort on the boundary
    itself; the conduction slot therefore equals (lambda/T) dT/dz with
    T the prescribed trace.  ``n`` and ``m`` widen the species and
    auxiliary blocks with zeros when the target structure is larger
    than the physical species count (the pure-conduction structure has
    one formal slot of each).
    """
    grid = coe.temperature.grid
    if grid.dim != 1:
        raise PortDimensionError("modified efforts are defined for 1D states only")
    if end not in ("a", "b"):
        raise PortDimensionError(f"end must be 'a' or 'b', got {end!r}")
    p = len(coe.chemical_potentials)
    n = p if n is None else int(n)
    m = p if m is None else int(m)
    if n < p or m < p:
        raise PortDimensionError(
            f"target blocks ({n}, {m}) cannot hold {p} species entries"
        )
    side = 0 if end == "a" else 1
    face = 0 if end == "a" else -1

    tau = float(traces.temperature.sides[(0, side)])
    ghat_T = float(mods.grad_temperature.components[0][face])
    out = np.zeros(n + m + 2)
    for i in range(p):
        out[i] = float(traces.chemical_potentials[i].sides[(0, side)])
    out[n] = tau
    for i in range(p):
        ghat_mu = float(mods.grad_potentials[i].components[0][face])
        out[n + 1 + i] = model.diffusivities[i] * ghat_mu
    out[n + m + 1] = model.conductivity * ghat_T / tau
    return out


@dataclass
class PortPair:
    """One boundary (input, output) field pair with its power quadrature."""

    u: BoundaryField
    y: BoundaryField

    def power(self) -> float:
        return boundary_integral(self.u, self.y)


@dataclass
class NDPortPairs:
    """Boundary pairs for energy, entropy, and species bookkeeping."""

    energy: PortPair
    entropy: PortPair
    species: tuple[PortPair, ...]

    def __post_init__(self):
        self.species = tuple(self.species)


@dataclass
class PortRecord:
    """Port observations at one instant."""

    time: float
    v: np.ndarray
    y: np.ndarray
    nd_pairs: NDPortPairs | None = None

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.v.shape != self.y.shape:
            raise PortDimensionError(
                f"v and y must have equal length, got {self.v.shape} and {self.y.shape}"
            )


def _negate(bf: BoundaryField) -> BoundaryField:
    return BoundaryField(bf.grid, {k: -v for k, v in bf.sides.items()})


def _reciprocal(bf: BoundaryField) -> BoundaryField:
    return BoundaryField(bf.grid, {k: 1.0 / v for k, v in bf.sides.items()})


def nd_port_pairs(coe, mods, flux_set, grid) -> NDPortPairs:
    """Boundary port pairs in any dimension.

    Inputs are inward flux components (energy from the entropy flux,
    entropy from the heat flux, species from the mole fluxes); outputs
    are the conjugate intensities evaluated on the interior cell next
    to each face.
    """
    energy = PortPair(
        u=_negate(normal_trace(flux_set.entropy)),
        y=adjacent_cell_values(coe.temperature),
    )
    entropy = PortPair(
        u=_negate(normal_trace(flux_set.heat)),
        y=_reciprocal(adjacent_cell_values(coe.temperature)),
    )
    species = tuple(
        PortPair(
            u=_negate(normal_trace(flux_set.species[i])),
            y=adjacent_cell_values(coe.chemical_potentials[i]),
        )
        for i in range(len(flux_set.species))
    )
    return NDPortPairs(energy=energy, entropy=entropy, species=species)


_STRUCTURE_SECTIONS = ("P0", "P1", "G0", "G1", "g_s")
_XI_SECTIONS = ("Xi1", "Xi2")


def _read_sections(path, required):
    """Sectioned CSV: ``[NAME]`` header lines with comma-separated rows."""
    blocks: dict[str, list[list[float]]] = {}
    current = None
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            first = row[0].strip()
            if first.startswith("[") and first.endswith("]"):
                current = first[1:-1]
                if current not in required:
                    raise ValueError(f"unknown section [{current}]")
                if current in blocks:
                    raise ValueError(f"duplicate section [{current}]")
                blocks[current] = []
                continue
            if current is None:
                raise ValueError("matrix rows before any section header")
            blocks[current].append([float(x) for x in row])
    missing = [s for s in required if s not in blocks]
    if missing:
        raise ValueError(f"missing sections: {', '.join(missing)}")

    def matrix(name):
        rows = blocks[name]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError(f"section [{name}] is empty or ragged")
        return np.array(rows, dtype=float)

    return {name: matrix(name) for name in required}


def read_structure_csv(path) -> StructureMatrices1D:
    """Parse the structure-matrix file (sections P0, P1, G0, G1, g_s)."""
    blocks = _read_sections(path, _STRUCTURE_SECTIONS)
    gs = blocks["g_s"]
    if gs.shape != (1, 1):
        raise ValueError("section [g_s] must hold exactly one value")
    return StructureMatrices1D(
        P0=blocks["P0"],
        P1=blocks["P1"],
        G0=blocks["G0"],
        G1=blocks["G1"],
        g_s=float(gs[0, 0]),
    )


def read_xi_csv(path):
    """Parse the Xi file (sections Xi1, Xi2); returns the pair unvalidated."""
    blocks = _read_sections(path, _XI_SECTIONS)
    return blocks["Xi1"], blocks["Xi2"]


def write_port_matrices_csv(ps: PortSynthesis, path) -> None:
    """Write W_B and W_C as a sectioned CSV mirroring the input format."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for name, mat in (("W_B", ps.W_B), ("W_C", ps.W_C)):
            w.writerow([f"[{name}]"])
            for row in np.atleast_2d(mat):
                if row.size:
                    w.writerow([repr(float(x)) for x in row])
