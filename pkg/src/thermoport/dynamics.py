"""Time stepping with a thermodynamic ledger kept alongside the trajectory.

Two schemes advance the extensive state (concentrations and entropy
density): classical explicit RK4 and the implicit midpoint rule.  Both
re-evaluate the modulated structure at every stage state, so the stage
right-hand sides inherit the exact skewness and sign properties of the
spatial operator.  Every accepted step carries an AuditReport whose
balance terms are computed with the same boundary and volume quadratures
the operator itself uses; the first- and second-law residuals therefore
measure time-discretization error only, not bookkeeping drift.

Boundary conditions are grouped by side ("low"/"high" in 1D, the
axis-prefixed variants in 2D).  Each group resolves to a boundary trace
at the stage time:

* a prescribed temperature or chemical potential is used verbatim,
* a prescribed outward heat flux q sets the trace so that the one-sided
  gradient reproduces it, tau = T_adj - q h / (2 lambda),
* zero-flux copies the adjacent cell value, which makes the one-sided
  gradient an exact floating-point zero and conservation bitwise clean.

Explicit RK4 on a diffusion operator has a step-size ceiling.  Before
each step the ceiling is estimated from the current temperature range
and a Gershgorin-style bound on the discrete Laplacian; a dt above it
triggers a StabilityWarning and the step is carried out in equal
substeps below the ceiling instead of being rejected.

The entropy-balance sign convention follows the spatial operator: the
pointwise production sigma is asserted nonnegative at every evaluated
stage, while the sign of a finite Delta S over a step is only asserted
for insulated runs, where both schemes combine stage evaluations with
positive weights and the boundary term vanishes identically.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from .constitutive import (
    ConstitutiveModel,
    InvalidStateError,
    SaturationError,
    ThermoState,
    co_energy,
    total_energy,
    total_entropy,
)
from .mesh import BoundaryField, MimeticGrid, ScalarField, adjacent_cell_values
from .operators import (
    ConstitutiveViolationError,
    CoEnergyTraces,
    apply_jglob,
    assemble_structure,
    driving_forces,
    entropy_production,
    fluxes,
    modulators,
)
from .ports import PortRecord, nd_port_pairs

__all__ = [
    "THERMAL_KINDS",
    "SPECIES_KINDS",
    "MissingBoundaryError",
    "StepRejectedError",
    "StabilityWarning",
    "BoundaryRule",
    "BoundaryConditions",
    "TimeIntegrator",
    "AuditReport",
    "NodeBalance",
    "Trajectory",
    "FirstLawAudit",
    "SecondLawAudit",
    "TRAJECTORY_COLUMNS",
    "boundary_groups",
    "group_axis_side",
    "resolve_traces",
    "step",
    "integrate",
    "evaluate_node",
    "audit_first_law",
    "audit_second_law",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

THERMAL_KINDS = ("dirichlet-temperature", "neumann-heat-flux", "zero-flux")
SPECIES_KINDS = ("dirichlet-potential", "zero-flux")

SIGMA_FLOOR = -1e-14

#: Safety factor times the RK4 real-axis stability interval, divided by a
#: Gershgorin bound on the linearized diffusion operator.  The 2.5 is an
#: engineering margin under the theoretical 2.785.
RK4_STABILITY_CONSTANT = 2.5

TRAJECTORY_COLUMNS = (
    "time",
    "H",
    "S",
    "boundary_power",
    "entropy_production",
    "first_law_residual",
    "second_law_residual",
    "min_sigma",
)


class MissingBoundaryError(ValueError):
    """A boundary group required by the grid has no rule attached."""


class StepRejectedError(RuntimeError):
    """A time step could not be completed; the message carries the cause."""


class StabilityWarning(UserWarning):
    """Requested dt exceeds the explicit stability ceiling; substepping."""


def boundary_groups(grid: MimeticGrid) -> tuple[str, ...]:
    """Names of the boundary groups a grid requires rules for."""
    if grid.dim == 1:
        return ("low", "high")
    return ("x-low", "x-high", "y-low", "y-high")


def group_axis_side(grid: MimeticGrid, name: str) -> tuple[int, int]:
    groups = boundary_groups(grid)
    if name not in groups:
        raise MissingBoundaryError(
            f"unknown boundary group '{name}' (expected one of {groups})"
        )
    idx = groups.index(name)
    return idx // 2, idx % 2


@dataclass(frozen=True)
class BoundaryRule:
    """One boundary condition: a kind tag and, unless zero-flux, a signal t -> value."""

    kind: str
    signal: Optional[Callable[[float], float]] = None

    def value(self, t: float) -> float:
        return float(self.signal(t))


@dataclass
class BoundaryConditions:
    """Per-group thermal rules plus one rule map per species.

    ``thermal`` maps group name -> BoundaryRule with a thermal kind;
    ``species`` is one such map per species with species kinds.
    Validation happens against a concrete grid and species count so the
    error can name the group that is missing.
    """

    thermal: dict[str, BoundaryRule]
    species: tuple[dict[str, BoundaryRule], ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.species = tuple(dict(m) for m in self.species)
        self.thermal = dict(self.thermal)

    def validate(self, grid: MimeticGrid, n_species: int) -> None:
        groups = boundary_groups(grid)

        def check(rules, kinds, label):
            for g in groups:
                if g not in rules:
                    raise MissingBoundaryError(
                        f"{label} boundary group '{g}' has no rule"
                    )
                rule = rules[g]
                if rule.kind not in kinds:
                    raise ValueError(
                        f"{label} rule for group '{g}' has kind "
                        f"'{rule.kind}', expected one of {kinds}"
                    )
                if rule.kind != "zero-flux" and rule.signal is None:
                    raise ValueError(
                        f"{label} rule for group '{g}' needs a signal"
                    )
            for g in rules:
                if g not in groups:
                    raise MissingBoundaryError(
                        f"unknown boundary group '{g}' (expected one of {groups})"
                    )

        check(self.thermal, THERMAL_KINDS, "thermal")
        if len(self.species) != n_species:
            raise ValueError(
                f"boundary conditions cover {len(self.species)} species, "
                f"state has {n_species}"
            )
        for i, rules in enumerate(self.species):
            check(rules, SPECIES_KINDS, f"species {i}")


def resolve_traces(
    coe, bc: BoundaryConditions, t: float, grid: MimeticGrid, model: ConstitutiveModel
) -> CoEnergyTraces:
    """Boundary traces of temperature and chemical potentials at time t.

    Zero-flux sides copy the adjacent cell values so the one-sided
    boundary gradient is exactly zero in floating point.
    """
    adj_T = adjacent_cell_values(coe.temperature)
    t_sides = {}
    for name in boundary_groups(grid):
        key = group_axis_side(grid, name)
        rule = bc.thermal[name]
        if rule.kind == "dirichlet-temperature":
            t_sides[key] = np.full(grid.boundary_shape(key[0]), rule.value(t))
        elif rule.kind == "neumann-heat-flux":
            q = rule.value(t)
            h = grid.spacing[key[0]]
            t_sides[key] = adj_T.sides[key] - q * h / (2.0 * model.conductivity)
        else:
            t_sides[key] = adj_T.sides[key].copy()
    mu_traces = []
    for i, rules in enumerate(bc.species):
        adj_mu = adjacent_cell_values(coe.chemical_potentials[i])
        sides = {}
        for name in boundary_groups(grid):
            key = group_axis_side(grid, name)
            rule = rules[name]
            if rule.kind == "dirichlet-potential":
                sides[key] = np.full(grid.boundary_shape(key[0]), rule.value(t))
            else:
                sides[key] = adj_mu.sides[key].copy()
        mu_traces.append(BoundaryField(grid, sides))
    return CoEnergyTraces(BoundaryField(grid, t_sides), tuple(mu_traces))


@dataclass(frozen=True)
class TimeIntegrator:
    """Scheme selection and step control.

    newton_tol scales the residual tolerance of the midpoint solve;
    the absolute tolerance used is newton_tol * max(1, |x|_inf).
    """

    scheme: str
    dt: float
    t_end: float
    newton_tol: float = 1e-12
    max_newton_iters: int = 50

    def __post_init__(self):
        if self.scheme not in ("explicit-rk4", "implicit-midpoint"):
            raise ValueError(
                f"unknown scheme '{self.scheme}' "
                "(expected 'explicit-rk4' or 'implicit-midpoint')"
            )
        if not (self.dt > 0.0) or not math.isfinite(self.dt):
            raise ValueError("dt must be positive and finite")
        if self.t_end < 0.0 or not math.isfinite(self.t_end):
            raise ValueError("t_end must be nonnegative and finite")
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")

    @property
    def n_steps(self) -> int:
        return max(0, int(round(self.t_end / self.dt)))


@dataclass
class AuditReport:
    """Balance ledger of one trajectory node.

    The residuals are step-local: the energy residual is
    Delta U - (dt/2)(P_n + P_{n+1}) for the step ending at this node,
    and analogously for entropy with production plus boundary exchange.
    ``dissipated`` exists to make the energy ledger explicit; the
    operator routes all dissipation into entropy, so it is always 0.
    """

    time: float
    H: float
    S: float
    boundary_power: float
    entropy_produced: float
    entropy_boundary: float
    first_law_residual: float
    second_law_residual: float
    min_sigma: float
    dissipated: float = 0.0


@dataclass
class NodeBalance:
    """Everything the balance ledger needs from one evaluated state.

    ``power`` is the energy exchange rate through the boundary,
    ``produced`` the volume integral of the entropy production, and
    ``boundary_entropy`` the entropy exchange rate; all three use the
    same quadratures as the assembled operator.
    """

    H: float
    S: float
    power: float
    produced: float
    boundary_entropy: float
    sigma_min: float
    record: PortRecord


class _Workspace:
    """Shared pack/unpack plumbing for the stage evaluations of one run."""

    def __init__(self, grid, model, bc, n_species):
        self.grid = grid
        self.model = model
        self.bc = bc
        self.n_species = n_species

    def rhs(self, flat, t, want_sigma=False):
        # Overflow to inf/nan in a stage state is caught by the finite
        # checks of the field containers, not reported as a warning.
        with np.errstate(over="ignore", invalid="ignore"):
            state = ThermoState.unpack(flat, self.grid, self.n_species, t)
            coe = co_energy(state, self.model)
            traces = resolve_traces(coe, self.bc, t, self.grid, self.model)
            forces = driving_forces(coe, self.grid, traces)
            mods = modulators(coe, forces, self.model, traces.temperature)
            cdots, sdot = apply_jglob(coe, mods, self.grid, traces)
        parts = [c.values.ravel() for c in cdots]
        parts.append(sdot.values.ravel())
        rates = np.concatenate(parts)
        sigma_min = None
        if want_sigma:
            sigma_min = _sigma_floor_check(
                entropy_production(coe, forces, self.model), t
            )
        return rates, sigma_min

    def node(self, state: ThermoState) -> NodeBalance:
        t = state.time
        coe = co_energy(state, self.model)
        traces = resolve_traces(coe, self.bc, t, self.grid, self.model)
        forces = driving_forces(coe, self.grid, traces)
        mods = modulators(coe, forces, self.model, traces.temperature)
        structure = assemble_structure(mods, self.grid, traces)
        adj_T = adjacent_cell_values(coe.temperature)
        power = structure.thermal_boundary_power(adj_T)
        for i in range(self.n_species):
            adj_mu = adjacent_cell_values(coe.chemical_potentials[i])
            power += structure.species_boundary_power(i, adj_mu)
        sigma = entropy_production(coe, forces, self.model)
        produced = _sigma_integral(sigma, self.grid)
        sigma_min = _sigma_floor_check(sigma, t)
        pairs = nd_port_pairs(coe, mods, fluxes(mods, self.model), self.grid)
        v = _flatten_trace(pairs.energy.u)
        y = _flatten_trace(pairs.energy.y)
        record = PortRecord(time=t, v=v, y=y, nd_pairs=pairs)
        return NodeBalance(
            H=total_energy(state, self.model),
            S=total_entropy(state),
            power=power,
            produced=produced,
            boundary_entropy=structure.thermal_entropy_boundary(),
            sigma_min=sigma_min,
            record=record,
        )


def _flatten_trace(bf: BoundaryField) -> np.ndarray:
    parts = [np.atleast_1d(bf.sides[key]).ravel() for key in sorted(bf.sides)]
    return np.concatenate(parts)


def _sigma_integral(sigma, grid) -> float:
    sigma_s, sigma_c = sigma
    terms = sigma_s.values.ravel().tolist()
    for sc in sigma_c:
        terms.extend(sc.values.ravel().tolist())
    return grid.cell_measure * math.fsum(terms)


def _sigma_floor_check(sigma, t) -> float:
    sigma_s, sigma_c = sigma
    low = float(sigma_s.values.min()) if sigma_s.values.size else 0.0
    for sc in sigma_c:
        if sc.values.size:
            low = min(low, float(sc.values.min()))
    if low < SIGMA_FLOOR:
        raise StepRejectedError(
            f"entropy production {low:.3e} fell below {SIGMA_FLOOR:.0e} at t={t!r}"
        )
    return low


def _rk4_ceiling(flat, t, ws: _Workspace) -> float:
    """Explicit step-size ceiling from the current state.

    Linearizing the conduction and diffusion rates gives effective
    diffusivities lambda T_max / (c_v T_min) and max_i d_i alpha_i;
    the Gershgorin row bound of the discrete Laplacian is sum_ax 4/h^2.
    """
    state = ThermoState.unpack(flat, ws.grid, ws.n_species, t)
    T = co_energy(state, ws.model).temperature.values
    diff_thermal = (
        ws.model.conductivity
        * float(T.max())
        / (ws.model.heat_capacity * float(T.min()))
    )
    diff_species = max(
        (d * a for d, a in zip(ws.model.diffusivities, ws.model.alpha)),
        default=0.0,
    )
    row_bound = sum(4.0 / h**2 for h in ws.grid.spacing)
    return RK4_STABILITY_CONSTANT / (max(diff_thermal, diff_species) * row_bound)


def _advance_rk4(flat, t, dt, ws: _Workspace):
    ceiling = _rk4_ceiling(flat, t, ws)
    n_sub = 1
    if dt > ceiling:
        n_sub = int(math.ceil(dt / ceiling))
        warnings.warn(
            f"dt={dt!r} exceeds the explicit stability ceiling "
            f"{ceiling!r}; stepping in {n_sub} substeps",
            StabilityWarning,
            stacklevel=3,
        )
    h = dt / n_sub
    x = flat
    sigma_min = None
    for k in range(n_sub):
        tk = t + k * h
        mins = []
        k1, s1 = ws.rhs(x, tk, want_sigma=True)
        k2, s2 = ws.rhs(x + 0.5 * h * k1, tk + 0.5 * h, want_sigma=True)
        k3, s3 = ws.rhs(x + 0.5 * h * k2, tk + 0.5 * h, want_sigma=True)
        k4, s4 = ws.rhs(x + h * k3, tk + h, want_sigma=True)
        mins.extend([s1, s2, s3, s4])
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        low = min(mins)
        sigma_min = low if sigma_min is None else min(sigma_min, low)
    return x, sigma_min


def _advance_midpoint(flat, t, dt, integrator: TimeIntegrator, ws: _Workspace):
    t_mid = t + 0.5 * dt
    f0, _ = ws.rhs(flat, t_mid)
    if not np.any(f0):
        # Exact fixed point: the midpoint equation is solved by the
        # state itself, so hand it back bitwise unchanged.
        return flat.copy(), None

    def residual(xi):
        return xi - flat - 0.5 * dt * ws.rhs(xi, t_mid)[0]

    f_tol = integrator.newton_tol * max(1.0, float(np.abs(flat).max()))
    try:
        xi = newton_krylov(
            residual,
            flat + 0.5 * dt * f0,
            f_tol=f_tol,
            maxiter=integrator.max_newton_iters,
        )
    except NoConvergence as exc:
        raise StepRejectedError(
            f"midpoint solve did not converge within "
            f"{integrator.max_newton_iters} iterations at t={t!r} "
            f"(f_tol={f_tol!r})"
        ) from exc
    rates, sigma_min = ws.rhs(xi, t_mid, want_sigma=True)
    return flat + dt * rates, sigma_min


def _advance(flat, t, integrator: TimeIntegrator, ws: _Workspace):
    # A stage state outside the admissible set surfaces as one of the
    # validation errors of the constitutive map or the field containers
    # (saturation, non-positive temperature, non-finite values).  All of
    # them mean the same thing here: this step cannot be completed.
    try:
        if integrator.scheme == "explicit-rk4":
            return _advance_rk4(flat, t, integrator.dt, ws)
        return _advance_midpoint(flat, t, integrator.dt, integrator, ws)
    except StepRejectedError:
        raise
    except (ValueError, FloatingPointError) as exc:
        raise StepRejectedError(f"step from t={t!r} rejected: {exc}") from exc


def _node_eval(state, ws: _Workspace) -> NodeBalance:
    try:
        return ws.node(state)
    except (SaturationError, ConstitutiveViolationError, InvalidStateError) as exc:
        raise StepRejectedError(
            f"state at t={state.time!r} rejected: {exc}"
        ) from exc


def evaluate_node(
    state: ThermoState,
    model: ConstitutiveModel,
    grid: MimeticGrid,
    bc: BoundaryConditions,
) -> NodeBalance:
    """Balance terms of a single state, using the state's own time.

    This is the evaluation the integrators run at every trajectory
    node; exposing it lets persisted states be re-audited offline.
    """
    bc.validate(grid, state.n_species)
    return _node_eval(state, _Workspace(grid, model, bc, state.n_species))


def _step_report(before: NodeBalance, after: NodeBalance, stage_sigma, dt, t_new):
    first = (after.H - before.H) - 0.5 * dt * (before.power + after.power)
    rate_before = before.produced + before.boundary_entropy
    rate_after = after.produced + after.boundary_entropy
    second = (after.S - before.S) - 0.5 * dt * (rate_before + rate_after)
    low = after.sigma_min if stage_sigma is None else min(stage_sigma, after.sigma_min)
    return AuditReport(
        time=t_new,
        H=after.H,
        S=after.S,
        boundary_power=after.power,
        entropy_produced=after.produced,
        entropy_boundary=after.boundary_entropy,
        first_law_residual=first,
        second_law_residual=second,
        min_sigma=low,
    )


def step(state: ThermoState, model, grid, bc: BoundaryConditions, integrator):
    """Advance one step of integrator.dt.

    Returns (new_state, PortRecord, AuditReport); the record and report
    belong to the new node.  Raises StepRejectedError when the stage
    states leave the admissible set or the midpoint solve stalls.
    """
    bc.validate(grid, state.n_species)
    ws = _Workspace(grid, model, bc, state.n_species)
    before = _node_eval(state, ws)
    flat_new, stage_sigma = _advance(state.pack(), state.time, integrator, ws)
    t_new = state.time + integrator.dt
    new_state = ThermoState.unpack(flat_new, grid, state.n_species, t_new)
    after = _node_eval(new_state, ws)
    report = _step_report(before, after, stage_sigma, integrator.dt, t_new)
    return new_state, after.record, report


@dataclass
class Trajectory:
    """Per-node audit reports and port records of one run.

    Node 0 is the initial state; its residual fields are zero by
    definition.  ``states`` is populated only when the run was asked to
    keep them (snapshot output needs the fields, audits do not).
    """

    grid: MimeticGrid
    model: ConstitutiveModel
    reports: list
    ports: list
    states: Optional[list] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.reports])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])


@dataclass
class FirstLawAudit:
    """Energy-balance residual series r(t) = [H(t)-H(0)] - trapz(power)."""

    series: np.ndarray
    max_abs: float


@dataclass
class SecondLawAudit:
    """Entropy-balance residual series and the lowest pointwise production."""

    series: np.ndarray
    max_abs: float
    min_production: float


def _cumulative_trapezoid(times, rates) -> np.ndarray:
    out = np.zeros(len(times))
    for i in range(1, len(times)):
        dt = times[i] - times[i - 1]
        out[i] = out[i - 1] + 0.5 * dt * (rates[i - 1] + rates[i])
    return out


def audit_first_law(traj: Trajectory) -> FirstLawAudit:
    H = traj.column("H")
    P = traj.column("boundary_power")
    series = (H - H[0]) - _cumulative_trapezoid(traj.times, P)
    return FirstLawAudit(series=series, max_abs=float(np.abs(series).max()))


def audit_second_law(traj: Trajectory) -> SecondLawAudit:
    S = traj.column("S")
    rate = traj.column("entropy_produced") + traj.column("entropy_boundary")
    series = (S - S[0]) - _cumulative_trapezoid(traj.times, rate)
    return SecondLawAudit(
        series=series,
        max_abs=float(np.abs(series).max()),
        min_production=float(traj.column("min_sigma").min()),
    )


def integrate(
    state: ThermoState,
    model: ConstitutiveModel,
    grid: MimeticGrid,
    bc: BoundaryConditions,
    integrator: TimeIntegrator,
    keep_states: bool = False,
) -> Trajectory:
    """Run integrator.n_steps steps from ``state`` and return the trajectory."""
    bc.validate(grid, state.n_species)
    ws = _Workspace(grid, model, bc, state.n_species)
    current = state.copy()
    node = _node_eval(current, ws)
    first = AuditReport(
        time=current.time,
        H=node.H,
        S=node.S,
        boundary_power=node.power,
        entropy_produced=node.produced,
        entropy_boundary=node.boundary_entropy,
        first_law_residual=0.0,
        second_law_residual=0.0,
        min_sigma=node.sigma_min,
    )
    reports = [first]
    records = [node.record]
    states = [current.copy()] if keep_states else None
    for _ in range(integrator.n_steps):
        flat_new, stage_sigma = _advance(
            current.pack(), current.time, integrator, ws
        )
        t_new = current.time + integrator.dt
        new_state = ThermoState.unpack(flat_new, grid, state.n_species, t_new)
        after = _node_eval(new_state, ws)
        reports.append(_step_report(node, after, stage_sigma, integrator.dt, t_new))
        records.append(after.record)
        if keep_states:
            states.append(new_state.copy())
        current = new_state
        node = after
    return Trajectory(
        grid=grid, model=model, reports=reports, ports=records, states=states
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write the node series with cumulative residual columns.

    The residual columns hold the running balances r(t) of the audits,
    which are the cumulative sums of the per-step report residuals.
    Floats are written with repr so rereads and determinism checks are
    exact.
    """
    fla = audit_first_law(traj)
    sla = audit_second_law(traj)
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for i, rep in enumerate(traj.reports):
        row = (
            rep.time,
            rep.H,
            rep.S,
            rep.boundary_power,
            rep.entropy_produced,
            fla.series[i],
            sla.series[i],
            rep.min_sigma,
        )
        lines.append(",".join(repr(float(x)) for x in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = tuple(lines[0].split(","))
    if header != TRAJECTORY_COLUMNS:
        raise ValueError(
            f"unexpected trajectory columns {header}, "
            f"expected {TRAJECTORY_COLUMNS}"
        )
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    data = np.array(rows) if rows else np.empty((0, len(header)))
    return {name: data[:, j].copy() for j, name in enumerate(header)}
