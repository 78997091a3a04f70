"""Grid and operator contracts: stencils against dense oracles, exact identities."""

import math

import mpmath
import numpy as np
import pytest

from thermoport.mesh import (
    BoundaryField,
    FaceField,
    GridShapeError,
    MimeticGrid,
    ScalarField,
    boundary_integral,
    cell_inner,
    div,
    face_inner,
    face_weights,
    grad,
    ibp_residual,
    normal_trace,
    outward_sign,
    read_scalar_csv,
    write_scalar_csv,
)


def line_grid(n=8, a=0.0, b=1.0):
    return MimeticGrid((n,), ((a, b),))


def box_grid(nx=5, ny=7, bounds=((0.0, 1.3), (-0.4, 0.9))):
    return MimeticGrid((nx, ny), bounds)


def random_scalar(grid, rng):
    return ScalarField(grid, rng.standard_normal(grid.extents))


def random_face(grid, rng):
    return FaceField(
        grid, tuple(rng.standard_normal(grid.face_shape(ax)) for ax in range(grid.dim))
    )


def random_trace(grid, rng):
    return BoundaryField(
        grid,
        {
            (ax, side): rng.standard_normal(grid.boundary_shape(ax))
            for ax in range(grid.dim)
            for side in (0, 1)
        },
    )


# ---------------------------------------------------------------------------
# dense oracles, built by independent index loops (no calls into the library)


def dense_grad_matrix(grid):
    """Zero-trace gradient as an explicit (faces x cells) matrix per axis."""
    mats = []
    if grid.dim == 1:
        (n,) = grid.extents
        (h,) = grid.spacing
        G = np.zeros((n + 1, n))
        G[0, 0] = 2.0 / h
        for j in range(1, n):
            G[j, j] = 1.0 / h
            G[j, j - 1] = -1.0 / h
        G[n, n - 1] = -2.0 / h
        mats.append(G)
        return mats
    nx, ny = grid.extents
    hx, hy = grid.spacing

    def cid(i, j):
        return i * ny + j

    Gx = np.zeros(((nx + 1) * ny, nx * ny))
    for i in range(nx + 1):
        for j in range(ny):
            row = i * ny + j
            if i == 0:
                Gx[row, cid(0, j)] = 2.0 / hx
            elif i == nx:
                Gx[row, cid(nx - 1, j)] = -2.0 / hx
            else:
                Gx[row, cid(i, j)] = 1.0 / hx
                Gx[row, cid(i - 1, j)] = -1.0 / hx
    Gy = np.zeros((nx * (ny + 1), nx * ny))
    for i in range(nx):
        for j in range(ny + 1):
            row = i * (ny + 1) + j
            if j == 0:
                Gy[row, cid(i, 0)] = 2.0 / hy
            elif j == ny:
                Gy[row, cid(i, ny - 1)] = -2.0 / hy
            else:
                Gy[row, cid(i, j)] = 1.0 / hy
                Gy[row, cid(i, j - 1)] = -1.0 / hy
    mats.extend([Gx, Gy])
    return mats


def dense_div_matrix(grid):
    """Divergence as an explicit (cells x faces-per-axis) matrix list."""
    mats = []
    if grid.dim == 1:
        (n,) = grid.extents
        (h,) = grid.spacing
        D = np.zeros((n, n + 1))
        for i in range(n):
            D[i, i + 1] = 1.0 / h
            D[i, i] = -1.0 / h
        mats.append(D)
        return mats
    nx, ny = grid.extents
    hx, hy = grid.spacing

    def cid(i, j):
        return i * ny + j

    Dx = np.zeros((nx * ny, (nx + 1) * ny))
    Dy = np.zeros((nx * ny, nx * (ny + 1)))
    for i in range(nx):
        for j in range(ny):
            Dx[cid(i, j), (i + 1) * ny + j] = 1.0 / hx
            Dx[cid(i, j), i * ny + j] = -1.0 / hx
            Dy[cid(i, j), i * (ny + 1) + j + 1] = 1.0 / hy
            Dy[cid(i, j), i * (ny + 1) + j] = -1.0 / hy
    mats.extend([Dx, Dy])
    return mats


# ---------------------------------------------------------------------------
# grid and field construction


def test_grid_rejects_bad_shapes():
    with pytest.raises(GridShapeError):
        MimeticGrid((1,), ((0.0, 1.0),))
    with pytest.raises(GridShapeError):
        MimeticGrid((4, 4, 4), ((0, 1), (0, 1), (0, 1)))
    with pytest.raises(GridShapeError):
        MimeticGrid((4,), ((1.0, 1.0),))
    with pytest.raises(GridShapeError):
        MimeticGrid((4, 4), ((0.0, 1.0),))


def test_grid_measures():
    g = box_grid(4, 5, ((0.0, 2.0), (0.0, 1.0)))
    assert g.spacing == (0.5, 0.2)
    assert g.cell_measure == pytest.approx(0.1)
    assert g.boundary_measure(0) == pytest.approx(0.2)
    assert g.boundary_measure(1) == pytest.approx(0.5)
    assert g.face_shape(0) == (5, 5)
    assert g.face_shape(1) == (4, 6)
    assert g.boundary_shape(0) == (5,)


def test_fields_validate_shapes_and_finiteness():
    g = line_grid(4)
    with pytest.raises(GridShapeError):
        ScalarField(g, np.zeros(5))
    with pytest.raises(ValueError):
        ScalarField(g, np.array([0.0, np.nan, 0.0, 0.0]))
    with pytest.raises(GridShapeError):
        FaceField(g, (np.zeros(4),))
    bf = BoundaryField.full(g, 2.0)
    assert bf.n_faces() == 2
    assert float(bf.sides[(0, 0)]) == 2.0


# ---------------------------------------------------------------------------
# gradient


def test_grad_of_constant_vanishes():
    for g in (line_grid(6), box_grid()):
        phi = ScalarField.full(g, 4.25)
        out = grad(phi, BoundaryField.full(g, 4.25))
        for c in out.components:
            assert np.all(c == 0.0)


def test_grad_linear_profile_is_exact_1d():
    # power-of-two spacing so the affine identity holds bitwise
    g = line_grid(8, 0.0, 1.0)
    z = g.cell_centers(0)
    phi = ScalarField(g, z.copy())
    tr = BoundaryField(g, {(0, 0): np.asarray(0.0), (0, 1): np.asarray(1.0)})
    out = grad(phi, tr).components[0]
    assert np.all(out == 1.0)


def test_grad_matches_dense_stencil_oracle_2d():
    g = box_grid()
    rng = np.random.default_rng(1612)
    phi = random_scalar(g, rng)
    out = grad(phi, BoundaryField.zeros(g))
    Gx, Gy = dense_grad_matrix(g)
    ref_x = (Gx @ phi.values.ravel()).reshape(g.face_shape(0))
    ref_y = (Gy @ phi.values.ravel()).reshape(g.face_shape(1))
    scale = max(np.abs(ref_x).max(), np.abs(ref_y).max())
    assert np.abs(out.components[0] - ref_x).max() <= 1e-14 * scale
    assert np.abs(out.components[1] - ref_y).max() <= 1e-14 * scale


# ---------------------------------------------------------------------------
# divergence


def test_div_of_constant_vanishes():
    for g in (line_grid(5), box_grid()):
        f = FaceField(
            g, tuple(np.full(g.face_shape(ax), 3.5) for ax in range(g.dim))
        )
        assert np.all(div(f).values == 0.0)


def test_div_linear_flux_is_exact_1d():
    g = line_grid(16, 0.0, 1.0)
    f = FaceField(g, (g.face_positions(0).copy(),))
    assert np.all(div(f).values == 1.0)


def test_div_matches_dense_stencil_oracle_2d():
    g = box_grid(6, 4)
    rng = np.random.default_rng(77)
    f = random_face(g, rng)
    Dx, Dy = dense_div_matrix(g)
    ref = Dx @ f.components[0].ravel() + Dy @ f.components[1].ravel()
    got = div(f).values.ravel()
    assert np.abs(got - ref).max() <= 1e-14 * np.abs(ref).max()


# ---------------------------------------------------------------------------
# boundary quadrature


def test_boundary_integral_unit_traces_1d():
    g = line_grid(4, 0.0, 1.0)
    one = BoundaryField.full(g, 1.0)
    assert boundary_integral(one, one) == pytest.approx(2.0, abs=0.0)


def test_boundary_integral_zero_trace():
    g = box_grid()
    assert boundary_integral(BoundaryField.zeros(g), BoundaryField.full(g, 9.9)) == 0.0


def test_boundary_integral_matches_high_precision_oracle_2d():
    g = box_grid(9, 6, ((0.0, 0.77), (0.0, 1.31)))
    rng = np.random.default_rng(2024)
    ta, tb = random_trace(g, rng), random_trace(g, rng)
    with mpmath.workdps(50):
        terms = []
        for key in sorted(ta.sides):
            ax, _ = key
            m = mpmath.mpf(g.boundary_measure(ax))
            for u, v in zip(ta.sides[key].ravel(), tb.sides[key].ravel()):
                terms.append(m * mpmath.mpf(float(u)) * mpmath.mpf(float(v)))
        ref = float(mpmath.fsum(terms))
    got = boundary_integral(ta, tb)
    assert abs(got - ref) <= 1e-14 * max(1.0, abs(ref))


# ---------------------------------------------------------------------------
# integration by parts: the defining contract


def test_ibp_zero_boundary_fields():
    g = line_grid(12)
    rng = np.random.default_rng(5)
    phi = random_scalar(g, rng)
    f = random_face(g, rng)
    # kill the boundary faces and use zero traces
    f.components[0][0] = 0.0
    f.components[0][-1] = 0.0
    r = ibp_residual(phi, f, BoundaryField.zeros(g), normal_trace(f))
    scale = max(1.0, abs(cell_inner(phi, div(f))))
    assert abs(r) <= 1e-13 * scale


def test_ibp_affine_phi_constant_flux_closed_form_1d():
    # closed forms of the three sums for phi = p + q z and f = F:
    #   <phi, div f> = 0
    #   <grad phi, f> = F q (b - a)
    #   boundary term = F (phi(b) - phi(a)) = F q (b - a)
    g = line_grid(10, 0.25, 1.75)
    p, q, F = 0.8, -1.9, 2.6
    a, b = g.bounds[0]
    phi = ScalarField(g, p + q * g.cell_centers(0))
    f = FaceField(g, (np.full(g.face_shape(0), F),))
    tr = BoundaryField(g, {(0, 0): np.asarray(p + q * a), (0, 1): np.asarray(p + q * b)})
    vol = cell_inner(phi, div(f))
    fac = face_inner(grad(phi, tr), f)
    bdy = boundary_integral(tr, normal_trace(f))
    assert vol == pytest.approx(0.0, abs=1e-13)
    assert fac == pytest.approx(F * q * (b - a), rel=1e-13)
    assert bdy == pytest.approx(F * q * (b - a), rel=1e-13)
    scale = max(abs(vol), abs(fac), abs(bdy), 1.0)
    assert abs(ibp_residual(phi, f, tr, normal_trace(f))) <= 1e-13 * scale


def test_ibp_random_instances_2d():
    g = box_grid(6, 5, ((0.0, 1.0), (0.0, 0.7)))
    rng = np.random.default_rng(99)
    for _ in range(64):
        phi = random_scalar(g, rng)
        f = random_face(g, rng)
        tr = random_trace(g, rng)
        r = ibp_residual(phi, f, tr, normal_trace(f))
        scale = max(
            abs(cell_inner(phi, div(f))),
            abs(face_inner(grad(phi, tr), f)),
            abs(boundary_integral(tr, normal_trace(f))),
            1e-30,
        )
        assert abs(r) <= 1e-13 * scale


# ---------------------------------------------------------------------------
# adjointness of div and grad under the measures


def interior_face_count(grid):
    total = 0
    for ax in range(grid.dim):
        n_int = grid.extents[ax] - 1
        total += n_int * int(np.prod(grid.boundary_shape(ax), initial=1.0))
    return int(total)


def probe_interior_div(grid):
    """Dense matrix of div restricted to interior faces, via library probes."""
    cols = []
    for ax in range(grid.dim):
        shape = grid.face_shape(ax)
        for idx in np.ndindex(*shape):
            if idx[ax] == 0 or idx[ax] == shape[ax] - 1:
                continue
            f = FaceField.zeros(grid)
            f.components[ax][idx] = 1.0
            cols.append(div(f).values.ravel())
    return np.array(cols).T


def probe_interior_grad(grid):
    """Interior-face rows of grad with zero traces, via library probes."""
    rows = []
    zero = BoundaryField.zeros(grid)
    for cell in np.ndindex(*grid.extents):
        phi = ScalarField.zeros(grid)
        phi.values[cell] = 1.0
        gout = grad(phi, zero)
        col = []
        for ax in range(grid.dim):
            shape = grid.face_shape(ax)
            for idx in np.ndindex(*shape):
                if idx[ax] == 0 or idx[ax] == shape[ax] - 1:
                    continue
                col.append(gout.components[ax][idx])
        rows.append(col)
    return np.array(rows).T


@pytest.mark.parametrize(
    "grid",
    [line_grid(7, 0.0, 1.1), box_grid(4, 5, ((0.0, 1.0), (0.0, 0.65)))],
    ids=["1d", "2d"],
)
def test_div_grad_adjointness(grid):
    D = probe_interior_div(grid)
    G = probe_interior_grad(grid)
    assert D.shape == (grid.n_cells, interior_face_count(grid))
    Mc = grid.cell_measure * np.eye(grid.n_cells)
    Mf = grid.cell_measure * np.eye(interior_face_count(grid))
    defect = Mc @ D + G.T @ Mf
    assert np.abs(defect).max() <= 1e-13


# ---------------------------------------------------------------------------
# consistency order


def test_grad_second_order_interior():
    errs = []
    ns = [16, 32, 64]
    for n in ns:
        g = line_grid(n, 0.0, 1.0)
        z = g.cell_centers(0)
        phi = ScalarField(g, np.sin(np.pi * z))
        tr = BoundaryField(g, {(0, 0): np.asarray(0.0), (0, 1): np.asarray(np.sin(np.pi))})
        got = grad(phi, tr).components[0][1:-1]
        exact = np.pi * np.cos(np.pi * g.face_positions(0)[1:-1])
        errs.append(np.abs(got - exact).max())
    slopes = [
        math.log(errs[i] / errs[i + 1]) / math.log(2.0) for i in range(len(errs) - 1)
    ]
    for s in slopes:
        assert 1.8 <= s <= 2.2


# ---------------------------------------------------------------------------
# CSV snapshots


def test_csv_round_trip_1d(tmp_path):
    g = line_grid(5)
    rng = np.random.default_rng(3)
    field = random_scalar(g, rng)
    path = tmp_path / "field.csv"
    write_scalar_csv(field, path)
    text = path.read_text().splitlines()
    assert text[0] == "axis0_index,value"
    back = read_scalar_csv(path, g)
    assert np.array_equal(back.values, field.values)


def test_csv_round_trip_2d(tmp_path):
    g = box_grid(3, 4)
    rng = np.random.default_rng(4)
    field = random_scalar(g, rng)
    path = tmp_path / "field.csv"
    write_scalar_csv(field, path)
    text = path.read_text().splitlines()
    assert text[0] == "axis0_index,axis1_index,value"
    assert len(text) == 1 + g.n_cells
    back = read_scalar_csv(path, g)
    assert np.array_equal(back.values, field.values)


def test_outward_sign():
    assert outward_sign(0) == -1.0
    assert outward_sign(1) == 1.0


def test_face_weights_sum_to_volume():
    g = box_grid(4, 6, ((0.0, 2.0), (0.0, 3.0)))
    w = face_weights(g)
    # per axis, total face weight equals the domain volume
    for ax in range(g.dim):
        assert w.components[ax].sum() == pytest.approx(6.0, rel=1e-14)
