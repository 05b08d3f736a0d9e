"""Structure-constant tables and pointwise algebra.

The expected values here are either computed by independent brute-force
loops over all index tuples, or are the exact integer contraction values.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from g2flow.algebra import (
    ORIENTATION,
    antisymmetry_defect,
    build_standard_tables,
    cross,
    dense_from_sorted,
    diamond,
    first_slot_slices_4,
    form_inner,
    hodge_star_3,
    hodge_star_4,
    interior_psi,
    sorted_components,
    star_sorted_3,
    validate_tables,
)

finite_vec = arrays(np.float64, (7,), elements=st.floats(-3, 3))


def brute_parity(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def test_phi_convention_entries(tables):
    # expand phi = e012 + e034 + e056 + e135 - e146 - e236 - e245 by hand
    assert tables.phi[0, 1, 2] == 1
    assert tables.phi[0, 3, 4] == 1
    assert tables.phi[1, 4, 6] == -1
    assert tables.phi[1, 0, 2] == -1  # one transposition
    assert np.all(tables.phi[0, 0, :] == 0)


def test_phi_nonzero_structure(tables):
    values = tables.phi[tables.phi != 0]
    assert len(values) == 42
    assert set(np.unique(values)) == {-1, 1}


def test_psi_brute_force_count(tables):
    # brute-force count over all 7^4 tuples after the Hodge dual
    count = sum(
        1 for idx in itertools.product(range(7), repeat=4) if tables.psi[idx] != 0
    )
    assert count == 4 * 3 * 2 * 1 * 7  # 168
    assert set(np.unique(tables.psi[tables.psi != 0])) == {-1, 1}


def test_validate_tables_all_zero(tables):
    report = validate_tables(tables)
    assert len(report) == 18
    assert all(defect == 0 for _, defect in report)


def test_paper_contraction_values(tables):
    phi, psi = tables.phi, tables.psi
    d = np.eye(7, dtype=np.int64)
    assert np.einsum("ijk,ijk->", phi, phi) == 42
    assert np.array_equal(np.einsum("ijk,ajk->ia", phi, phi), 6 * d)
    assert np.array_equal(np.einsum("ijkl,ajkl->ia", psi, psi), 24 * d)
    assert np.einsum("ijkl,ijkl->", psi, psi) == 168
    assert np.array_equal(np.einsum("ijk,abjk->iab", phi, psi), -4 * phi)
    assert np.all(np.einsum("ijk,aijk->a", phi, psi) == 0)


def test_form_norms_under_inner_convention(tables):
    assert form_inner(tables.phi.astype(float), tables.phi.astype(float), 3) == pytest.approx(7.0)
    assert form_inner(tables.psi.astype(float), tables.psi.astype(float), 4) == pytest.approx(7.0)


def test_cross_basis_vectors(tables):
    e = np.eye(7)
    assert np.allclose(cross(tables, e[0], e[0]), 0.0)
    # read off the table: e0 x e1 = e2 under the convention
    assert np.allclose(cross(tables, e[0], e[1]), e[2])
    assert np.allclose(cross(tables, e[1], e[0]), -e[2])


def brute_cross(tables, x, y):
    out = np.zeros(7)
    for (a, b, k), v in tables.phi_nonzero:
        out[k] += x[a] * y[b] * v
    return out


@settings(max_examples=25, deadline=None)
@given(finite_vec, finite_vec)
def test_cross_matches_brute_force_and_is_orthogonal(x, y):
    tables = build_standard_tables()
    c = cross(tables, x, y)
    assert np.allclose(c, brute_cross(tables, x, y), atol=1e-12)
    assert np.allclose(c, -cross(tables, y, x), atol=1e-12)
    assert abs(np.dot(c, x)) <= 1e-10 * (1 + np.abs(x).max() ** 2 * (1 + np.abs(y).max()))
    assert abs(np.dot(c, y)) <= 1e-10 * (1 + np.abs(y).max() ** 2 * (1 + np.abs(x).max()))


@settings(max_examples=25, deadline=None)
@given(finite_vec, finite_vec)
def test_cross_norm_identity(x, y):
    # |x X y|^2 = |x|^2|y|^2 - <x,y>^2 - psi(x,y,x,y); brute-force both sides
    tables = build_standard_tables()
    c = cross(tables, x, y)
    lhs = float(c @ c)
    psi_term = float(np.einsum("ijab,i,j,a,b->", tables.psi, x, y, x, y))
    rhs = float((x @ x) * (y @ y) - (x @ y) ** 2 - psi_term)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_diamond_metric_gives_3phi(tables):
    out = diamond(tables, np.eye(7), tables.phi.astype(float))
    assert np.array_equal(out, 3.0 * tables.phi)


def test_diamond_zero_and_linearity(tables, rng):
    phi = tables.phi.astype(float)
    assert np.all(diamond(tables, np.zeros((7, 7)), phi) == 0.0)
    h1 = rng.standard_normal((7, 7))
    h1 = h1 + h1.T
    h2 = rng.standard_normal((7, 7))
    h2 = h2 + h2.T
    lin = diamond(tables, h1 + 2.0 * h2, phi)
    assert np.allclose(lin, diamond(tables, h1, phi) + 2.0 * diamond(tables, h2, phi))


def test_diamond_single_entry(tables):
    h = np.zeros((7, 7))
    h[0, 0] = 1.0
    out = diamond(tables, h, tables.phi.astype(float))
    assert out[0, 1, 2] == pytest.approx(1.0)


def test_diamond_rejects_nonsymmetric(tables):
    h = np.zeros((7, 7))
    h[0, 1] = 1.0
    with pytest.raises(ValueError):
        diamond(tables, h, tables.phi.astype(float))


def test_interior_psi_isometry(tables):
    e = np.eye(7)
    a = interior_psi(tables, e[0])
    b = interior_psi(tables, e[1])
    assert form_inner(a, a, 3) == pytest.approx(4.0)
    assert form_inner(a, b, 3) == pytest.approx(0.0)
    assert np.all(interior_psi(tables, np.zeros(7)) == 0)


@settings(max_examples=25, deadline=None)
@given(finite_vec)
def test_interior_psi_injective(x):
    tables = build_standard_tables()
    a = interior_psi(tables, x)
    assert form_inner(a, a, 3) == pytest.approx(4.0 * float(x @ x), rel=1e-12, abs=1e-12)


def test_hodge_star_of_phi_is_psi(tables):
    assert np.array_equal(np.rint(hodge_star_3(tables.phi)).astype(np.int64), tables.psi)
    assert np.array_equal(np.rint(hodge_star_4(tables.psi)).astype(np.int64), tables.phi)


def test_hodge_star_basis_form(tables):
    # *(e0^e1^e2) = +/- e3^e4^e5^e6 depending on the chosen orientation
    alpha = np.zeros((7, 7, 7))
    for perm in itertools.permutations(range(3)):
        alpha[tuple(perm)] = brute_parity(perm)
    beta = hodge_star_3(alpha)
    assert beta[3, 4, 5, 6] == pytest.approx(float(ORIENTATION))
    assert np.count_nonzero(beta) == 24


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (35,), elements=st.floats(-5, 5)))
def test_hodge_involution_random(svals):
    alpha = dense_from_sorted(svals, 3)
    assert antisymmetry_defect(alpha, 3) == 0.0
    back = hodge_star_4(hodge_star_3(alpha))
    assert np.max(np.abs(back - alpha)) <= 1e-14 * max(1.0, np.max(np.abs(alpha)))


def test_sorted_roundtrip_and_slices(tables, rng):
    svals = rng.standard_normal((35, 4))
    dense = dense_from_sorted(svals, 3)
    assert np.allclose(sorted_components(dense, 3), svals)
    s4 = star_sorted_3(svals)
    dense4 = dense_from_sorted(s4, 4)
    assert np.allclose(dense4, hodge_star_3(dense))
    slices = first_slot_slices_4(s4)
    from g2flow.algebra import _SORTED3

    for q in range(7):
        for si, trip in enumerate(_SORTED3):
            assert np.allclose(slices[q, si], dense4[(q,) + trip])
