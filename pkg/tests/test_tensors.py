import numpy as np
import pytest
from hypothesis import given

from conftest import psd_from, tensors3, vectors3
from kinetic_continua.errors import NotPSD, NotSkew
from kinetic_continua.tensors import (
    IDENTITY,
    axial_from_skew,
    decompose,
    eig_sym,
    is_minor_left_symmetric,
    minor_right_transpose,
    pinv_sym,
    project_psd,
    skew_from_axial,
    sqrt_psd,
    sym,
    sym_to_vec6,
    ten3_apply_normal,
    vec6_to_sym,
)


@given(tensors3())
def test_decompose_recombines(t):
    s, w, tr, d = decompose(t)
    assert np.allclose(s + w, t, atol=1e-14)
    assert np.allclose(s, s.T) and np.allclose(w, -w.T)
    assert np.isclose(np.trace(d), 0.0, atol=1e-13)
    assert np.allclose(d + tr * IDENTITY / 3, t, atol=1e-13)


@given(tensors3())
def test_vec6_round_trip(t):
    s = sym(t)
    v = sym_to_vec6(s)
    assert np.array_equal(vec6_to_sym(v), s)
    assert np.array_equal(v[:3], np.diag(s))
    assert v[3] == s[0, 1] and v[4] == s[0, 2] and v[5] == s[1, 2]


@given(tensors3())
def test_sqrt_psd_squares_back(a):
    s = psd_from(a)
    r = sqrt_psd(s)
    assert np.allclose(r @ r, s, atol=1e-9 * (1 + np.linalg.norm(s)))
    assert np.allclose(r, r.T)
    assert np.min(np.linalg.eigvalsh(r)) >= -1e-9


def test_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        sqrt_psd(np.diag([1.0, -1e-3, 0.0]))


def test_sqrt_accepts_roundoff_negative():
    r = sqrt_psd(np.diag([4.0, -1e-14, 0.0]))
    assert np.allclose(r, np.diag([2.0, 0.0, 0.0]))


@given(tensors3())
def test_eig_sym_descending_and_orthonormal(t):
    s = sym(t)
    vals, vecs = eig_sym(s)
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.allclose(vecs.T @ vecs, IDENTITY, atol=1e-10)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.T, s, atol=1e-10 * (1 + np.linalg.norm(s)))


def test_eig_sym_degenerate_basis_is_reproducible():
    vals, vecs = eig_sym(np.diag([2.0, 1.0, 1.0]))
    assert np.allclose(vals, [2, 1, 1])
    assert np.allclose(vecs, IDENTITY)
    _, vecs_iso = eig_sym(3.0 * IDENTITY)
    assert np.allclose(vecs_iso, IDENTITY)


def test_project_psd_leaves_psd_untouched_and_reports():
    good = np.diag([1.0, 2.0, 0.0])
    bad = np.diag([1.0, -0.5, 0.0])
    out, mags = project_psd(np.stack([good, bad]))
    assert np.array_equal(out[0], good)
    assert mags[0] == 0.0
    assert np.allclose(out[1], np.diag([1.0, 0.0, 0.0]))
    assert np.isclose(mags[1], 0.5)


@given(tensors3())
def test_pinv_is_moore_penrose(a):
    a[:, 2] = 0.0  # rank at most two
    s = psd_from(a)
    p, proj = pinv_sym(s)
    tol = 1e-8 * (1 + np.linalg.norm(s)) * (1 + np.linalg.norm(p))
    assert np.allclose(s @ p @ s, s, atol=tol)
    assert np.allclose(proj @ proj, proj, atol=1e-10)


def test_pinv_rank_one():
    s = np.diag([0.0, 0.0, 4.0])
    p, proj = pinv_sym(s)
    assert np.allclose(p, np.diag([0.0, 0.0, 0.25]))
    assert np.allclose(proj, np.diag([0.0, 0.0, 1.0]))


@given(vectors3(), vectors3())
def test_axial_round_trip_and_cross_product(w, u):
    W = skew_from_axial(w)
    assert np.allclose(W @ u, np.cross(w, u), atol=1e-13)
    assert np.allclose(axial_from_skew(W), w)


def test_axial_rejects_symmetric_part():
    with pytest.raises(NotSkew):
        axial_from_skew(np.eye(3))


def test_third_order_helpers(rng):
    m = rng.normal(size=(3, 3, 3))
    n = rng.normal(size=3)
    assert np.allclose(ten3_apply_normal(m, n), m @ n)
    s = m + np.swapaxes(m, 0, 1)
    assert is_minor_left_symmetric(s, atol=1e-15)
    assert not is_minor_left_symmetric(m)
    assert np.array_equal(minor_right_transpose(m)[0, 1, 2], m[0, 2, 1])
