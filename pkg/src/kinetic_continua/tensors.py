"""
Small-tensor algebra on 3x3 and 3x3x3 arrays.

Notes
-----
This is not a tensor class hierarchy. Every routine takes numpy arrays whose
trailing axes are (3,) for vectors, (3, 3) for second-order tensors and
(3, 3, 3) for third-order tensors; leading axes are treated as a batch, so the
same code runs on a single tensor or on every node of a grid.

Third-order tensors follow the convention that the last index is the one
produced by a gradient: ``b[i, r, k] = d B[i, r] / d zeta[k]``.
"""

import numpy as np

from .errors import NotPSD, NotSkew

IDENTITY = np.eye(3)

# alternator e_ijk
_EPS = np.zeros((3, 3, 3))
_EPS[0, 1, 2] = _EPS[1, 2, 0] = _EPS[2, 0, 1] = 1.0
_EPS[0, 2, 1] = _EPS[2, 1, 0] = _EPS[1, 0, 2] = -1.0

SYM_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
"""Component order used when a symmetric tensor is flattened to 6 numbers."""


def transpose(t):
    return np.swapaxes(t, -1, -2)


def sym(t):
    return 0.5 * (t + transpose(t))


def skw(t):
    return 0.5 * (t - transpose(t))


def trace(t):
    return np.trace(t, axis1=-2, axis2=-1)


def dev(t):
    return t - trace(t)[..., None, None] * IDENTITY / 3.0


def norm(t):
    """Frobenius norm over the trailing two axes."""
    return np.sqrt(np.sum(t * t, axis=(-2, -1)))


def inner(a, b):
    """Full contraction ``a . b = a_ij b_ij``."""
    return np.sum(a * b, axis=(-2, -1))


def outer(u, v):
    return u[..., :, None] * v[..., None, :]


def matmul(a, b):
    return np.matmul(a, b)


def decompose(t):
    """
    Split a second-order tensor into its symmetric, skew, trace and deviatoric parts.

    Parameters
    ----------
    t : numpy.ndarray of shape (..., 3, 3)

    Returns
    -------
    sym, skw : numpy.ndarray of shape (..., 3, 3)
        ``sym + skw == t``.
    trace : numpy.ndarray of shape (...)
    dev : numpy.ndarray of shape (..., 3, 3)
        Traceless part ``t - tr(t) I / 3``.
    """
    t = np.asarray(t, dtype=float)
    return sym(t), skw(t), trace(t), dev(t)


def sym_to_vec6(s):
    """Flatten symmetric tensors to components (11, 22, 33, 12, 13, 23)."""
    s = np.asarray(s, dtype=float)
    return np.stack([s[..., i, j] for i, j in SYM_INDEX], axis=-1)


def vec6_to_sym(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    for c, (i, j) in enumerate(SYM_INDEX):
        out[..., i, j] = v[..., c]
        out[..., j, i] = v[..., c]
    return out


def psd_tolerance(s):
    """Eigenvalues above ``-tol`` count as round-off and are clamped to zero."""
    return 1e-10 * (1.0 + norm(s))


def _fix_signs(vecs):
    # largest-magnitude component positive; first index wins ties
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(3)[:, None], axis=-2)
    picked = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    return vecs * np.where(picked < 0, -1.0, 1.0)


def _axes_basis(vecs, cluster):
    """Orthonormal basis of span(vecs[:, cluster]) built from the coordinate axes."""
    v = vecs[:, cluster]
    proj = v @ v.T
    basis = []
    for axis in IDENTITY:
        w = proj @ axis
        for b in basis:
            w = w - (b @ w) * b
        n = np.linalg.norm(w)
        if n > 1e-6:
            basis.append(w / n)
        if len(basis) == len(cluster):
            break
    return np.array(basis).T


def eig_sym(s):
    """
    Eigenpairs of a symmetric tensor in descending eigenvalue order.

    Degenerate eigenspaces are given a reproducible basis: the coordinate axes
    are projected onto the eigenspace and orthonormalized in order c1, c2, c3.
    Each eigenvector is signed so that its largest component is positive.

    Parameters
    ----------
    s : numpy.ndarray of shape (..., 3, 3)

    Returns
    -------
    values : numpy.ndarray of shape (..., 3)
        Eigenvalues, largest first. Small negative values are not clamped.
    vectors : numpy.ndarray of shape (..., 3, 3)
        ``vectors[..., :, k]`` is the unit eigenvector for ``values[..., k]``.
    """
    s = sym(np.asarray(s, dtype=float))
    values, vectors = np.linalg.eigh(s)
    values = values[..., ::-1].copy()
    vectors = vectors[..., :, ::-1].copy()
    vectors = _fix_signs(vectors)

    flat_vals = values.reshape(-1, 3)
    flat_vecs = vectors.reshape(-1, 3, 3)
    tol = (1e-10 * (1.0 + norm(s))).reshape(-1)
    gaps = np.abs(np.diff(flat_vals, axis=-1)) <= tol[:, None]
    for n in np.nonzero(gaps.any(axis=-1))[0]:
        clusters, current = [], [0]
        for k in (1, 2):
            if gaps[n, k - 1]:
                current.append(k)
            else:
                clusters.append(current)
                current = [k]
        clusters.append(current)
        for cluster in clusters:
            if len(cluster) > 1:
                flat_vecs[n][:, cluster] = _axes_basis(flat_vecs[n], cluster)
    return values, flat_vecs.reshape(vectors.shape)


def sqrt_psd(s):
    """
    Principal square root of a positive semi-definite symmetric tensor.

    Eigenvalues in ``(-tol, 0)`` with ``tol = 1e-10 (1 + |s|)`` are treated
    as zero; anything more negative raises :class:`NotPSD`.
    """
    s = np.asarray(s, dtype=float)
    values, vectors = eig_sym(s)
    tol = psd_tolerance(s)
    if np.any(values[..., -1] < -tol):
        raise NotPSD(f"minimum eigenvalue {np.min(values[..., -1]):.3e} below -{np.max(tol):.1e}")
    roots = np.sqrt(np.clip(values, 0.0, None))
    return np.einsum("...ik,...k,...jk->...ij", vectors, roots, vectors)


def project_psd(s):
    """
    Clamp negative eigenvalues of symmetric tensors to zero.

    Returns the projected tensors and, per tensor, the Frobenius norm of the
    correction. Tensors with no negative eigenvalue are returned bit-for-bit.
    """
    s = np.asarray(s, dtype=float)
    out = s.copy()
    flat = out.reshape(-1, 3, 3)
    mags = np.zeros(flat.shape[0])
    lowest = np.linalg.eigvalsh(flat)[:, 0]
    bad = np.nonzero(lowest < 0.0)[0]
    if bad.size:
        vals, vecs = np.linalg.eigh(flat[bad])
        fixed = np.einsum("nik,nk,njk->nij", vecs, np.clip(vals, 0.0, None), vecs)
        mags[bad] = norm(fixed - flat[bad])
        flat[bad] = fixed
    return out, mags.reshape(s.shape[:-2])


def pinv_sym(s, rel_cutoff=1e-12):
    """
    Pseudo-inverse of symmetric PSD tensors.

    Eigenvalues at or below ``rel_cutoff * tr(s)`` are treated as zero.
    Returns the pseudo-inverse and the projector onto the retained range.
    """
    s = sym(np.asarray(s, dtype=float))
    vals, vecs = np.linalg.eigh(s)
    cut = rel_cutoff * np.abs(trace(s))[..., None]
    keep = vals > np.maximum(cut, 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    pinv = np.einsum("...ik,...k,...jk->...ij", vecs, inv, vecs)
    proj = np.einsum("...ik,...k,...jk->...ij", vecs, keep.astype(float), vecs)
    return pinv, proj


def skew_from_axial(w):
    """Skew tensor ``W`` with ``W u = w x u``."""
    w = np.asarray(w, dtype=float)
    return -np.einsum("ijk,...k->...ij", _EPS, w)


def axial_from_skew(t, atol=1e-12):
    """Axial vector of a skew tensor; rejects inputs with a symmetric part above ``atol``."""
    t = np.asarray(t, dtype=float)
    if np.any(norm(sym(t)) > atol):
        raise NotSkew("tensor has a non-negligible symmetric part")
    return -0.5 * np.einsum("ijk,...ij->...k", _EPS, t)


def ten3_apply_normal(m, n):
    """``(m n)_ij = m_ijl n_l``."""
    return np.einsum("...ijl,...l->...ij", m, n)


def ten3_grad_contract(b, m):
    """``(b m^t)_ij = b_irk m_rjk`` for a gradient ``b`` and a hyperstress ``m``."""
    return np.einsum("...irk,...rjk->...ij", b, m)


def minor_right_transpose(m):
    return np.swapaxes(m, -1, -2)


def is_minor_left_symmetric(t, atol=0.0):
    t = np.asarray(t)
    return bool(np.all(np.abs(t - np.swapaxes(t, -3, -2)) <= atol))
