import numpy as np
import pytest

from osdl.errors import (
    DimensionMismatchError,
    InvalidLengthError,
    InvalidOrderError,
    TooManyLevelsError,
    UnsupportedFamilyError,
)
from osdl.wavelets import (
    cropped_dictionary,
    dwt2_cascade,
    idwt2_cascade,
    max_levels,
    separable_adjoint,
    separable_apply,
    synthesis_matrix,
    wavelet_filters,
)

ALL_FILTERS = ([("haar", 1)] + [("daubechies", n) for n in range(2, 11)]
               + [("symlet", n) for n in range(2, 11)])


@pytest.mark.parametrize("family,order", ALL_FILTERS)
def test_filter_invariants(family, order):
    f = wavelet_filters(family, order)
    h = f.lowpass
    assert abs(h.sum() - np.sqrt(2)) < 1e-10
    assert abs(h @ h - 1.0) < 1e-10
    for s in range(1, f.taps // 2):
        assert abs(h[2 * s:] @ h[:-2 * s]) < 1e-10


def test_haar_is_the_defining_case():
    f = wavelet_filters("haar")
    assert np.allclose(f.lowpass, [1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert f.taps == 2


def test_sym4_has_eight_taps():
    f = wavelet_filters("symlet", 4)
    assert f.taps == 8
    assert abs(f.lowpass.sum() - np.sqrt(2)) < 1e-10
    assert abs(f.lowpass @ f.lowpass - 1.0) < 1e-10


def test_db2_even_shift_orthogonality():
    f = wavelet_filters("daubechies", 2)
    assert f.taps == 4
    assert abs(f.lowpass[2:] @ f.lowpass[:2]) < 1e-10


@pytest.mark.parametrize("family,order", ALL_FILTERS)
def test_highpass_alternating_flip(family, order):
    f = wavelet_filters(family, order)
    T = f.taps
    expect = [(-1) ** i * f.lowpass[T - 1 - i] for i in range(T)]
    assert np.allclose(f.highpass, expect, atol=0)


def test_filter_errors():
    with pytest.raises(UnsupportedFamilyError):
        wavelet_filters("coiflet", 2)
    with pytest.raises(InvalidOrderError):
        wavelet_filters("daubechies", 11)
    with pytest.raises(InvalidOrderError):
        wavelet_filters("symlet", 1)


def test_haar_synthesis_length4_one_level():
    W = synthesis_matrix(wavelet_filters("haar"), 4, 1).matrix
    a = 1 / np.sqrt(2)
    expect = np.array([[a, 0, a, 0],
                       [a, 0, -a, 0],
                       [0, a, 0, a],
                       [0, a, 0, -a]])
    assert np.allclose(W, expect)
    assert np.allclose(W.T @ W, np.eye(4), atol=1e-12)


def test_haar_coarsest_atom_is_constant():
    W = synthesis_matrix(wavelet_filters("haar"), 8, 3).matrix
    e1 = np.zeros(8)
    e1[0] = 1.0
    assert np.allclose(W @ e1, np.full(8, 1 / np.sqrt(8)))


def test_db2_synthesis_orthonormal():
    W = synthesis_matrix(wavelet_filters("daubechies", 2), 16, 2).matrix
    assert np.max(np.abs(W.T @ W - np.eye(16))) < 1e-9


@pytest.mark.parametrize("family,order", [("haar", 1), ("daubechies", 4),
                                          ("daubechies", 7), ("daubechies", 10),
                                          ("symlet", 4), ("symlet", 8)])
@pytest.mark.parametrize("L", [8, 16, 32, 64])
def test_synthesis_orthonormal_all_lengths(family, order, L):
    W = synthesis_matrix(wavelet_filters(family, order), L).matrix
    assert np.max(np.abs(W.T @ W - np.eye(L))) < 1e-9
    assert np.allclose(np.linalg.norm(W, axis=0), 1.0, atol=1e-10)


def test_synthesis_errors():
    f = wavelet_filters("haar")
    with pytest.raises(InvalidLengthError):
        synthesis_matrix(f, 12)
    with pytest.raises(TooManyLevelsError):
        synthesis_matrix(f, 8, levels=4)
    with pytest.raises(TooManyLevelsError):
        synthesis_matrix(f, 8, levels=0)


def test_cropped_extended_length():
    crop = cropped_dictionary(wavelet_filters("symlet", 4), 64)
    assert crop.extended_len == 128
    assert crop.crop_offset == 32


def test_cropped_unit_norm_full_rank():
    crop = cropped_dictionary(wavelet_filters("haar"), 8, levels=1)
    assert np.allclose(np.linalg.norm(crop.atoms, axis=0), 1.0, atol=1e-10)
    assert np.linalg.matrix_rank(crop.atoms) == 8
    assert np.all(np.linalg.norm(crop.atoms, axis=0) > 1e-12)


@pytest.mark.parametrize("family,order,n", [("symlet", 4, 64),
                                            ("daubechies", 7, 64),
                                            ("symlet", 4, 16)])
def test_cropped_perfect_reconstruction(family, order, n):
    crop = cropped_dictionary(wavelet_filters(family, order), n)
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = rng.standard_normal(n)
        coef, *_ = np.linalg.lstsq(crop.atoms, f, rcond=None)
        assert np.linalg.norm(crop.atoms @ coef - f) < 1e-8


def test_cropped_column_census_is_stable():
    # the sym4 construction at n=64 keeps 86 of 128 columns; pinned as a
    # regression guard on the crop/drop logic
    crop = cropped_dictionary(wavelet_filters("symlet", 4), 64)
    assert crop.natoms == 86
    assert crop.norm_scales.shape == (86,)
    assert np.all(crop.norm_scales >= 1.0 - 1e-12)


def test_separable_apply_zero_and_rank_one():
    crop = cropped_dictionary(wavelet_filters("haar"), 8)
    Lp = crop.natoms
    assert np.allclose(separable_apply(crop, np.zeros((Lp, Lp))), 0.0)
    C = np.zeros((Lp, Lp))
    C[3, 5] = 2.0
    out = separable_apply(crop, C)
    assert np.allclose(out, 2.0 * np.outer(crop.atoms[:, 3], crop.atoms[:, 5]),
                       atol=1e-12)


def test_separable_apply_matches_kronecker():
    crop = cropped_dictionary(wavelet_filters("symlet", 4), 8)
    rng = np.random.default_rng(1)
    Lp = crop.natoms
    K = np.kron(crop.atoms, crop.atoms)
    for _ in range(3):
        C = rng.standard_normal((Lp, Lp))
        out = separable_apply(crop, C)
        expect = (K @ C.ravel(order="F")).reshape(8, 8, order="F")
        assert np.max(np.abs(out - expect)) < 1e-10


def test_separable_adjoint_identity():
    crop = cropped_dictionary(wavelet_filters("daubechies", 2), 8)
    rng = np.random.default_rng(2)
    Lp = crop.natoms
    for _ in range(5):
        C = rng.standard_normal((Lp, Lp))
        P = rng.standard_normal((8, 8))
        lhs = np.sum(separable_apply(crop, C) * P)
        rhs = np.sum(C * separable_adjoint(crop, P))
        assert abs(lhs - rhs) < 1e-10


def test_separable_dimension_errors():
    crop = cropped_dictionary(wavelet_filters("haar"), 8)
    with pytest.raises(DimensionMismatchError):
        separable_apply(crop, np.zeros((3, 3)))
    with pytest.raises(DimensionMismatchError):
        separable_adjoint(crop, np.zeros((3, 3)))


def test_dwt2_cascade_roundtrip_and_isometry():
    f = wavelet_filters("symlet", 4)
    rng = np.random.default_rng(3)
    img = rng.standard_normal((16, 16))
    C = dwt2_cascade(img, f)
    assert abs(np.sum(C * C) - np.sum(img * img)) < 1e-10
    back = idwt2_cascade(C, f)
    assert np.max(np.abs(back - img)) < 1e-10


def test_max_levels_allows_full_depth():
    assert max_levels(128) == 7
    W = synthesis_matrix(wavelet_filters("symlet", 8), 32, levels=5).matrix
    assert np.max(np.abs(W.T @ W - np.eye(32))) < 1e-9
