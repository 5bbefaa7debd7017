"""Packed symmetric tensor algebra against dense-matrix references."""

import numpy as np
import pytest

from congesta.tensors import (
    SymTensor,
    contract,
    deviatoric_split,
    field_contract,
    field_deviator,
    field_norm,
    field_trace,
    ncomp,
)


def test_contract_known_value():
    a = SymTensor.from_matrix([[1.0, 2.0], [2.0, 0.0]])
    b = SymTensor.from_matrix([[0.0, 1.0], [1.0, 3.0]])
    assert contract(a, b) == 4.0


def test_contract_matches_dense_double_sum():
    rng = np.random.default_rng(20240801)
    for dim in (1, 2, 3):
        for _ in range(50):
            ma = rng.standard_normal((dim, dim))
            mb = rng.standard_normal((dim, dim))
            ma = 0.5 * (ma + ma.T)
            mb = 0.5 * (mb + mb.T)
            a = SymTensor.from_matrix(ma)
            b = SymTensor.from_matrix(mb)
            assert contract(a, b) == pytest.approx(np.sum(ma * mb), abs=1e-13)


def test_norm_is_frobenius():
    rng = np.random.default_rng(7)
    m = rng.standard_normal((3, 3))
    m = 0.5 * (m + m.T)
    assert SymTensor.from_matrix(m).norm() == pytest.approx(
        np.linalg.norm(m), rel=1e-14
    )


def test_deviatoric_split_orthogonality():
    rng = np.random.default_rng(11)
    for dim in (1, 2, 3):
        for _ in range(20):
            m = rng.standard_normal((dim, dim))
            t = SymTensor.from_matrix(0.5 * (m + m.T))
            dev, tau = deviatoric_split(t)
            assert tau == pytest.approx(np.trace(t.to_matrix()), abs=1e-13)
            assert dev.trace() == pytest.approx(0.0, abs=1e-12)
            # dev is contract-orthogonal to the identity
            eye = SymTensor.identity(dim)
            assert contract(dev, eye) == pytest.approx(0.0, abs=1e-12)
            # reassembly
            back = dev + (tau / dim) * eye
            np.testing.assert_allclose(back.entries, t.entries, atol=1e-13)


def test_deviator_vanishes_in_1d():
    dev, tau = deviatoric_split(SymTensor(1, [3.5]))
    assert tau == 3.5
    assert dev.norm() == 0.0


def test_roundtrip_matrix_packing():
    rng = np.random.default_rng(3)
    for dim in (1, 2, 3):
        m = rng.standard_normal((dim, dim))
        m = 0.5 * (m + m.T)
        t = SymTensor.from_matrix(m)
        assert t.entries.shape == (ncomp(dim),)
        np.testing.assert_allclose(t.to_matrix(), m, atol=0)


def test_algebra_and_validation():
    a = SymTensor(2, [1.0, 2.0, 0.5])
    b = SymTensor(2, [0.0, -1.0, 1.5])
    np.testing.assert_allclose((a + b).entries, [1.0, 1.0, 2.0])
    np.testing.assert_allclose((a - b).entries, [1.0, 3.0, -1.0])
    np.testing.assert_allclose((2.0 * a).entries, [2.0, 4.0, 1.0])
    np.testing.assert_allclose((-a).entries, [-1.0, -2.0, -0.5])
    with pytest.raises(ValueError):
        SymTensor(4, [0.0] * 10)
    with pytest.raises(ValueError):
        SymTensor(2, [1.0, 2.0])
    with pytest.raises(ValueError):
        contract(a, SymTensor(1, [1.0]))
    with pytest.raises(ValueError):
        SymTensor.from_matrix(np.zeros((2, 3)))


def test_field_helpers_match_scalar_ops():
    rng = np.random.default_rng(20240801)
    for dim in (1, 2, 3):
        nc = ncomp(dim)
        a = rng.standard_normal((6, 4, nc))
        b = rng.standard_normal((6, 4, nc))
        tr = field_trace(a, dim)
        dv = field_deviator(a, dim)
        ct = field_contract(a, b, dim)
        nm = field_norm(a, dim)
        for i in range(6):
            for j in range(4):
                ta = SymTensor(dim, a[i, j])
                tb = SymTensor(dim, b[i, j])
                assert tr[i, j] == pytest.approx(ta.trace(), abs=1e-13)
                d_ref, _ = deviatoric_split(ta)
                np.testing.assert_allclose(dv[i, j], d_ref.entries, atol=1e-13)
                assert ct[i, j] == pytest.approx(contract(ta, tb), abs=1e-12)
                assert nm[i, j] == pytest.approx(ta.norm(), abs=1e-12)
