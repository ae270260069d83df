import numpy as np
import pytest

from dcl import losses as L
from dcl.rng import Rng
from dcl.tensor import Tensor


def t(x):
    return Tensor(np.asarray(x, dtype=np.float64))


class TestNce:
    def test_zero_deltas(self):
        assert abs(L.loss_nce(t([0.0]), t([0.0])).item() - 2 * np.log(2)) < 1e-12

    def test_hand_value_ln3(self):
        # sig(-ln 3) = 1/4: loss = ln 4 + ln(4/3)
        val = L.loss_nce(t([np.log(3)]), t([np.log(3)])).item()
        assert abs(val - (np.log(4) + np.log(4 / 3))) < 1e-12

    def test_perfect_separation(self):
        assert L.loss_nce(t([-1e9]), t([1e9])).item() == 0.0

    def test_monotonicity(self):
        base = L.loss_nce(t([1.0, 2.0]), t([0.5, 1.5])).item()
        assert L.loss_nce(t([0.9, 2.0]), t([0.5, 1.5])).item() < base
        assert L.loss_nce(t([1.0, 2.0]), t([0.4, 1.5])).item() > base


class TestInce:
    def test_uniform_scores(self):
        val = L.loss_ince(t([1.3]), t([[1.3] * 7])).item()
        assert abs(val - np.log(8)) < 1e-12

    def test_single_negative_hand_value(self):
        val = L.loss_ince(t([0.0]), t([[np.log(2.0)]])).item()
        assert abs(val - np.log(1.5)) < 1e-12

    def test_vanishing_negatives(self):
        assert abs(L.loss_ince(t([0.0]), t([[1e9, 1e9]])).item()) < 1e-12

    def test_per_anchor_offset_invariance(self):
        rng = Rng(0)
        dp = rng.normal(64)
        dn = rng.normal(64 * 31).reshape(64, 31)
        a = rng.normal(64) * 100.0
        base = L.loss_ince(t(dp), t(dn)).item()
        shifted = L.loss_ince(t(dp + a), t(dn + a[:, None])).item()
        assert abs(base - shifted) < 1e-10

    def test_needs_negatives(self):
        import dcl.tensor as T
        with pytest.raises(T.ShapeError):
            L.loss_ince(t([0.0]), t([0.0]))


class TestScl:
    def test_zero_deltas(self):
        assert abs(L.loss_scl(t([0.0]), t([0.0])).item() + 1.0) < 1e-12

    def test_hand_value_ln2(self):
        val = L.loss_scl(t([np.log(2)]), t([np.log(2)])).item()
        assert abs(val - (-1.0 + 0.25)) < 1e-12

    def test_vanishes_at_infinity(self):
        assert L.loss_scl(t([1e9]), t([1e9])).item() == 0.0

    def test_clamp_keeps_finite(self):
        val = L.loss_scl(t([-1e6]), t([-1e6])).item()
        assert np.isfinite(val)
        # clamp caps both exponents at e^20
        assert abs(val - (-2 * np.exp(20.0) + np.exp(20.0))) < 1e-6


class TestNwj:
    def test_zero_deltas(self):
        assert abs(L.loss_nwj(t([0.0]), t([0.0])).item() - 1.0) < 1e-12

    def test_simple_values(self):
        assert abs(L.loss_nwj(t([1.0]), t([0.0])).item() - 2.0) < 1e-12
        assert abs(L.loss_nwj(t([0.0]), t([np.log(4.0)])).item() - 0.25) < 1e-12

    def test_finite_over_huge_range(self):
        for v in (-1e6, -10.0, 0.0, 10.0, 1e6):
            assert np.isfinite(L.loss_nwj(t([v]), t([v])).item())


class TestOriginalScl:
    def test_unit_rows(self):
        z = t([[1.0, 0.0]])
        assert abs(L.loss_scl_original(z, z, z).item() + 1.0) < 1e-12

    def test_orthogonal_rows(self):
        z = t([[1.0, 0.0]])
        w = t([[0.0, 1.0]])
        assert L.loss_scl_original(z, w, w).item() == 0.0

    def test_hand_value(self):
        z = t([[1.0, 0.0]])
        zt = t([[0.5, 0.0]])
        zn = t([[2.0, 0.0]])
        assert abs(L.loss_scl_original(z, zt, zn).item() - 3.0) < 1e-12


def test_batch_permutation_invariance():
    rng = Rng(1)
    dp = rng.normal(32)
    dn = rng.normal(32)
    perm = Rng(2).permutation(32)
    for fn in (L.loss_nce, L.loss_scl, L.loss_nwj):
        assert abs(fn(t(dp), t(dn)).item() - fn(t(dp[perm]), t(dn[perm])).item()) < 1e-12
    dn2 = rng.normal(32 * 5).reshape(32, 5)
    assert abs(L.loss_ince(t(dp), t(dn2)).item()
               - L.loss_ince(t(dp[perm]), t(dn2[perm])).item()) < 1e-12


def test_ince_monotonicity():
    dp = np.zeros(4)
    dn = np.ones((4, 3))
    base = L.loss_ince(t(dp), t(dn)).item()
    lower_pos = dp.copy()
    lower_pos[2] -= 0.1
    assert L.loss_ince(t(lower_pos), t(dn)).item() < base
    lower_neg = dn.copy()
    lower_neg[1, 1] -= 0.1
    assert L.loss_ince(t(dp), t(lower_neg)).item() > base


def test_no_nan_across_extreme_range():
    rng = Rng(3)
    dp = rng.uniform(100, -1e6, 1e6)
    dn = rng.uniform(100, -1e6, 1e6)
    for fn in (L.loss_nce, L.loss_scl, L.loss_nwj):
        assert np.isfinite(fn(t(dp), t(dn)).item())
    assert np.isfinite(L.loss_ince(t(dp), t(dn.reshape(100, 1).repeat(3, 1))).item())


def test_loss_kind_validation():
    with pytest.raises(ValueError):
        L.LossKind(kind="delta-banana")
    with pytest.raises(ValueError):
        L.LossKind(kind=L.DELTA_INCE, k=-1)
    assert L.LossKind(kind=L.DELTA_INCE, k=0).clamp_hi == 20.0
