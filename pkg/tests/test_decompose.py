import numpy as np
import pytest
from oracle_utils import decompose_ref, kl_ref, softmax_ref

from atkd.decompose import LogitBatch, batch_decompose, token_decompose
from atkd.errors import InvalidInputError


def random_batch(rng, T, C, scale=3.0):
    tz = rng.normal(scale=scale, size=(T, C))
    sz = rng.normal(scale=scale, size=(T, C))
    tg = rng.integers(0, C, size=T)
    return tz, sz, tg


class TestTokenDecompose:
    def test_identical_distributions(self):
        z = np.array([1.5, -0.3, 0.8, 2.0])
        d = token_decompose(z, z.copy(), 2)
        assert d.tkd == 0.0 and d.dkd == 0.0 and d.kl_total == 0.0
        assert abs(d.unc - (1.0 - softmax_ref(list(z))[2])) < 1e-12

    def test_two_classes_degenerate_dkd(self):
        d = token_decompose([2.0, -1.0], [0.5, 0.5], 0)
        assert d.dkd == 0.0
        assert abs(d.kl_total - d.tkd) < 1e-12

    def test_brute_force_oracle(self):
        d = token_decompose([2.0, 1.0, 0.0], [0.0, 1.0, 2.0], 0)
        unc, tkd, dkd, kl = decompose_ref([2.0, 1.0, 0.0], [0.0, 1.0, 2.0], 0)
        assert abs(d.unc - unc) < 1e-12
        assert abs(d.tkd - tkd) < 1e-12
        assert abs(d.dkd - dkd) < 1e-12
        assert abs(d.kl_total - kl) < 1e-12
        assert abs(d.kl_total - (d.tkd + d.unc * d.dkd)) < 1e-9

    def test_matches_oracle_on_random_tokens(self):
        rng = np.random.default_rng(101)
        for _ in range(50):
            C = int(rng.integers(2, 24))
            tz = rng.normal(scale=4.0, size=C)
            sz = rng.normal(scale=4.0, size=C)
            g = int(rng.integers(0, C))
            d = token_decompose(tz, sz, g)
            ref = decompose_ref(list(tz), list(sz), g)
            assert np.allclose(d, ref, rtol=0, atol=1e-11)


class TestDecompositionIdentity:
    @pytest.mark.parametrize("C", [2, 3, 17, 500])
    def test_identity_thousand_triples(self, C):
        rng = np.random.default_rng(400 + C)
        tz, sz, tg = random_batch(rng, 1000, C, scale=4.0)
        d = batch_decompose(LogitBatch(tz, sz, tg))
        gap = np.abs(d.kl_total - (d.tkd + d.unc * d.dkd))
        assert gap.max() <= 1e-9

    def test_parts_are_nonnegative(self):
        rng = np.random.default_rng(55)
        tz, sz, tg = random_batch(rng, 300, 12)
        d = batch_decompose(LogitBatch(tz, sz, tg))
        assert (d.tkd >= 0).all() and (d.dkd >= 0).all() and (d.kl_total >= 0).all()

    def test_unc_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(56)
        tz, sz, tg = random_batch(rng, 200, 9)
        d = batch_decompose(LogitBatch(tz, sz, tg))
        assert (d.unc > 0).all() and (d.unc < 1).all()

    def test_unc_decays_as_target_logit_grows(self):
        # crank the teacher's target logit up a ramp; unc must fall monotonically
        base = np.array([0.0, 1.0, -0.5, 0.3])
        student = np.array([0.1, 0.2, 0.3, 0.4])
        uncs = []
        for bump in np.linspace(0.0, 30.0, 16):
            z = base.copy()
            z[1] += bump
            uncs.append(token_decompose(z, student, 1).unc)
        assert all(b < a for a, b in zip(uncs, uncs[1:]))
        assert uncs[-1] < 1e-10


class TestBatchDecompose:
    def test_total_kl_matches_double_loop(self):
        rng = np.random.default_rng(202)
        tz, sz, tg = random_batch(rng, 16, 20)
        d = batch_decompose(LogitBatch(tz, sz, tg))
        ref = sum(
            kl_ref(softmax_ref(list(tz[t])), softmax_ref(list(sz[t])))
            for t in range(16)
        )
        assert abs(d.kl_total.sum() - ref) < 1e-9

    def test_masked_positions_are_zero(self):
        rng = np.random.default_rng(203)
        tz, sz, tg = random_batch(rng, 8, 5)
        mask = np.array([1, 0, 1, 0, 0, 1, 1, 0], dtype=bool)
        d = batch_decompose(LogitBatch(tz, sz, tg, mask))
        off = ~mask
        for arr in (d.unc, d.tkd, d.dkd, d.kl_total):
            assert (arr[off] == 0.0).all()

    def test_all_false_mask_yields_zeros(self):
        rng = np.random.default_rng(204)
        tz, sz, tg = random_batch(rng, 3, 4)
        d = batch_decompose(LogitBatch(tz, sz, tg, np.zeros(3, dtype=bool)))
        assert (d.kl_total == 0.0).all() and (d.unc == 0.0).all()

    def test_masking_linearity(self):
        # decomposing the full batch under a mask == decomposing the sub-batch
        rng = np.random.default_rng(205)
        tz, sz, tg = random_batch(rng, 10, 7)
        mask = rng.random(10) < 0.6
        full = batch_decompose(LogitBatch(tz, sz, tg, mask))
        sub = batch_decompose(LogitBatch(tz[mask], sz[mask], tg[mask]))
        for a, b in (
            (full.unc[mask], sub.unc),
            (full.tkd[mask], sub.tkd),
            (full.dkd[mask], sub.dkd),
            (full.kl_total[mask], sub.kl_total),
        ):
            assert np.array_equal(a, b)

    def test_reverse_direction_swaps_arguments(self):
        rng = np.random.default_rng(206)
        tz, sz, tg = random_batch(rng, 5, 6)
        fwd_swapped = batch_decompose(LogitBatch(sz, tz, tg))
        rev = batch_decompose(LogitBatch(tz, sz, tg), reverse=True)
        assert np.allclose(rev.kl_total, fwd_swapped.kl_total, rtol=0, atol=1e-12)
        assert np.allclose(rev.tkd, fwd_swapped.tkd, rtol=0, atol=1e-12)
        assert np.allclose(rev.dkd, fwd_swapped.dkd, rtol=0, atol=1e-12)
        # but unc stays the teacher's non-target mass
        plain = batch_decompose(LogitBatch(tz, sz, tg))
        assert np.array_equal(rev.unc, plain.unc)


class TestLogitBatchValidation:
    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            LogitBatch(np.zeros((3, 4)), np.zeros((3, 5)), np.zeros(3, dtype=int))

    def test_target_out_of_range_names_token(self):
        with pytest.raises(InvalidInputError, match="token 1"):
            LogitBatch(np.zeros((2, 3)), np.zeros((2, 3)), np.array([0, 7]))

    def test_non_finite_teacher(self):
        tz = np.zeros((2, 3))
        tz[1, 2] = np.inf
        with pytest.raises(InvalidInputError, match="token 1, class 2"):
            LogitBatch(tz, np.zeros((2, 3)), np.zeros(2, dtype=int))

    def test_float_targets_rejected(self):
        with pytest.raises(InvalidInputError):
            LogitBatch(np.zeros((2, 3)), np.zeros((2, 3)), np.array([0.0, 1.0]))

    def test_mask_length_checked(self):
        with pytest.raises(InvalidInputError):
            LogitBatch(
                np.zeros((2, 3)),
                np.zeros((2, 3)),
                np.zeros(2, dtype=int),
                np.ones(3, dtype=bool),
            )

    def test_missing_student_refused_where_required(self):
        b = LogitBatch(np.zeros((2, 3)), None, np.zeros(2, dtype=int))
        with pytest.raises(InvalidInputError):
            batch_decompose(b)
