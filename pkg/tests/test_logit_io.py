import hashlib
import math
import struct

import numpy as np
import pytest

from atkd.checkpoint import Checkpoint
from atkd.decompose import LogitBatch, batch_decompose
from atkd.errors import (
    BadMagicError,
    InvalidInputError,
    InvariantViolationError,
    TruncatedFileError,
    VersionMismatchError,
)
from atkd.logit_io import (
    REPORT_HEADER,
    kde_emit,
    read_logit_file,
    silverman_bandwidth,
    write_logit_file,
    write_report,
)
from atkd.model import ModelConfig, TinyLM, param_count
from atkd.objective import TokenSplit, rank_and_split


def make_batch(seed, T=16, C=20, with_student=True):
    rng = np.random.default_rng(seed)
    # quantize through f32 so values survive the storage format exactly
    teacher = rng.normal(scale=2.0, size=(T, C)).astype(np.float32).astype(np.float64)
    student = None
    if with_student:
        student = rng.normal(scale=2.0, size=(T, C)).astype(np.float32).astype(np.float64)
    mask = rng.random(T) < 0.8
    if not mask.any():
        mask[0] = True
    return LogitBatch(teacher, student, rng.integers(0, C, size=T), mask)


class TestLogitFile:
    def test_minimal_teacher_only(self, tmp_path):
        path = str(tmp_path / "min.lgt")
        batch = LogitBatch(np.array([[0.5, -0.5]]), None, np.array([0]))
        write_logit_file(batch, path)
        got = read_logit_file(path)
        assert got.student_logits is None
        assert got.num_tokens == 1 and got.num_classes == 2
        np.testing.assert_array_equal(got.teacher_logits, batch.teacher_logits)
        assert got.mask.tolist() == [True]

    def test_size_formula(self, tmp_path):
        for with_student, T, C in [(True, 16, 20), (False, 3, 5)]:
            path = str(tmp_path / f"s{int(with_student)}.lgt")
            write_logit_file(make_batch(0, T, C, with_student), path)
            expected = 32 + 4 * T * C * (1 + with_student) + 4 * T + T
            assert len(open(path, "rb").read()) == expected

    def test_write_read_write_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.lgt"), str(tmp_path / "b.lgt")
        write_logit_file(make_batch(7), a)
        write_logit_file(read_logit_file(a), b)
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_roundtrip_preserves_all_fields(self, tmp_path):
        path = str(tmp_path / "r.lgt")
        batch = make_batch(3)
        write_logit_file(batch, path)
        got = read_logit_file(path)
        np.testing.assert_array_equal(got.teacher_logits, batch.teacher_logits)
        np.testing.assert_array_equal(got.student_logits, batch.student_logits)
        np.testing.assert_array_equal(got.targets, batch.targets)
        np.testing.assert_array_equal(got.mask, batch.mask)

    def _raw(self, tmp_path, seed=1):
        path = str(tmp_path / "base.lgt")
        write_logit_file(make_batch(seed), path)
        return bytearray(open(path, "rb").read())

    def _parse(self, tmp_path, blob):
        path = str(tmp_path / "mut.lgt")
        open(path, "wb").write(bytes(blob))
        return read_logit_file(path)

    def test_bad_magic_offset_zero(self, tmp_path):
        blob = self._raw(tmp_path)
        blob[0] = ord("X")
        with pytest.raises(BadMagicError) as e:
            self._parse(tmp_path, blob)
        assert e.value.offset == 0

    def test_version_mismatch(self, tmp_path):
        blob = self._raw(tmp_path)
        struct.pack_into("<I", blob, 8, 99)
        with pytest.raises(VersionMismatchError) as e:
            self._parse(tmp_path, blob)
        assert e.value.offset == 8

    def test_truncation_reports_actual_length(self, tmp_path):
        blob = self._raw(tmp_path)
        cut = len(blob) - 10
        with pytest.raises(TruncatedFileError) as e:
            self._parse(tmp_path, blob[:cut])
        assert e.value.offset == cut

    def test_truncated_header(self, tmp_path):
        blob = self._raw(tmp_path)
        with pytest.raises(TruncatedFileError):
            self._parse(tmp_path, blob[:20])

    def test_unknown_flag_bits(self, tmp_path):
        blob = self._raw(tmp_path)
        struct.pack_into("<I", blob, 28, 0x3)
        with pytest.raises(InvariantViolationError, match="flag"):
            self._parse(tmp_path, blob)

    def test_trailing_bytes(self, tmp_path):
        blob = self._raw(tmp_path) + b"xx"
        with pytest.raises(InvariantViolationError) as e:
            self._parse(tmp_path, blob)
        assert e.value.offset == len(blob) - 2

    def test_target_out_of_range_with_offset(self, tmp_path):
        T, C = 16, 20
        blob = self._raw(tmp_path)
        targets_at = 32 + 4 * T * C * 2
        struct.pack_into("<I", blob, targets_at + 4 * 5, C)
        with pytest.raises(InvariantViolationError) as e:
            self._parse(tmp_path, blob)
        assert e.value.offset == targets_at + 4 * 5

    def test_bad_mask_byte(self, tmp_path):
        T, C = 16, 20
        blob = self._raw(tmp_path)
        mask_at = 32 + 4 * T * C * 2 + 4 * T
        blob[mask_at + 2] = 7
        with pytest.raises(InvariantViolationError, match="mask"):
            self._parse(tmp_path, blob)

    def test_nonfinite_logit_rejected(self, tmp_path):
        blob = self._raw(tmp_path)
        struct.pack_into("<f", blob, 32 + 4 * 3, math.nan)
        with pytest.raises(InvariantViolationError) as e:
            self._parse(tmp_path, blob)
        assert e.value.offset == 32 + 4 * 3

    def test_zero_tokens_rejected(self, tmp_path):
        blob = self._raw(tmp_path)[:32]
        struct.pack_into("<Q", blob, 12, 0)
        with pytest.raises(InvariantViolationError, match="T >= 1"):
            self._parse(tmp_path, blob)


class TestCheckpoint:
    CFG = ModelConfig(vocab_size=11, d_model=8, n_layers=1, n_heads=2, context_len=6, seed=5)

    def make(self, step=17):
        model = TinyLM(self.CFG)
        digest = hashlib.sha256(b"corpus bytes").digest()
        return Checkpoint(self.CFG, model.params.copy(), step, digest)

    def test_roundtrip_bitwise(self, tmp_path):
        path = str(tmp_path / "m.ckpt")
        ck = self.make()
        ck.save(path)
        got = Checkpoint.load(path)
        assert got.config == ck.config
        assert got.step_count == 17
        assert got.corpus_hash == ck.corpus_hash
        assert np.array_equal(got.params.view(np.uint32), ck.params.view(np.uint32))

    def test_file_size(self, tmp_path):
        path = str(tmp_path / "m.ckpt")
        self.make().save(path)
        assert len(open(path, "rb").read()) == 89 + 4 * param_count(self.CFG)

    def test_save_load_save_identical(self, tmp_path):
        a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        self.make().save(a)
        Checkpoint.load(a).save(b)
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_model_params_are_a_copy(self, tmp_path):
        ck = self.make()
        m = ck.model()
        m.params[:] = 0.0
        assert not np.array_equal(ck.params, m.params)

    def test_param_hash_tracks_content(self):
        a, b = self.make(), self.make()
        assert a.param_hash() == b.param_hash()
        p = b.params.copy()
        p[0] += 1.0
        c = Checkpoint(self.CFG, p, 17, b.corpus_hash)
        assert c.param_hash() != a.param_hash()

    def _mutate(self, tmp_path, fn):
        path = str(tmp_path / "x.ckpt")
        self.make().save(path)
        blob = bytearray(open(path, "rb").read())
        fn(blob)
        open(path, "wb").write(bytes(blob))
        return Checkpoint.load(path)

    def test_bad_magic(self, tmp_path):
        with pytest.raises(BadMagicError) as e:
            self._mutate(tmp_path, lambda b: b.__setitem__(0, ord("x")))
        assert e.value.offset == 0

    def test_version_mismatch(self, tmp_path):
        with pytest.raises(VersionMismatchError):
            self._mutate(tmp_path, lambda b: struct.pack_into("<I", b, 9, 42))

    def test_truncated(self, tmp_path):
        path = str(tmp_path / "t.ckpt")
        self.make().save(path)
        blob = open(path, "rb").read()[:-5]
        open(path, "wb").write(blob)
        with pytest.raises(TruncatedFileError) as e:
            Checkpoint.load(path)
        assert e.value.offset == len(blob)

    def test_param_count_mismatch(self, tmp_path):
        with pytest.raises(InvariantViolationError, match="implies"):
            self._mutate(tmp_path, lambda b: struct.pack_into("<Q", b, 9 + 4 + 5 * 4 + 16, 3))

    def test_nonfinite_param(self, tmp_path):
        with pytest.raises(InvariantViolationError, match="non-finite"):
            self._mutate(tmp_path, lambda b: struct.pack_into("<f", b, 57 + 8, math.inf))

    def test_bad_config_in_header(self, tmp_path):
        # d_model=6, n_heads=4 is not a legal architecture
        def bend(b):
            struct.pack_into("<I", b, 17, 6)

        with pytest.raises(InvariantViolationError):
            self._mutate(tmp_path, bend)

    def test_constructor_validation(self):
        ok = self.make()
        with pytest.raises(InvalidInputError):
            Checkpoint(self.CFG, ok.params.astype(np.float64), 0, ok.corpus_hash)
        with pytest.raises(InvalidInputError):
            Checkpoint(self.CFG, ok.params, -1, ok.corpus_hash)
        with pytest.raises(InvalidInputError):
            Checkpoint(self.CFG, ok.params, 0, b"short")


class TestWriteReport:
    def test_empty_split_writes_header_only(self, tmp_path):
        path = str(tmp_path / "r.csv")
        batch = make_batch(2)
        d = batch_decompose(batch)
        empty = batch_decompose(
            LogitBatch(
                batch.teacher_logits,
                batch.student_logits,
                batch.targets,
                np.zeros(batch.num_tokens, dtype=bool),
            )
        )
        split = TokenSplit(
            np.array([], dtype=np.int64), np.array([], dtype=np.int64)
        )
        write_report(empty, split, path)
        assert open(path).read() == REPORT_HEADER + "\n"

    def test_single_token_two_lines(self, tmp_path):
        path = str(tmp_path / "one.csv")
        batch = make_batch(4, T=1, C=5)
        d = batch_decompose(batch)
        split = rank_and_split(d.unc, batch.mask, 1.0)
        write_report(d, split, path)
        lines = open(path).read().split("\n")
        assert lines[0] == REPORT_HEADER
        assert lines[1].startswith("0,") and lines[1].endswith(",hard")
        assert lines[2] == ""

    def test_reparse_recovers_exact_doubles(self, tmp_path):
        path = str(tmp_path / "exact.csv")
        batch = make_batch(9)
        d = batch_decompose(batch)
        split = rank_and_split(d.unc, batch.mask, 0.5)
        write_report(d, split, path)
        text = open(path, "rb").read().decode()
        assert "\r" not in text
        lines = text.strip().split("\n")
        assert lines[0] == REPORT_HEADER
        hard = set(int(i) for i in split.hard_indices)
        seen = []
        for line in lines[1:]:
            idx_s, unc_s, tkd_s, dkd_s, kl_s, label = line.split(",")
            i = int(idx_s)
            seen.append(i)
            assert float(unc_s) == d.unc[i]
            assert float(tkd_s) == d.tkd[i]
            assert float(dkd_s) == d.dkd[i]
            assert float(kl_s) == d.kl_total[i]
            assert label == ("hard" if i in hard else "easy")
        assert seen == list(np.flatnonzero(batch.mask))

    def test_inconsistent_lengths_rejected(self, tmp_path):
        batch = make_batch(2)
        d = batch_decompose(batch)
        split = TokenSplit(np.array([0]), np.array([], dtype=np.int64))
        with pytest.raises(InvalidInputError, match="split"):
            write_report(d, split, str(tmp_path / "bad.csv"))


def read_kde_csv(path):
    xs, ds, comments = [], [], []
    for line in open(path).read().strip().split("\n"):
        if line.startswith("#"):
            comments.append(line)
            continue
        if line == "x,density":
            continue
        x, d = line.split(",")
        xs.append(float(x))
        ds.append(float(d))
    return np.array(xs), np.array(ds), comments


class TestKde:
    def test_silverman_formula(self):
        s = np.arange(100) / 99.0
        sigma = np.std(s, ddof=1)
        iqr = np.percentile(s, 75) - np.percentile(s, 25)
        want = 0.9 * min(sigma, iqr / 1.34) * 100 ** (-0.2)
        h, floored = silverman_bandwidth(s)
        assert math.isclose(h, want, rel_tol=1e-12) and not floored

    def test_silverman_floor(self):
        h, floored = silverman_bandwidth(np.full(50, 0.5))
        assert h == 1e-3 and floored

    def test_two_sample_symmetry(self, tmp_path):
        path = str(tmp_path / "sym.csv")
        kde_emit(np.array([0.25, 0.75]), 256, path)
        xs, ds, _ = read_kde_csv(path)
        assert xs.shape == (256,)
        np.testing.assert_allclose(ds, ds[::-1], atol=1e-9)
        i25 = int(np.argmin(np.abs(xs - 0.25)))
        i75 = int(np.argmin(np.abs(xs - 0.75)))
        assert math.isclose(ds[i25], ds[i75], abs_tol=1e-9)
        assert ds[i25] > ds[len(xs) // 2]

    def test_degenerate_peak_with_floor_comment(self, tmp_path):
        path = str(tmp_path / "deg.csv")
        kde_emit(np.full(40, 0.5), 64, path)
        xs, ds, comments = read_kde_csv(path)
        assert any("floored" in c for c in comments)
        assert abs(xs[int(np.argmax(ds))] - 0.5) < 0.02

    def test_uniform_samples_mass_and_flatness(self, tmp_path):
        path = str(tmp_path / "uni.csv")
        rng = np.random.default_rng(0)
        kde_emit(rng.random(1000), 256, path)
        xs, ds, _ = read_kde_csv(path)
        mass = np.trapezoid(ds, xs)
        assert 0.90 <= mass <= 1.02
        mid = ds[(xs > 0.25) & (xs < 0.75)]
        assert mid.min() > 0.7 and mid.max() < 1.3

    def test_rejects_bad_inputs(self, tmp_path):
        path = str(tmp_path / "x.csv")
        with pytest.raises(InvalidInputError):
            kde_emit(np.array([0.5]), 64, path)
        with pytest.raises(InvalidInputError):
            kde_emit(np.array([0.2, 0.8]), 8, path)
        with pytest.raises(InvalidInputError):
            kde_emit(np.array([0.2, np.nan]), 64, path)

    def test_grid_endpoints_and_reparse(self, tmp_path):
        path = str(tmp_path / "grid.csv")
        kde_emit(np.random.default_rng(1).random(100), 64, path)
        xs, ds, _ = read_kde_csv(path)
        want = np.linspace(0.0, 1.0, 64)
        assert np.array_equal(xs, want)
        assert np.isfinite(ds).all() and (ds >= 0).all()
