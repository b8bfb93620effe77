import numpy as np
import pytest

from prdsp.fieldcore import DispersionSpec, propagate_cd, square_law
from prdsp.txchain import (
    FrameSpec,
    QamConstellation,
    build_frame,
    clip,
    dac_model,
    derive_rng,
    premix,
    qam_demap,
    qam_map,
    shape_frame,
)


class TestConstellation:
    @pytest.mark.parametrize("order", [4, 16, 32])
    def test_unit_mean_power(self, order):
        c = QamConstellation(order)
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12

    @pytest.mark.parametrize("order", [4, 16, 32])
    def test_labels_are_bijective(self, order):
        c = QamConstellation(order)
        assert sorted(c.bit_labels) == list(range(order))

    def test_qpsk_points(self):
        c = QamConstellation(4)
        expected = {(1 + 1j), (1 - 1j), (-1 + 1j), (-1 - 1j)}
        got = {complex(round(p.real * np.sqrt(2)), round(p.imag * np.sqrt(2)))
               for p in c.points}
        assert got == expected

    def test_cross32_geometry(self):
        c = QamConstellation(32)
        scaled = c.points * np.sqrt(20)
        assert len(set(np.round(scaled, 6))) == 32
        for p in scaled:
            assert abs(p.real) <= 5.001 and abs(p.imag) <= 5.001
            assert not (abs(abs(p.real) - 5) < 1e-6 and abs(abs(p.imag) - 5) < 1e-6)

    @pytest.mark.parametrize("order", [4, 16, 32])
    def test_quasi_gray_adjacency(self, order):
        c = QamConstellation(order)
        pts = c.points
        dmin = np.min([abs(a - b) for i, a in enumerate(pts)
                       for b in pts[i + 1:]])
        bad = 0
        pairs = 0
        for i in range(order):
            for j in range(i + 1, order):
                if abs(pts[i] - pts[j]) < dmin * 1.01:
                    pairs += 1
                    diff = bin(int(c.bit_labels[i]) ^ int(c.bit_labels[j])).count("1")
                    if diff > 1:
                        bad += 1
        if order in (4, 16):
            assert bad == 0
        else:
            # cross constellation: the rectangle fold leaves 4 of 52
            # minimum-distance pairs differing in more than one bit
            assert pairs == 52 and bad <= 4

    def test_rejects_unknown_order(self):
        with pytest.raises(ValueError):
            QamConstellation(64)


class TestQamMapping:
    @pytest.mark.parametrize("order", [4, 16, 32])
    def test_round_trip(self, order, rng):
        c = QamConstellation(order)
        m = c.bits_per_symbol
        bits = rng.integers(0, 2, 1200 * m).astype(np.uint8)
        symbols = qam_map(bits, c)
        back = qam_demap(symbols, c)
        assert np.array_equal(back, bits)

    @pytest.mark.parametrize("order", [4, 16, 32])
    def test_mapped_power_normalised(self, order, rng):
        c = QamConstellation(order)
        m = c.bits_per_symbol
        n_bits = (100000 // m) * m
        symbols = qam_map(rng.integers(0, 2, n_bits).astype(np.uint8), c)
        assert 0.99 <= np.mean(np.abs(symbols) ** 2) <= 1.01

    def test_rejects_nondivisible_bits(self):
        with pytest.raises(ValueError):
            qam_map(np.zeros(7, dtype=np.uint8), QamConstellation(16))


class TestFrameSpec:
    def test_paper_scale_frame_length(self):
        spec = FrameSpec(training_len=8192, guard_len=64,
                         payload_block_len=8192, payload_repeats=30,
                         pilot_ratio=0.5)
        # 64 + 8192 + 64 + 8192 * 30
        assert spec.frame_len == 254080

    def test_rejects_large_pilot_ratio(self):
        with pytest.raises(ValueError):
            FrameSpec(pilot_ratio=0.6)

    def test_rejects_non_reciprocal_ratio(self):
        with pytest.raises(ValueError):
            FrameSpec(pilot_ratio=0.37)

    @pytest.mark.parametrize("ratio,k", [(0.5, 2), (1 / 3, 3), (0.25, 4), (0.2, 5)])
    def test_pilot_mask_even_spacing(self, ratio, k):
        spec = FrameSpec(training_len=256, payload_block_len=240, pilot_ratio=ratio)
        mask = spec.pilot_mask()
        assert mask[::k].all()
        assert mask.sum() == int(np.ceil(240 / k))


class TestBuildFrame:
    def test_zero_pilot_ratio(self):
        spec = FrameSpec(training_len=256, payload_block_len=256, pilot_ratio=0.0)
        layout = build_frame(spec, QamConstellation(16), seed=1)
        assert not layout.pilot_mask.any()

    def test_deterministic_and_decorrelated(self):
        spec = FrameSpec(training_len=512, payload_block_len=512)
        c = QamConstellation(16)
        a = build_frame(spec, c, seed=7)
        b = build_frame(spec, c, seed=7)
        assert np.array_equal(a.symbols, b.symbols)
        other = build_frame(spec, c, seed=8)
        pa = a.payload_symbols[~a.pilot_mask]
        pb = other.payload_symbols[~other.pilot_mask]
        corr = abs(np.vdot(pa, pb)) / (np.linalg.norm(pa) * np.linalg.norm(pb))
        assert corr < 0.1

    def test_training_payload_streams_independent(self):
        spec = FrameSpec(training_len=512, payload_block_len=512, pilot_ratio=0.0)
        layout = build_frame(spec, QamConstellation(4), seed=3)
        t = layout.training_symbols
        p = layout.payload_symbols
        corr = abs(np.vdot(t, p)) / (np.linalg.norm(t) * np.linalg.norm(p))
        assert corr < 0.1

    def test_guards_are_cyclic_extension(self):
        spec = FrameSpec(training_len=512, guard_len=32, payload_block_len=256)
        layout = build_frame(spec, QamConstellation(16), seed=1)
        t = layout.training_symbols
        assert np.array_equal(layout.symbols[:32], t[-32:])
        assert np.array_equal(layout.symbols[32 + 512: 32 + 512 + 32], t[:32])

    def test_pilots_reproducible_from_spec_and_seed(self):
        spec = FrameSpec(training_len=256, payload_block_len=512, pilot_ratio=0.25)
        c = QamConstellation(32)
        layout = build_frame(spec, c, seed=11)
        rebuilt = build_frame(spec, c, seed=11)
        np.testing.assert_array_equal(
            layout.payload_symbols[layout.pilot_mask],
            rebuilt.payload_symbols[rebuilt.pilot_mask],
        )

    def test_payload_repeats_tile_block(self):
        spec = FrameSpec(training_len=256, payload_block_len=128, payload_repeats=3)
        layout = build_frame(spec, QamConstellation(16), seed=5)
        block = layout.payload_symbols[:128]
        np.testing.assert_array_equal(layout.payload_symbols[128:256], block)
        np.testing.assert_array_equal(layout.payload_symbols[256:], block)


class TestGuardIsolation:
    def test_training_window_matches_cyclic_block_zero_dispersion(self):
        # with no dispersion the truncated pulses are compact, so the frame's
        # central training intensity must equal the isolated cyclic block's
        spec = FrameSpec(training_len=1024, guard_len=64, payload_block_len=1024,
                         premix_dispersion=DispersionSpec(0.0))
        layout = build_frame(spec, QamConstellation(4), seed=2)
        frame_wave = shape_frame(layout)
        from prdsp.fieldcore import rrc_shape

        block = rrc_shape(layout.training_symbols, spec.rolloff, spec.sps,
                          sample_rate_hz=spec.sample_rate_hz)
        frame_int = square_law(frame_wave).samples
        block_int = square_law(block).samples
        margin = 256 * spec.sps
        start = spec.guard_len * spec.sps
        window = slice(start + margin, start + 1024 * spec.sps - margin)
        rel = (np.linalg.norm(frame_int[window] - block_int[margin:-margin])
               / np.linalg.norm(block_int[margin:-margin]))
        assert rel < 1e-8

    def test_training_window_leakage_under_premix(self):
        # with -3000 ps/nm premix the guards bound payload leakage near the
        # percent level (the physical ceiling the training stage sees)
        spec = FrameSpec(training_len=1024, guard_len=64, payload_block_len=1024)
        layout = build_frame(spec, QamConstellation(4), seed=2)
        d = spec.premix_dispersion
        frame_int = square_law(propagate_cd(shape_frame(layout), d)).samples
        from prdsp.fieldcore import rrc_shape

        block = rrc_shape(layout.training_symbols, spec.rolloff, spec.sps,
                          sample_rate_hz=spec.sample_rate_hz)
        block_int = square_law(propagate_cd(block, d)).samples
        margin = 256 * spec.sps
        start = spec.guard_len * spec.sps
        window = slice(start + margin, start + 1024 * spec.sps - margin)
        rel = (np.linalg.norm(frame_int[window] - block_int[margin:-margin])
               / np.linalg.norm(block_int[margin:-margin]))
        assert rel < 3e-2


class TestPremix:
    def test_zero_premix_identity(self):
        spec = FrameSpec(training_len=256, payload_block_len=256,
                         premix_dispersion=DispersionSpec(0.0))
        layout = build_frame(spec, QamConstellation(4), seed=1)
        w = shape_frame(layout)
        out = premix(w, spec)
        np.testing.assert_allclose(out.samples, w.samples)

    def test_premix_invertible(self):
        spec = FrameSpec(training_len=512, payload_block_len=512)
        layout = build_frame(spec, QamConstellation(16), seed=1)
        w = shape_frame(layout)
        mixed = premix(w, spec)
        back = propagate_cd(mixed, spec.premix_dispersion.negated())
        err = np.linalg.norm(back.samples - w.samples) / np.linalg.norm(w.samples)
        assert err < 1e-10

    def test_premix_spreads_intensity(self):
        spec = FrameSpec(training_len=512, payload_block_len=512)
        layout = build_frame(spec, QamConstellation(16), seed=1)
        w = shape_frame(layout)
        mixed = premix(w, spec)
        # symbol mixing flattens the per-sample intensity autocovariance
        def lag1_autocorr(x):
            i = np.abs(x) ** 2
            i = i - i.mean()
            return float(np.dot(i[:-1], i[1:]) / np.dot(i, i))

        assert lag1_autocorr(mixed.samples) > lag1_autocorr(w.samples)


class TestClip:
    def test_zero_ratio_identity(self, random_waveform):
        w = random_waveform(512)
        out = clip(w, 0.0)
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_exact_clip_count_per_rail(self, random_waveform):
        n = 1 << 18
        w = random_waveform(n)
        out = clip(w, 0.005)
        m = int(np.ceil(0.005 * n))
        for rail in (out.samples.real, out.samples.imag):
            level = np.max(np.abs(rail))
            assert np.sum(np.abs(np.abs(rail) - level) < 1e-12) == m

    def test_papr_reduced(self, random_waveform):
        w = random_waveform(1 << 14)
        out = clip(w, 0.01)
        papr = lambda x: np.max(np.abs(x) ** 2) / np.mean(np.abs(x) ** 2)
        assert papr(out.samples) < papr(w.samples)

    def test_rejects_bad_ratio(self, random_waveform):
        with pytest.raises(ValueError):
            clip(random_waveform(16), 1.0)


class TestDacModel:
    def test_disabled_is_identity(self, random_waveform):
        w = random_waveform(256)
        out = dac_model(w, None, derive_rng(0, "enob_dac"))
        np.testing.assert_array_equal(out.samples, w.samples)
        out = dac_model(w, np.inf, derive_rng(0, "enob_dac"))
        np.testing.assert_array_equal(out.samples, w.samples)

    @pytest.mark.parametrize("enob,expected_snr", [(8.0, 49.92), (5.8, 36.68)])
    def test_full_scale_sine_snr(self, enob, expected_snr):
        from prdsp.fieldcore import ComplexWaveform

        n = 1_000_000
        fs = 100e9
        t = np.arange(n) / fs
        sine = np.sin(2 * np.pi * 997e6 * t)
        w = ComplexWaveform(sine + 1j * sine, fs)
        out = dac_model(w, enob, derive_rng(42, "enob_dac"))
        noise = out.samples.real - sine
        snr = 10 * np.log10(np.mean(sine**2) / np.mean(noise**2))
        assert abs(snr - expected_snr) < 0.3

    def test_deterministic_per_stream(self, random_waveform):
        w = random_waveform(256)
        a = dac_model(w, 6.0, derive_rng(1, "enob_dac"))
        b = dac_model(w, 6.0, derive_rng(1, "enob_dac"))
        np.testing.assert_array_equal(a.samples, b.samples)


class TestFrameRoundTrip:
    @pytest.mark.parametrize("order", [4, 16, 32])
    def test_identity_channel_zero_ber(self, order):
        from prdsp.fieldcore import matched_filter_downsample

        spec = FrameSpec(training_len=256, payload_block_len=1024, pilot_ratio=0.5)
        c = QamConstellation(order)
        layout = build_frame(spec, c, seed=9)
        w = shape_frame(layout)
        symbols = matched_filter_downsample(w, spec.rolloff, spec.sps)
        data = symbols[spec.payload_start:][~layout.pilot_mask]
        bits = qam_demap(data, c)
        assert np.array_equal(bits, layout.payload_bits)
