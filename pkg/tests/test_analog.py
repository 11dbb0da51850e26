import numpy as np
import pytest

from cimtrain.analog import (AnalogBackend, CrossbarConfig, adc_read, analog_matvec,
                             analog_matvec_transposed, ir_drop_attenuation,
                             program_weights)
from cimtrain.numerics import derive_rng, make_rng

IDEAL = dict(adc_bits=None, weight_bits=24, d2d_sigma=0.0, c2c_sigma=0.0, wire_r=0.0)


def ideal_cfg(**kw):
    merged = {**IDEAL, **kw}
    return CrossbarConfig(**merged)


class TestProgramWeights:
    def test_zero_weights_give_zero_differential(self):
        cfg = ideal_cfg(subarray_rows=8, subarray_cols=8)
        arr = program_weights(np.zeros((4, 6)), cfg, make_rng(0))
        assert np.all(arr.g_pos == cfg.g_min)
        assert np.all(arr.g_neg == cfg.g_min)

    def test_noiseless_roundtrip_within_grid_step(self):
        cfg = CrossbarConfig(subarray_rows=16, subarray_cols=16, adc_bits=8,
                             weight_bits=12, c2c_sigma=0.0)
        rng = make_rng(1)
        w = rng.uniform(-1, 1, size=(8, 8))
        arr = program_weights(w, cfg, rng)
        back = (arr.g_pos - arr.g_neg).T / cfg.k_scale
        assert np.max(np.abs(back - w)) <= cfg.g_step / cfg.k_scale

    def test_c2c_statistics(self):
        # each fresh program event of a changed cell draws one relative error
        cfg = CrossbarConfig(subarray_rows=4, subarray_cols=4, adc_bits=8,
                             weight_bits=8, c2c_sigma=0.02)
        rng = make_rng(2)
        samples = np.empty(10**4)
        for t in range(10**4):
            arr = program_weights(np.array([[0.5]]), cfg, rng)
            samples[t] = arr.g_pos[0, 0]
        ratio = samples.std() / samples.mean()
        assert 0.018 <= ratio <= 0.022

    def test_out_of_range_weights_clipped_and_counted(self):
        cfg = ideal_cfg(w_range=1.0)
        arr = program_weights(np.array([[2.0, -3.0, 0.5]]), cfg, make_rng(0))
        assert arr.clipped_weights == 2
        assert np.all(arr.g_pos <= cfg.g_max)

    def test_unchanged_targets_keep_conductances(self):
        cfg = CrossbarConfig(subarray_rows=4, subarray_cols=4, adc_bits=8,
                             weight_bits=6, c2c_sigma=0.05)
        rng = make_rng(3)
        w = np.full((3, 3), 0.25)
        arr = program_weights(w, cfg, rng)
        before = arr.g_pos.copy()
        program_weights(w, cfg, rng, arr)  # same snapped targets: no new pulses
        assert np.array_equal(arr.g_pos, before)

    def test_d2d_drawn_once(self):
        cfg = CrossbarConfig(subarray_rows=4, subarray_cols=4, adc_bits=8,
                             weight_bits=8, d2d_sigma=0.03)
        rng = make_rng(4)
        arr = program_weights(np.full((2, 2), 0.3), cfg, rng)
        s_before = arr.s_pos.copy()
        program_weights(np.full((2, 2), -0.4), cfg, rng, arr)
        assert np.array_equal(arr.s_pos, s_before)


class TestAdcRead:
    def test_one_bit_levels(self):
        cfg = CrossbarConfig(subarray_rows=4, adc_bits=1)
        full = cfg.adc_fullscale()
        out = adc_read(np.array([0.0, 0.2 * full, 0.8 * full, 2 * full]), cfg)
        assert set(out.tolist()) == {0.0, full}

    def test_zero_is_exact(self):
        cfg = CrossbarConfig(adc_bits=5)
        assert adc_read(0.0, cfg) == 0.0

    def test_error_bound_from_grid_geometry(self):
        cfg = CrossbarConfig(subarray_rows=16, adc_bits=6)
        full = cfg.adc_fullscale()
        step = full / (2**6 - 1)
        x = np.linspace(0, full, 5001)
        err = np.abs(adc_read(x, cfg) - x)
        assert np.max(err) <= step / 2 + 1e-12

    def test_clips_above_fullscale(self):
        cfg = CrossbarConfig(subarray_rows=4, adc_bits=4)
        full = cfg.adc_fullscale()
        assert adc_read(10 * full, cfg) == full


class TestIrDrop:
    def test_zero_wire_r(self):
        cfg = CrossbarConfig(wire_r=0.0)
        assert ir_drop_attenuation(100, 100, cfg.g_max, cfg) == 1.0

    def test_monotone_in_position(self):
        cfg = CrossbarConfig(wire_r=0.01)
        f = [ir_drop_attenuation(i, 0, cfg.g_max, cfg) for i in range(10)]
        assert all(a >= b for a, b in zip(f, f[1:]))
        assert all(0 < x <= 1 for x in f)

    def test_larger_subarray_larger_error(self):
        # paired seeded trials: 256x256 subarrays hurt more than 64x64
        errs = {64: [], 256: []}
        for trial in range(100):
            rng = make_rng(1000 + trial)
            w = rng.uniform(-1, 1, size=(256, 256))
            x = rng.random(256)
            exact = w @ x
            for sub in (64, 256):
                cfg = ideal_cfg(subarray_rows=sub, subarray_cols=sub, wire_r=0.001)
                arr = program_weights(w, cfg, make_rng(trial))
                y = analog_matvec(arr, x, cfg)
                errs[sub].append(np.mean(np.abs(y - exact)))
        assert np.mean(errs[256]) > np.mean(errs[64])


class TestMatvec:
    def test_zero_input_exact_zero(self):
        cfg = ideal_cfg(subarray_rows=8, subarray_cols=8)
        arr = program_weights(make_rng(0).uniform(-1, 1, (6, 6)), cfg, make_rng(1))
        assert np.array_equal(analog_matvec(arr, np.zeros(6), cfg), np.zeros(6))

    def test_single_cell_ohms_law(self):
        cfg = CrossbarConfig(subarray_rows=1, subarray_cols=1, adc_bits=None,
                             weight_bits=24, w_range=1.0)
        arr = program_weights(np.array([[1.0]]), cfg, make_rng(0))
        assert arr.g_pos[0, 0] == cfg.g_max  # full-scale weight -> g_max
        y = analog_matvec(arr, np.array([1.0]), cfg)
        assert np.isclose(y[0], 1.0, atol=1e-9)

    def test_ideal_matches_digital_within_budget(self):
        cfg = CrossbarConfig(subarray_rows=32, subarray_cols=32, adc_bits=16,
                             weight_bits=16, wire_r=0.0)
        rng = make_rng(5)
        w = rng.uniform(-1, 1, (20, 40))
        x = rng.random(40)
        arr = program_weights(w, cfg, rng)
        y = analog_matvec(arr, x, cfg)
        w_step = cfg.g_step / cfg.k_scale
        adc_step = cfg.adc_fullscale(32) / (2**16 - 1) / cfg.k_scale
        budget = np.sum(np.abs(x)) * w_step + 2 * adc_step * np.ceil(40 / 32)
        assert np.max(np.abs(y - w @ x)) <= budget + 1e-12

    def test_batch_matches_per_column(self):
        cfg = ideal_cfg(subarray_rows=8, subarray_cols=8)
        rng = make_rng(6)
        w = rng.uniform(-1, 1, (5, 9))
        xb = rng.random((9, 4))
        arr = program_weights(w, cfg, rng)
        batch = analog_matvec(arr, xb, cfg)
        for j in range(4):
            assert np.allclose(batch[:, j], analog_matvec(arr, xb[:, j], cfg),
                               rtol=0, atol=1e-12)

    def test_signed_drive_vector(self):
        cfg = ideal_cfg(subarray_rows=8, subarray_cols=8)
        rng = make_rng(7)
        w = rng.uniform(-1, 1, (5, 9))
        x = rng.standard_normal(9)  # mixed signs: exercises the two-phase read
        arr = program_weights(w, cfg, rng)
        w_snap = (arr.g_pos - arr.g_neg).T / cfg.k_scale  # grid-snapped weights
        assert np.allclose(analog_matvec(arr, x, cfg), w_snap @ x, rtol=0, atol=1e-9)


class TestTransposedRead:
    def test_matches_digital_oracle(self):
        cfg = ideal_cfg(subarray_rows=16, subarray_cols=16)
        rng = make_rng(8)
        w = rng.uniform(-1, 1, (12, 20))
        x = rng.standard_normal(12)
        arr = program_weights(w, cfg, rng)
        w_snap = (arr.g_pos - arr.g_neg).T / cfg.k_scale
        assert np.allclose(analog_matvec_transposed(arr, x, cfg), w_snap.T @ x,
                           rtol=0, atol=1e-9)

    def test_symmetric_weight_agreement(self):
        cfg = ideal_cfg(subarray_rows=8, subarray_cols=8)
        rng = make_rng(9)
        base = rng.uniform(-1, 1, (7, 7))
        w = (base + base.T) / 2
        x = rng.random(7)
        arr = program_weights(w, cfg, rng)
        fwd = analog_matvec(arr, x, cfg)
        bwd = analog_matvec_transposed(arr, x, cfg)
        assert np.allclose(fwd, bwd, rtol=0, atol=1e-9)

    def test_event_kinds(self):
        cfg = ideal_cfg(subarray_rows=8, subarray_cols=8)
        backend = AnalogBackend(cfg, derive_rng(0, "analog"))
        backend.program(1, make_rng(0).uniform(-1, 1, (4, 4)))
        events = []
        backend.bus.observers.append(events.append)
        backend.matvec(1, np.ones((4, 2)))
        backend.matvec_t(1, np.ones((4, 1)))
        kinds = [e.kind for e in events]
        assert kinds == ["forward_read", "transposed_read"]
        assert events[0].vectors == 2


class TestInvariants:
    def test_oracle_convergence_128(self):
        cfg = CrossbarConfig(subarray_rows=128, subarray_cols=128, adc_bits=16,
                             weight_bits=16, wire_r=0.0)
        rng = make_rng(10)
        w = rng.uniform(-1, 1, (128, 128))
        x = rng.random(128)
        arr = program_weights(w, cfg, rng)
        y = analog_matvec(arr, x, cfg)
        exact = w @ x
        rel = np.linalg.norm(y - exact) / np.linalg.norm(exact)
        assert rel < 1e-3

    def test_monotone_in_adc_bits(self):
        rng_data = make_rng(11)
        w = rng_data.uniform(-1, 1, (64, 64))
        xs = [make_rng(2000 + t).random(64) for t in range(50)]
        errors = []
        for bits in (2, 4, 6, 8, 12):
            cfg = CrossbarConfig(subarray_rows=64, subarray_cols=64, adc_bits=bits,
                                 weight_bits=16, adc_range_frac=0.25)
            arr = program_weights(w, cfg, make_rng(0))
            err = np.mean([np.mean(np.abs(analog_matvec(arr, x, cfg) - w @ x))
                           for x in xs])
            errors.append(err)
        assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))

    def test_monotone_in_subarray_size_under_ir_drop(self):
        errors = []
        for sub in (32, 64, 128):
            per_seed = []
            for t in range(50):
                rng = make_rng(3000 + t)
                w = rng.uniform(-1, 1, (128, 128))
                x = rng.random(128)
                cfg = ideal_cfg(subarray_rows=sub, subarray_cols=sub, wire_r=0.001)
                arr = program_weights(w, cfg, make_rng(t))
                per_seed.append(np.mean(np.abs(analog_matvec(arr, x, cfg) - w @ x)))
            errors.append(np.mean(per_seed))
        assert errors[0] <= errors[1] <= errors[2]

    def test_d2d_stable_c2c_fresh(self):
        cfg = CrossbarConfig(subarray_rows=8, subarray_cols=8, adc_bits=8,
                             weight_bits=8, d2d_sigma=0.02, c2c_sigma=0.02)
        rng = make_rng(12)
        arr = program_weights(np.full((4, 4), 0.3), cfg, rng)
        s_hash = arr.s_pos.tobytes()
        g_first = arr.g_pos.copy()
        program_weights(np.full((4, 4), -0.6), cfg, rng, arr)  # targets change
        assert arr.s_pos.tobytes() == s_hash
        assert not np.array_equal(arr.g_pos, g_first)

    def test_partition_tiling_equivalence(self):
        rng = make_rng(13)
        w = rng.uniform(-1, 1, (96, 96))
        x = rng.random(96)
        results = []
        for sub in (16, 32, 96, 128):
            cfg = ideal_cfg(subarray_rows=sub, subarray_cols=sub)
            arr = program_weights(w, cfg, make_rng(0))
            results.append(analog_matvec(arr, x, cfg))
        for other in results[1:]:
            np.testing.assert_allclose(other, results[0], rtol=1e-12, atol=1e-14)
