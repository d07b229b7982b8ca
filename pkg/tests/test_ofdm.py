import numpy as np
import pytest

from ofdmsense.errors import ConfigurationError
from ofdmsense.numerics import rng_stream
from ofdmsense.ofdm import (
    ObservationBlock,
    OfdmConfig,
    PuContribution,
    flat_channel,
    generate_channel,
    generate_observation,
    psk_symbols,
)


class TestOfdmConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"Q": 1}, {"N": 0}, {"T_s": 0.0}, {"sigma_w2": 0.0}, {"sigma_w2": -1.0}, {"psk_order": 1}],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            OfdmConfig(**kwargs)

    def test_sample_period(self):
        assert OfdmConfig().T_d == pytest.approx(312.5e-9 / 128)


class TestNoiseOnly:
    def test_power_and_circularity(self):
        cfg = OfdmConfig(Q=100, N=1000, sigma_w2=1.0)
        y = generate_observation(cfg, None, None, rng_stream(1)).y
        assert np.mean(np.abs(y) ** 2) == pytest.approx(1.0, abs=0.02)
        # each quadrature carries half the power, within 3 standard errors
        se = np.sqrt(2 / y.size) * 0.5
        assert abs(np.var(y.real) - 0.5) < 3 * se
        assert abs(np.var(y.imag) - 0.5) < 3 * se
        assert abs(np.mean(y.real * y.imag)) < 3 * 0.5 / np.sqrt(y.size)

    def test_scaled_variance(self):
        cfg = OfdmConfig(Q=50, N=2000, sigma_w2=2.5)
        y = generate_observation(cfg, None, None, rng_stream(2)).y
        assert np.mean(np.abs(y) ** 2) == pytest.approx(2.5, rel=0.02)

    def test_deterministic(self):
        cfg = OfdmConfig(Q=16, N=8, cu_active=True)
        ch = generate_channel(cfg, 4, rng_stream(0, 1))
        a = generate_observation(cfg, ch, None, rng_stream(3)).y
        b = generate_observation(cfg, ch, None, rng_stream(3)).y
        np.testing.assert_array_equal(a, b)


class TestComponents:
    def test_pu_power_adds(self):
        cfg = OfdmConfig(Q=8, N=10_000)
        gen = rng_stream(4)
        values = np.sqrt(3.0 / 2) * (gen.standard_normal((2, cfg.N)) + 1j * gen.standard_normal((2, cfg.N)))
        pu = PuContribution(band=(2, 3), values=values)
        y = generate_observation(cfg, None, pu, rng_stream(5)).y
        power = np.mean(np.abs(y) ** 2, axis=1)
        assert power[2] == pytest.approx(4.0, rel=0.04)
        assert power[3] == pytest.approx(4.0, rel=0.04)
        assert power[0] == pytest.approx(1.0, rel=0.04)

    def test_energy_additivity_with_cu(self):
        cfg = OfdmConfig(Q=4, N=20_000, cu_active=True, sigma_w2=0.5)
        ch = flat_channel(cfg, gain=2.0)
        gen = rng_stream(6)
        values = gen.standard_normal((1, cfg.N)) + 1j * gen.standard_normal((1, cfg.N))
        block = generate_observation(cfg, ch, PuContribution(band=(1, 1), values=values), rng_stream(7))
        assert np.mean(np.abs(block.y[1]) ** 2) == pytest.approx(4.0 + 2.0 + 0.5, rel=0.03)
        np.testing.assert_allclose(
            block.y, block.components["cu"] + block.components["pu"] + block.components["noise"]
        )

    def test_cu_omitted_when_silent(self):
        cfg = OfdmConfig(Q=4, N=4)
        block = generate_observation(cfg, flat_channel(cfg), None, rng_stream(0))
        assert "cu" not in block.components

    def test_active_cu_needs_channel(self):
        with pytest.raises(ConfigurationError):
            generate_observation(OfdmConfig(Q=4, N=4, cu_active=True), None, None, rng_stream(0))

    @pytest.mark.parametrize("shape", [(2, 5), (2, 4, 4)])
    def test_pu_shape_mismatch(self, shape):
        cfg = OfdmConfig(Q=8, N=4)
        pu = PuContribution(band=(0, 1), values=np.zeros(shape, dtype=complex))
        with pytest.raises(ConfigurationError):
            generate_observation(cfg, None, pu, rng_stream(0))

    def test_pu_band_outside_carriers(self):
        pu = PuContribution(band=(7, 8), values=np.zeros((2, 4), dtype=complex))
        with pytest.raises(ConfigurationError):
            generate_observation(OfdmConfig(Q=8, N=4), None, pu, rng_stream(0))

    def test_observation_rejects_nonfinite(self):
        cfg = OfdmConfig(Q=2, N=2)
        with pytest.raises(ConfigurationError):
            ObservationBlock(y=np.array([[np.nan, 0], [0, 0]], dtype=complex), meta=cfg)

    def test_observation_rejects_wrong_shape(self):
        with pytest.raises(ConfigurationError):
            ObservationBlock(y=np.zeros((3, 2), dtype=complex), meta=OfdmConfig(Q=2, N=2))


class TestPsk:
    @pytest.mark.parametrize("order", [2, 4, 8])
    def test_unit_modulus_and_alphabet(self, order):
        s = psk_symbols(rng_stream(0), 4000, order)
        np.testing.assert_allclose(np.abs(s), 1.0)
        assert np.unique(np.round(s, 9)).size == order


class TestChannel:
    def test_single_path_is_flat(self):
        cfg = OfdmConfig(Q=32, N=3)
        ch = generate_channel(cfg, 1, rng_stream(0))
        np.testing.assert_allclose(np.abs(ch.h), np.abs(ch.h[0, 0]))

    def test_block_static(self):
        cfg = OfdmConfig(Q=32, N=5)
        ch = generate_channel(cfg, 8, rng_stream(0))
        np.testing.assert_array_equal(ch.h, np.repeat(ch.response[:, None], 5, axis=1))

    def test_response_is_dft_of_taps(self):
        cfg = OfdmConfig(Q=16, N=1)
        ch = generate_channel(cfg, 5, rng_stream(9))
        padded = np.zeros(cfg.Q, dtype=complex)
        padded[: ch.taps.size] = ch.taps
        np.testing.assert_allclose(ch.response, np.fft.fft(padded), atol=1e-12)

    @pytest.mark.parametrize("profile,decay", [("uniform", 0.0), ("exponential", 0.5)])
    def test_unit_mean_power(self, profile, decay):
        cfg = OfdmConfig(Q=16, N=1)
        resp = np.array(
            [generate_channel(cfg, 8, rng_stream(1, i), profile, decay).response for i in range(10_000)]
        )
        power = np.mean(np.abs(resp) ** 2, axis=0)
        np.testing.assert_allclose(power, 1.0, atol=0.05)

    def test_zero_decay_equals_uniform(self):
        cfg = OfdmConfig(Q=16, N=2)
        a = generate_channel(cfg, 8, rng_stream(3), "uniform")
        b = generate_channel(cfg, 8, rng_stream(3), "exponential", 0.0)
        np.testing.assert_allclose(a.h, b.h)

    @pytest.mark.parametrize("paths", [0, 17])
    def test_path_count_range(self, paths):
        with pytest.raises(ConfigurationError):
            generate_channel(OfdmConfig(Q=16, N=1), paths, rng_stream(0))

    def test_unknown_profile(self):
        with pytest.raises(ConfigurationError):
            generate_channel(OfdmConfig(Q=16, N=1), 2, rng_stream(0), "triangular")

    def test_negative_decay(self):
        with pytest.raises(ConfigurationError):
            generate_channel(OfdmConfig(Q=16, N=1), 2, rng_stream(0), "exponential", -1.0)
