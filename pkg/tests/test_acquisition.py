import numpy as np
import pytest

from lsi.acquisition import (
    CalibrationError,
    DomainError,
    FinetuneConfig,
    SensorModel,
    calibrate_white,
    expected_white,
    finetune,
    read_sensed_csv,
    sense,
    sense_batch,
    white_scale,
    write_sensed_csv,
)
from lsi.decoder import DecoderConfig, Generator, InversionEncoder
from lsi.encoder import DigitalEncoder, EncoderConfig
from lsi.losses import LossWeights
from lsi.optics import ConfigurationError, init_balanced, measure_array


class TestSensorModel:
    @pytest.mark.parametrize("bits", [7, 17])
    def test_bits_range(self, bits):
        with pytest.raises(ConfigurationError):
            SensorModel(adc_bits=bits)

    def test_range_order(self):
        with pytest.raises(ConfigurationError):
            SensorModel(adc_lo=1.0, adc_hi=1.0)


class TestSense:
    def test_ideal_within_step(self, rng):
        model = SensorModel()
        c = rng.uniform(0, 1000, 50)
        assert np.max(np.abs(sense(model, c) - c)) <= model.step

    def test_zero_is_quantized_bias(self):
        model = SensorModel(bias=3.3, adc_bits=8)
        np.testing.assert_array_equal(sense(model, np.zeros(3)), model.quantize(np.array([3.3] * 3)))

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            sense(SensorModel(), np.array([1.0, -0.1]))

    def test_clip(self):
        model = SensorModel(gain=10.0)
        assert sense(model, np.array([1e6]))[0] == model.adc_hi

    def test_monotone_noise_free(self):
        model = SensorModel(gain=1.3, bias=0.02, adc_bits=10)
        v = sense(model, np.linspace(0, 1800, 4000))
        assert np.all(np.diff(v) >= 0)

    def test_quantization_bound(self, rng):
        model = SensorModel(adc_bits=8)
        c = rng.uniform(0, 2048, 1000)
        assert np.max(np.abs(sense(model, c) - c)) <= model.full_scale / 2 ** 8

    def test_read_noise_std(self):
        model = SensorModel(read_sigma=5.0, seed=3)
        v = sense(model, np.full(10_000, 700.0))
        assert abs(v.std() - 5.0) < 0.2 * 5.0

    def test_shot_noise_mean(self):
        model = SensorModel(shot_scale=1.0, seed=1)
        v = sense(model, np.full(10_000, 400.0))
        assert abs(v.mean() - 400.0) < 1.0 and abs(v.std() - 20.0) < 2.0

    def test_reproducible_and_order_free(self, rng):
        model = SensorModel(read_sigma=2.0, seed=9)
        c = rng.uniform(0, 500, (6, 4))
        a = sense_batch(model, c)
        assert a.tobytes() == sense_batch(model, c).tobytes()
        np.testing.assert_array_equal(a[4], sense(model, c[4], index=4))

    def test_saturation_stage(self):
        model = SensorModel(saturation=100.0)
        assert sense(model, np.array([1000.0]))[0] <= 100.0 + model.step


class TestCalibration:
    def test_gain_two(self):
        enc = init_balanced(8, 16, 16, seed=0)
        # exact up to one ADC step on the summed readings
        assert white_scale(SensorModel(gain=2.0), enc) == pytest.approx(0.5, rel=SensorModel().step / 256)

    def test_unit_gain(self):
        enc = init_balanced(8, 16, 16, seed=0)
        assert white_scale(SensorModel(), enc) == pytest.approx(1.0, abs=SensorModel().step / 128)

    def test_gain_recovered_12bit(self):
        enc = init_balanced(16, 32, 32, seed=0)
        s = white_scale(SensorModel(gain=1.37, adc_bits=12), enc)
        assert abs(1.0 / s - 1.37) / 1.37 < 0.01

    def test_round_trip_within_step(self):
        model = SensorModel(gain=1.21, adc_bits=12)
        enc = init_balanced(16, 32, 32, seed=1)
        s = white_scale(model, enc)
        white = measure_array(enc, np.ones((1, 1, 32, 32)))[0]
        np.testing.assert_allclose(s * sense(model, white), expected_white(enc), atol=model.step)

    def test_zero_readings(self):
        with pytest.raises(CalibrationError):
            calibrate_white(np.zeros(4), np.ones(4))

    def test_explicit_expected(self):
        assert calibrate_white(np.array([2.0, 4.0]), np.array([1.0, 2.0])) == 0.5


def test_sensed_csv_round_trip(tmp_path, rng):
    meas = rng.random((3, 4)) * 100
    write_sensed_csv(tmp_path / "s.csv", meas, ["a.png", "b.png", "c.png"])
    back, paths = read_sensed_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back, meas)
    assert paths == ["a.png", "b.png", "c.png"]
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "m0,m1,m2,m3,path"


class TestFinetune:
    @pytest.fixture
    def system(self, rng):
        dcfg = DecoderConfig(levels=3, c_lat=8, gen_widths=(8, 8, 4), inv_widths=(4, 8, 8))
        G, N = Generator(dcfg, seed=0), InversionEncoder(dcfg, seed=0)
        G.freeze()
        N.freeze()
        E = DigitalEncoder(EncoderConfig(d=6, levels=3, c_lat=8, split=(1, 1, 1), hidden=16, mix_expansion=2,
                                         input_scale=1 / 64), seed=0)
        enc = init_balanced(6, 16, 16, seed=0)
        images = rng.random((40, 1, 16, 16))
        return G, N, E, enc, images

    def test_too_few_pairs(self, system):
        G, N, E, enc, images = system
        meas = measure_array(enc, images)
        with pytest.raises(ConfigurationError):
            finetune(E, meas[:9], images[:9], meas, images, G, N, LossWeights(), FinetuneConfig(epochs=1))

    def test_frozen_untouched_and_deterministic(self, system):
        G, N, E, enc, images = system
        meas = measure_array(enc, images)
        before = (G.checksum(), N.checksum())
        start = E.state()
        cfg = FinetuneConfig(lr=1e-3, epochs=2, batch_size=8)
        r1 = finetune(E, meas[:30], images[:30], meas[30:], images[30:], G, N, LossWeights(), cfg)
        after1 = E.checksum()
        E.load_state(start)
        r2 = finetune(E, meas[:30], images[:30], meas[30:], images[30:], G, N, LossWeights(), cfg)
        assert (G.checksum(), N.checksum()) == before
        assert after1 == E.checksum() and r1.losses == r2.losses
        assert r1.post_psnr != r1.pre_psnr
