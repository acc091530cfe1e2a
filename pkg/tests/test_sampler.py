"""Tests for ADC sampling, rate estimation and fusion."""

import numpy as np
import pytest

from kehsim.activity import (
    ActivityLabel,
    PehPosition,
    SubjectParams,
    generate_session,
    parse_schedule,
)
from kehsim.circuit import BuckSpec, CapacitorSpec, VoltageTrace, simulate_trace
from kehsim.errors import ConfigError, DomainError
from kehsim.sampler import (
    AdcSpec,
    FeatureVector,
    RateSample,
    SamplerConfig,
    SparseSample,
    class_separation,
    estimate_rates,
    extract_features,
    fuse,
    sample_spacing,
    sparse_sample,
)

ADC = AdcSpec()
CFG = SamplerConfig(t_c=5.0)


def ramp_trace(slope: float, seconds: float, v0: float = 3.1, dt: float = 0.01, label="WALK"):
    n = int(round(seconds / dt)) + 1
    t = np.arange(n) * dt
    return VoltageTrace(dt=dt, samples=v0 + slope * t, labels=np.full(n, label))


def samples_from(volts, label="WALK", discharges=None, t_c=5.0):
    discharges = discharges or [0] * len(volts)
    return [
        SparseSample(t=i * t_c, v=float(ADC.quantize(v)), label=label, discharges=d)
        for i, (v, d) in enumerate(zip(volts, discharges))
    ]


class TestAdc:
    def test_mid_scale(self):
        assert int(ADC.level(2.5)) == 511
        assert float(ADC.quantize(2.5)) == pytest.approx(2.4976, abs=1e-4)

    def test_full_scale_and_clipping(self):
        assert int(ADC.level(5.0)) == 1023
        assert int(ADC.level(6.0)) == 1023
        assert int(ADC.level(0.0)) == 0

    def test_resolution_validated(self):
        with pytest.raises(ConfigError):
            AdcSpec(bits=4)


class TestSparseSample:
    def test_sample_instants(self):
        samples = sparse_sample(ramp_trace(0.02, 20.0), CFG)
        assert [s.t for s in samples] == [0.0, 5.0, 10.0, 15.0, 20.0]
        assert all(s.label == "WALK" for s in samples)

    def test_values_are_quantized(self):
        samples = sparse_sample(ramp_trace(0.02, 20.0), CFG)
        for s in samples:
            level = s.v / ADC.lsb
            assert level == pytest.approx(round(level), abs=1e-6)

    def test_trace_too_short(self):
        with pytest.raises(DomainError):
            sparse_sample(ramp_trace(0.02, 9.0), CFG)

    def test_random_phase_is_seeded(self):
        cfg = SamplerConfig(t_c=5.0, random_phase=True)
        a = sparse_sample(ramp_trace(0.02, 30.0), cfg, seed=4)
        b = sparse_sample(ramp_trace(0.02, 30.0), cfg, seed=4)
        assert a == b
        assert 0.0 <= a[0].t < 5.0

    def test_discharges_detected_from_drops(self):
        volts = np.concatenate([np.linspace(3.5, 3.99, 1000), np.linspace(3.08, 3.3, 1001)])
        trace = VoltageTrace(dt=0.01, samples=volts, labels=np.full(len(volts), "RUN"))
        samples = sparse_sample(trace, CFG)
        assert samples[0].discharges == 0
        assert samples[-1].discharges == 1


class TestEstimateRates:
    def test_rate_arithmetic_on_quantized_samples(self):
        samples = samples_from([3.2, 3.3, 3.45])
        series = estimate_rates(samples, CFG, PehPosition.FRONT)
        assert len(series.samples) == 2
        for a, b, rate in zip(samples, samples[1:], series.samples):
            assert rate.r == (b.v - a.v) / 5.0
            assert rate.position is PehPosition.FRONT
            assert rate.label is ActivityLabel.WALK

    def test_discharge_window_discarded(self):
        samples = samples_from([3.9, 3.2], discharges=[0, 1])
        series = estimate_rates(samples, CFG)
        assert series.samples == []
        assert series.stats.non_positive == 1

    def test_positive_window_with_discharge_is_underestimated(self):
        samples = samples_from([3.2, 3.4], discharges=[0, 1])
        series = estimate_rates(samples, CFG)
        assert len(series.samples) == 1
        assert series.stats.underestimated == 1
        cfg = SamplerConfig(t_c=5.0, drop_underestimated=True)
        assert estimate_rates(samples, cfg).samples == []

    def test_transition_window_dropped(self):
        a = SparseSample(t=0.0, v=3.2, label="WALK", segment_in=0, segment_out=1)
        b = SparseSample(t=5.0, v=3.3, label="RUN", segment_in=1, segment_out=1)
        c = SparseSample(t=10.0, v=3.4, label="RUN", segment_in=1, segment_out=1)
        series = estimate_rates([a, b, c], CFG)
        assert series.stats.transition == 0
        assert len(series.samples) == 2

        a_mixed = SparseSample(t=0.0, v=3.2, label="WALK", segment_in=0, segment_out=0)
        series = estimate_rates([a_mixed, b], CFG)
        assert series.stats.transition == 1
        assert series.samples == []

    def test_flat_window(self):
        samples = samples_from([3.5, 3.5, 3.495], label="ST")
        series = estimate_rates(samples, CFG)
        assert series.samples == []
        assert series.stats.flat == 2
        assert all(w.label is ActivityLabel.ST for w in series.flat)

    def test_settling_window_skipped(self):
        samples = samples_from([1.0, 1.1])
        assert estimate_rates(samples, CFG).stats.settling == 1
        unsettled = SamplerConfig(t_c=5.0, settle=False)
        assert len(estimate_rates(samples, unsettled).samples) == 1

    def test_window_just_after_discharge_is_not_settling(self):
        samples = samples_from([3.08, 3.2])
        assert len(estimate_rates(samples, CFG).samples) == 1

    def test_rate_sample_must_be_positive(self):
        with pytest.raises(DomainError):
            RateSample(t_end=5.0, r=0.0, position=PehPosition.REAR, label=ActivityLabel.WALK)

    def test_sample_spacing(self):
        assert sample_spacing(samples_from([3.2, 3.3, 3.4], t_c=6.0)) == 6.0
        uneven = samples_from([3.2, 3.3, 3.4])
        uneven[2] = SparseSample(t=11.0, v=uneven[2].v, label="WALK")
        with pytest.raises(DomainError, match="evenly"):
            sample_spacing(uneven)
        with pytest.raises(DomainError):
            sample_spacing(samples_from([3.2]))

    @pytest.mark.parametrize("t_c", [1.0, 2.0, 5.0, 6.0])
    def test_quantization_error_bound(self, t_c):
        slope = 0.0213
        cfg = SamplerConfig(t_c=t_c)
        series = estimate_rates(sparse_sample(ramp_trace(slope, 60.0), cfg), cfg)
        assert series.samples
        for rate in series.samples:
            assert abs(rate.r - slope) <= 2 * ADC.lsb / t_c


class TestFuse:
    def test_both_or_nothing(self):
        front = estimate_rates(samples_from([3.2, 3.3, 3.4, 3.2], discharges=[0, 0, 0, 1]), CFG)
        rear = estimate_rates(samples_from([3.3, 3.4, 3.5, 3.6]), CFG)
        vectors = fuse(front, rear)
        assert [v.t_end for v in vectors] == [5.0, 10.0]
        assert vectors[0].r_front == front.samples[0].r
        assert vectors[0].r_rear == rear.samples[0].r

    def test_flat_pairs_fuse_to_origin(self):
        front = estimate_rates(samples_from([3.5, 3.5], label="ST"), CFG)
        rear = estimate_rates(samples_from([3.6, 3.6], label="ST"), CFG)
        vectors = fuse(front, rear)
        assert vectors == [FeatureVector(0.0, 0.0, ActivityLabel.ST, 5.0)]

    def test_plain_lists(self):
        front = estimate_rates(samples_from([3.2, 3.3]), CFG).samples
        rear = estimate_rates(samples_from([3.3, 3.5]), CFG).samples
        assert len(fuse(front, rear)) == 1


class TestSeparation:
    def test_separated_clusters(self):
        vectors = [FeatureVector(0.01 + i * 1e-4, 0.01, ActivityLabel.WALK) for i in range(5)]
        vectors += [FeatureVector(0.04 + i * 1e-4, 0.03, ActivityLabel.RUN) for i in range(5)]
        assert class_separation(vectors) > 10

    def test_single_class(self):
        vectors = [FeatureVector(0.01, 0.01, ActivityLabel.WALK)] * 3
        with pytest.raises(DomainError):
            class_separation(vectors)


class TestSession:
    def test_session_features_have_every_class(self):
        schedule = parse_schedule("WALK:60,SD:60,SU:60,RUN:60,ST:60", repeats=3)
        subject = SubjectParams(id="S01", rng_seed=3)
        front_src, rear_src = generate_session(schedule, subject, dt=0.0025)
        cap, buck = CapacitorSpec(), BuckSpec()
        front = simulate_trace(front_src, cap, buck, dt=0.0025, v0=3.5)
        rear = simulate_trace(rear_src, cap, buck, dt=0.0025, v0=3.5)

        vectors, front_series, rear_series = extract_features(front, rear, CFG)

        assert {v.label for v in vectors} == set(ActivityLabel)
        assert front_series.stats.transition == 0
        for v in vectors:
            if v.label is ActivityLabel.ST:
                assert (v.r_rear, v.r_front) == (0.0, 0.0)
            else:
                assert v.r_rear > 0 and v.r_front > 0
        assert all(s.r > 0 for s in rear_series.samples)

    @pytest.mark.slow
    def test_hour_long_session_discards_every_negative_window(self):
        schedule = parse_schedule("WALK:60,RUN:60,SU:60,SD:60,ST:60", repeats=12)
        subject = SubjectParams(id="S01", rng_seed=5)
        _, rear_src = generate_session(schedule, subject, dt=0.0025)
        trace = simulate_trace(rear_src, CapacitorSpec(), BuckSpec(), dt=0.0025, v0=3.5)
        samples = sparse_sample(trace, CFG)
        series = estimate_rates(samples, CFG)

        kept = {round(s.t_end, 6) for s in series.samples}
        negative = [
            b.t for a, b in zip(samples, samples[1:])
            if b.discharges > a.discharges and b.v < a.v
        ]
        assert negative
        assert not kept.intersection(round(t, 6) for t in negative)
        assert series.stats.non_positive >= len(negative)
