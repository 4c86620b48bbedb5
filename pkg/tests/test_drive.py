import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivetune.drive import (
    UNSTABLE_SENTINEL,
    PlantModel,
    RegisterMapError,
    SimulatedDrive,
    StubDrive,
    TrialError,
    load_register_map,
    run_trial,
    simulate_trial,
)
from drivetune.metrics import evaluate_objectives
from drivetune.records import ParameterPoint
from drivetune.signals import (
    ExcitationProfile,
    SignalTrace,
    render_profile,
    tuning_profile,
)

QUIET_PLANT = PlantModel(noise_std=0.0)


def toy_profile(levels, sample_period=50e-6):
    return ExcitationProfile(
        segments=tuple((lv, sample_period) for lv in levels), sample_period=sample_period
    )


def hand_unrolled_response(plant, gains, reference):
    """Step-by-step recursion written directly from the loop equations."""
    kp = gains.kp / plant.gain_scale
    ki = gains.ki / plant.gain_scale
    y, acc = 0.0, 0.0
    out = []
    for i in range(len(reference)):
        r = reference[i - plant.latency_samples] if i >= plant.latency_samples else 0.0
        e = r - y
        tentative = acc + e
        u = kp * e + ki * plant.sample_period * tentative
        if u > plant.v_max:
            u = plant.v_max
        elif u < -plant.v_max:
            u = -plant.v_max
        else:
            acc = tentative
        out.append(y)
        y = y + (plant.sample_period / plant.inductance) * (u - plant.resistance * y)
    return out


class TestSimulateTrial:
    def test_zero_reference_equilibrium(self):
        profile = ExcitationProfile(
            segments=((0.0, 0.002), (1e-12, 50e-6)), sample_period=50e-6
        )
        trace, stable = simulate_trial(QUIET_PLANT, ParameterPoint(9000, 9000), profile)
        assert stable
        assert np.abs(trace.response[:-2]).max() == 0.0

    def test_integral_action_removes_steady_state_error(self):
        # long hold: the integrator should close the proportional-only gap
        profile = ExcitationProfile(segments=((1.53, 1.0),), sample_period=50e-6)
        trace, stable = simulate_trial(QUIET_PLANT, ParameterPoint(2000, 10000), profile)
        assert stable
        d = 1.53
        assert abs(trace.reference[-1] - trace.response[-1]) < 1e-3 * d

    def test_matches_hand_unrolled_recursion(self):
        profile = toy_profile([1.0, 2.0, -1.0])
        gains = ParameterPoint(2000, 2000)
        trace, stable = simulate_trial(QUIET_PLANT, gains, profile)
        expected = hand_unrolled_response(QUIET_PLANT, gains, render_profile(profile))
        assert stable
        assert trace.response.tolist() == pytest.approx(expected, rel=1e-15, abs=0.0)

    def test_hand_unrolled_with_saturation_and_latency(self):
        # high gains so the voltage clamp engages and anti-windup matters
        plant = PlantModel(noise_std=0.0, v_max=10.0, latency_samples=3)
        profile = toy_profile([1.5] * 6 + [0.0] * 6)
        gains = ParameterPoint(9000, 9500)
        trace, _ = simulate_trial(plant, gains, profile)
        expected = hand_unrolled_response(plant, gains, render_profile(profile))
        assert trace.response.tolist() == pytest.approx(expected, rel=1e-15, abs=0.0)

    def test_noise_free_run_is_pure(self):
        profile = tuning_profile()
        gains = ParameterPoint(4000, 4000)
        t1, _ = simulate_trial(QUIET_PLANT, gains, profile, np.random.default_rng(1))
        t2, _ = simulate_trial(QUIET_PLANT, gains, profile, np.random.default_rng(2))
        assert (t1.response == t2.response).all()

    def test_noise_applies_to_recording_only(self):
        profile = tuning_profile()
        gains = ParameterPoint(4000, 4000)
        noisy_plant = PlantModel()
        clean, _ = simulate_trial(QUIET_PLANT, gains, profile)
        noisy, _ = simulate_trial(noisy_plant, gains, profile, np.random.default_rng(3))
        residual = noisy.response - clean.response
        # pure additive measurement noise: zero-mean, correct scale
        assert abs(residual.mean()) < 5 * noisy_plant.noise_std / np.sqrt(len(residual))
        assert residual.std() == pytest.approx(noisy_plant.noise_std, rel=0.1)

    def test_divergence_truncates_and_flags(self):
        # huge supply voltage so the clamp cannot save an unstable loop
        plant = PlantModel(noise_std=0.0, v_max=1e9, gain_scale=1.0)
        profile = tuning_profile()
        trace, stable = simulate_trial(plant, ParameterPoint(10000, 10000), profile)
        assert not stable
        assert len(trace) < len(render_profile(profile))
        assert np.abs(trace.response).max() > 100 * 1.53

    def test_sample_period_mismatch_rejected(self):
        profile = tuning_profile(sample_period=1e-4)
        with pytest.raises(ValueError, match="sample_period"):
            simulate_trial(QUIET_PLANT, ParameterPoint(1000, 1000), profile)

    @given(st.integers(500, 10000), st.integers(500, 10000))
    @settings(max_examples=25, deadline=None)
    def test_clamped_response_is_bounded(self, kp, ki):
        # passivity of the voltage-clamped loop: |y| <= v_max / R from y0 = 0
        profile = ExcitationProfile(segments=((1.53, 0.004), (0.0, 0.004)),
                                    sample_period=50e-6)
        trace, stable = simulate_trial(QUIET_PLANT, ParameterPoint(kp, ki), profile)
        if stable:
            bound = QUIET_PLANT.v_max / QUIET_PLANT.resistance
            assert np.abs(trace.response).max() <= bound + 1e-9

    @given(st.integers(500, 7999), st.integers(500, 10000))
    @settings(max_examples=20, deadline=None)
    def test_integer_grid_smoothness_in_operating_region(self, kp, ki):
        # adjacent integer gains barely move the metrics; checked away from
        # the stability boundary near kp ~ 8850 where exponential transient
        # sensitivity is inherent.  ITAE carries an extra factor of N over
        # the other (averaged) metrics, so it is compared per sample.
        profile = ExcitationProfile(segments=((1.53, 0.008), (0.0, 0.008)),
                                    sample_period=50e-6)
        a, _ = simulate_trial(QUIET_PLANT, ParameterPoint(kp, ki), profile)
        b, _ = simulate_trial(QUIET_PLANT, ParameterPoint(kp + 1, ki), profile)
        va = evaluate_objectives(a).as_array()
        vb = evaluate_objectives(b).as_array()
        delta = np.abs(va - vb)
        assert delta[0] < 1e-3
        assert delta[1] / len(a) < 1e-3
        assert delta[2] < 1e-3
        assert delta[3] < 1e-3


class TestPlantModel:
    def test_rejects_nonpositive_core_parameters(self):
        for kwargs in ({"resistance": 0.0}, {"inductance": -1.0}, {"v_max": 0.0},
                       {"gain_scale": 0.0}):
            with pytest.raises(ValueError):
                PlantModel(**kwargs)

    def test_overrides(self):
        plant = PlantModel().with_overrides(noise_std=0.0, gain_scale=10.0)
        assert plant.noise_std == 0.0
        assert plant.gain_scale == 10.0


class TestSimulatedDriveAndRunTrial:
    def test_fixed_seed_is_bitwise_reproducible(self):
        profile = tuning_profile()

        def one():
            drive = SimulatedDrive(PlantModel(), rng=77)
            return run_trial(drive, ParameterPoint(4000, 3000), profile, trial_index=5)

        a, b = one(), one()
        assert a.point == b.point
        assert a.objectives == b.objectives
        assert a.trial_index == 5

    def test_requires_written_gains(self):
        drive = SimulatedDrive(PlantModel(), rng=0)
        with pytest.raises(RuntimeError):
            drive.run_excitation(tuning_profile())

    def test_perfect_tracking_backend_gives_zero_vector(self):
        class EchoDrive(SimulatedDrive):
            def run_excitation(self, profile):
                ref = render_profile(profile)
                return SignalTrace(ref, ref.copy(), profile.sample_period)

        record = run_trial(EchoDrive(PlantModel()), ParameterPoint(1000, 1000),
                           tuning_profile())
        assert record.objectives.as_tuple() == (0.0, 0.0, 0.0, 0.0)
        assert record.stable

    def test_unstable_run_gets_sentinel(self):
        plant = PlantModel(noise_std=0.0, v_max=1e9, gain_scale=1.0)
        drive = SimulatedDrive(plant, rng=0)
        record = run_trial(drive, ParameterPoint(10000, 10000), tuning_profile())
        assert not record.stable
        assert record.objectives == UNSTABLE_SENTINEL

    def test_backend_failure_carries_step_provenance(self):
        class BrokenWrite(SimulatedDrive):
            def write_parameters(self, gains):
                raise IOError("bus timeout")

        with pytest.raises(TrialError) as err:
            run_trial(BrokenWrite(PlantModel(), rng=0), ParameterPoint(1000, 1000),
                      tuning_profile())
        assert err.value.step == "write"

        class BrokenExcite(SimulatedDrive):
            def run_excitation(self, profile):
                raise IOError("oscilloscope timeout")

        with pytest.raises(TrialError) as err:
            run_trial(BrokenExcite(PlantModel(), rng=0), ParameterPoint(1000, 1000),
                      tuning_profile())
        assert err.value.step == "excite"


REGISTER_FILE = """\
# current-loop controller registers
kp = 0x2000:16
ki = 0x2002:16
status = 0x2100:32
"""


class TestRegisterMap:
    def test_valid_map(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text(REGISTER_FILE)
        reg_map = load_register_map(path)
        assert reg_map["kp"].address == 0x2000
        assert reg_map["ki"].width_bits == 16
        assert "status" in reg_map

    def test_duplicate_name_rejected_with_line(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text("kp = 0x2000:16\nkp = 0x2004:16\n")
        with pytest.raises(RegisterMapError, match=":2:"):
            load_register_map(path)

    def test_overlapping_addresses_rejected(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text("kp = 0x2000:32\nki = 0x2002:16\n")
        with pytest.raises(RegisterMapError, match="overlaps"):
            load_register_map(path)

    def test_malformed_line_rejected_with_number(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text("kp = 0x2000:16\nki := 2:16\n")
        with pytest.raises(RegisterMapError, match=":2:"):
            load_register_map(path)

    def test_bad_width_rejected(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text("kp = 0x2000:12\n")
        with pytest.raises(RegisterMapError, match="width"):
            load_register_map(path)


class TestStubDrive:
    def make_stub(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text(REGISTER_FILE)
        return StubDrive(load_register_map(path))

    def test_requires_kp_and_ki_entries(self, tmp_path):
        path = tmp_path / "registers.txt"
        path.write_text("kp = 0x2000:16\n")
        with pytest.raises(RegisterMapError, match="ki"):
            StubDrive(load_register_map(path))

    def test_write_log_orders_kp_then_ki(self, tmp_path):
        stub = self.make_stub(tmp_path)
        record = run_trial(stub, ParameterPoint(1234, 5678), tuning_profile())
        assert [(w[0], w[3]) for w in stub.write_log] == [("kp", 1234), ("ki", 5678)]
        assert stub.write_log[0][1] == 0x2000
        assert record.objectives.as_tuple() == (0.0, 0.0, 0.0, 0.0)
