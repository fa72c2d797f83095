"""Trace serialization, preprocessing, mis-trigger rejection, and the
simulate -> serialize -> ingest round trip."""

import numpy as np
import pytest

from tiltbeam.assembly import build_design_matrix, build_mesh
from tiltbeam.exceptions import IngestError
from tiltbeam.ingest import (
    IngestSpec,
    TiltTrace,
    ingest_tilt_csv,
    read_tilt_csv,
    write_tilt_csv,
)
from tiltbeam.model import AxleTrain, BeamSystem, SensorStation
from tiltbeam.synthetic import make_truth, synthesize_traces


@pytest.fixture
def setup(tmp_path):
    system = BeamSystem.simply_supported(36.0)
    mesh = build_mesh(system, 12)
    truth = make_truth(2e9, [], mesh)
    sensors = [SensorStation("PE1", 14.0), SensorStation("PE2", 22.0)]
    train = AxleTrain.from_total_mass(4.9, (0.0, 2.0))
    spec = IngestSpec(speed_m_s=1.25, start_offset_m=-8.0, window=(5.0, 30.0))
    sweep = np.linspace(6.0, 29.0, 24)
    return system, truth, sensors, train, spec, sweep, tmp_path


def synth(system, truth, sensors, train, spec, sigma=0.0, seed=0, baseline=None):
    return synthesize_traces(
        system, truth, sensors, train,
        speed_m_s=spec.speed_m_s, start_offset_m=spec.start_offset_m,
        rate_hz=5.0, duration_s=40.0, sigma_mm_per_m=sigma, seed=seed,
        baseline_mm_per_m=baseline,
    )


class TestRoundTrip:
    def test_forward_round_trip_within_interpolation_error(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        traces = synth(system, truth, sensors, train, spec)
        path = tmp / "crossing_01.csv"
        write_tilt_csv(path, traces)
        ms = ingest_tilt_csv([path], spec, sensors, sweep)
        A = build_design_matrix(system, sensors, sweep, truth.mesh, train)
        want = (A @ truth.to_compliance().values).reshape(2, sweep.size)
        # linear interpolation at 5 Hz x 1.25 m/s = 0.25 m spacing
        assert np.max(np.abs(ms.y - want)) < 5e-4 * np.max(np.abs(want))

    def test_constant_offset_invariance(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        plain = synth(system, truth, sensors, train, spec)
        shifted = synth(system, truth, sensors, train, spec, baseline=[0.7, -1.3])
        p1, p2 = tmp / "a.csv", tmp / "b.csv"
        write_tilt_csv(p1, plain)
        write_tilt_csv(p2, shifted)
        m1 = ingest_tilt_csv([p1], spec, sensors, sweep)
        m2 = ingest_tilt_csv([p2], spec, sensors, sweep)
        np.testing.assert_allclose(m1.y, m2.y, atol=1e-15)

    def test_ingestion_linear_in_tilt_scale(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        traces = synth(system, truth, sensors, train, spec)
        doubled = [
            TiltTrace(t.channel, t.time_s, 2.0 * t.tilt_mm_per_m, t.rate_hz,
                      t.speed_m_s, t.start_offset_m)
            for t in traces
        ]
        p1, p2 = tmp / "a.csv", tmp / "b.csv"
        write_tilt_csv(p1, traces)
        write_tilt_csv(p2, doubled)
        m1 = ingest_tilt_csv([p1], spec, sensors, sweep)
        m2 = ingest_tilt_csv([p2], spec, sensors, sweep)
        np.testing.assert_allclose(m2.y, 2.0 * m1.y, rtol=1e-12)

    def test_exact_serialization_round_trip(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        traces = synth(system, truth, sensors, train, spec, sigma=0.01, seed=3)
        path = tmp / "c.csv"
        write_tilt_csv(path, traces)
        back = read_tilt_csv(path, spec)
        by_ch = {t.channel: t for t in back}
        for t in traces:
            np.testing.assert_array_equal(by_ch[t.channel].time_s, t.time_s)
            np.testing.assert_array_equal(by_ch[t.channel].tilt_mm_per_m, t.tilt_mm_per_m)


class TestRejection:
    def test_scrambled_crossing_rejected(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        rng = np.random.default_rng(7)
        paths = []
        for s in range(3):
            traces = synth(system, truth, sensors, train, spec, sigma=0.002, seed=s)
            p = tmp / f"x{s}.csv"
            write_tilt_csv(p, traces)
            paths.append(p)
        # a deliberately scrambled crossing: same marginal values, no shape
        traces = synth(system, truth, sensors, train, spec, sigma=0.002, seed=99)
        scrambled = [
            TiltTrace(t.channel, t.time_s, rng.permutation(t.tilt_mm_per_m),
                      t.rate_hz, t.speed_m_s, t.start_offset_m)
            for t in traces
        ]
        pbad = tmp / "bad.csv"
        write_tilt_csv(pbad, scrambled)
        clean = ingest_tilt_csv(paths, spec, sensors, sweep)
        with_bad = ingest_tilt_csv(paths + [pbad], spec, sensors, sweep)
        np.testing.assert_allclose(with_bad.y, clean.y, rtol=1e-12)

    def test_all_crossings_rejected(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        spec_strict = IngestSpec(
            speed_m_s=spec.speed_m_s, start_offset_m=spec.start_offset_m,
            window=spec.window, min_correlation=1.0,
        )
        rng = np.random.default_rng(1)
        paths = []
        for s in range(2):
            traces = synth(system, truth, sensors, train, spec, sigma=0.002, seed=s)
            scrambled = [
                TiltTrace(t.channel, t.time_s, rng.permutation(t.tilt_mm_per_m),
                          t.rate_hz, t.speed_m_s, t.start_offset_m)
                for t in traces
            ]
            p = tmp / f"y{s}.csv"
            write_tilt_csv(p, scrambled)
            paths.append(p)
        with pytest.raises(IngestError):
            ingest_tilt_csv(paths, spec_strict, sensors, sweep)


class TestSchemaErrors:
    def test_missing_columns(self, setup, tmp_path):
        *_, spec, sweep, _ = setup
        p = tmp_path / "bad.csv"
        p.write_text("time_s,tilt\n0.0,1.0\n")
        with pytest.raises(IngestError):
            read_tilt_csv(p, spec)

    def test_empty_window(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        # vehicle never reaches the window within the trace duration
        traces = synthesize_traces(
            system, truth, sensors, train,
            speed_m_s=spec.speed_m_s, start_offset_m=-100.0,
            rate_hz=5.0, duration_s=10.0, sigma_mm_per_m=0.0, seed=0,
        )
        p = tmp / "short.csv"
        write_tilt_csv(p, traces)
        with pytest.raises(IngestError):
            ingest_tilt_csv([p], spec, sensors, sweep)

    def test_groups_average_into_composites(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        # three per-girder channels average into each composite channel
        girders = [SensorStation(f"PE1{j}", 14.0) for j in (1, 2, 3)] + [
            SensorStation(f"PE2{j}", 22.0) for j in (1, 2, 3)
        ]
        traces = synth(system, truth, girders, train, spec)
        p = tmp / "g.csv"
        write_tilt_csv(p, traces)
        grouped = IngestSpec(
            speed_m_s=spec.speed_m_s, start_offset_m=spec.start_offset_m,
            window=spec.window,
            groups={"PE1": ("PE11", "PE12", "PE13"), "PE2": ("PE21", "PE22", "PE23")},
        )
        ms = ingest_tilt_csv([p], grouped, sensors, sweep)
        single = synth(system, truth, sensors, train, spec)
        p2 = tmp / "s.csv"
        write_tilt_csv(p2, single)
        ms_single = ingest_tilt_csv([p2], spec, sensors, sweep)
        np.testing.assert_allclose(ms.y, ms_single.y, rtol=1e-10)

    def test_sign_flags_apply_per_channel(self, setup):
        system, truth, sensors, train, spec, sweep, tmp = setup
        traces = synth(system, truth, sensors, train, spec)
        p = tmp / "s.csv"
        write_tilt_csv(p, traces)
        flipped = IngestSpec(
            speed_m_s=spec.speed_m_s, start_offset_m=spec.start_offset_m,
            window=spec.window, signs={"PE1": -1.0, "PE2": 1.0},
        )
        m1 = ingest_tilt_csv([p], spec, sensors, sweep)
        m2 = ingest_tilt_csv([p], flipped, sensors, sweep)
        np.testing.assert_allclose(m2.y[0], -m1.y[0], rtol=1e-12)
        np.testing.assert_allclose(m2.y[1], m1.y[1], rtol=1e-12)
