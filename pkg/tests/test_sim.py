import hashlib
import logging

import numpy as np
import pytest

from tdn.errors import ConfigError, DataError
from tdn.sim import numex, tts
from tdn.sim.datasets import ONSET, dataset_csv, gen_dataset, read_dataset, scenarios, write_dataset
from tdn.sim.faults import LATENT


# -- numerical example ----------------------------------------------------------------


def test_noise_free_observation():
    z = numex.observe(1.0, 0.0)
    assert z[0] == pytest.approx(1.1, abs=1e-15)
    assert z[1] == 0.0


def test_origin_is_guarded():
    assert np.all(np.isfinite(numex.observe(0.0, 0.0)))


def test_step_reproducible():
    a = numex.NumexState(rng=np.random.default_rng(3))
    b = numex.NumexState(rng=np.random.default_rng(3))
    za = np.array([numex.numex_step(a) for _ in range(50)])
    zb = np.array([numex.numex_step(b) for _ in range(50)])
    assert np.array_equal(za, zb) and a.k == 50


def test_simulate_reproducible():
    a, _ = numex.simulate(300, np.random.default_rng(1))
    b, _ = numex.simulate(300, np.random.default_rng(1))
    assert np.array_equal(a, b)


def test_stationary_after_burn_in():
    Z, _ = numex.simulate(15000, np.random.default_rng(0))
    assert np.all(np.isfinite(Z))
    ratio = Z[:7500].std(axis=0) / Z[7500:].std(axis=0)
    assert np.all((ratio > 0.8) & (ratio < 1.25))


@pytest.mark.parametrize(
    "fid, k, channel, value",
    [("F05", 399, 0, 0.36), ("F10", 299, 4, -1.0), ("F07", 199, 2, 0.0), ("F06", 199, 1, 0.0)],
)
def test_numex_fault_values(fid, k, channel, value):
    sig = numex.fault_profile(fid).signal([k], 5)[0]
    assert sig[channel] == pytest.approx(value, abs=1e-12)
    assert np.all(np.delete(sig, channel) == 0)


def test_fault_is_zero_before_onset():
    for p in numex.FAULTS.values():
        assert not p.signal(np.arange(200), 5).any()


def test_unknown_fault():
    with pytest.raises(KeyError):
        numex.fault_profile("F11")


def test_latent_faults_have_no_ground_truth():
    for fid in ("F01", "F02", "F03", "F04"):
        p = numex.fault_profile(fid)
        assert p.location == LATENT and not p.additive
        Zf, F = numex.simulate(400, np.random.default_rng(2), fault=p)
        assert not F.any()
        Zn, _ = numex.simulate(400, np.random.default_rng(2))
        assert np.array_equal(Zf[:ONSET], Zn[:ONSET]) and not np.array_equal(Zf[ONSET:], Zn[ONSET:])


@pytest.mark.parametrize("fid", ["F05", "F06", "F07", "F08", "F09", "F10"])
def test_numex_additivity(fid):
    Zf, F = numex.simulate(1000, np.random.default_rng(5), fault=fid)
    Zn, _ = numex.simulate(1000, np.random.default_rng(5))
    assert np.array_equal(Zf - Zn, F)
    assert not F[:ONSET].any() and F[ONSET + 1 :].any()


# -- three-tank system ----------------------------------------------------------------


def test_equal_levels_no_pipe_flow():
    assert tts.flows(25.0, 10.0, 25.0)[0] == 0.0


def test_q13_hand_value():
    q13 = tts.flows(40.0, 20.0, 30.0)[0]
    assert q13 == pytest.approx(0.23 * 140.0, rel=1e-14)


def test_blockage_perturbs_q13():
    base = tts.flows(40.0, 20.0, 30.0)[0]
    assert tts.flows(40.0, 20.0, 30.0, f8=-0.5)[0] == pytest.approx(0.5 * base, rel=1e-14)


def test_empty_tanks_stay_empty():
    st = tts.TtsState(0.0, 0.0, 0.0)
    for _ in range(10):
        y, _ = tts.tts_step(st, 0.0, 0.0)
    assert not y.any()


def test_mass_conservation():
    r = np.random.default_rng(0)
    for _ in range(100):
        h = r.uniform(1, 60, 3)
        q1, q2 = r.uniform(0, 100, 2)
        dh = tts.tts_derivatives(h, q1, q2)
        q20 = tts.flows(*h)[2]
        assert abs(tts.C_AREA * sum(dh) - (q1 + q2 - q20)) < 1e-9


def test_equilibrium_after_5000_s():
    st = tts.TtsState()
    for _ in range(5000):
        tts.tts_step(st, *tts.Q_NOMINAL)
    assert np.linalg.norm(tts.tts_derivatives(st.levels, *tts.Q_NOMINAL)) < 1e-3
    assert all(0 < h < tts.H_MAX for h in st.levels)


def test_leak_lowers_level():
    base = tts.tts_derivatives((40.0, 20.0, 30.0), 30, 30)
    leak = tts.tts_derivatives((40.0, 20.0, 30.0), 30, 30, leak=(0.1, 0.0, 0.0))
    expect = tts.A1 * tts.TAU * 0.1 * np.sqrt(2 * tts.G * 40.0) / tts.C_AREA
    assert base[0] - leak[0] == pytest.approx(expect, rel=1e-12)
    assert base[1:] == leak[1:]


def test_actuator_fault_acts_on_dynamics_and_record():
    a, b = tts.TtsState(), tts.TtsState()
    _, za = tts.tts_step(a, 30.0, 30.0)
    _, zb = tts.tts_step(b, 30.0, 30.0, actuator=(-20.0, 0.0))
    assert za[0] - zb[0] == 20.0
    assert b.h1 < a.h1 and b.h2 == a.h2


def test_f02_run():
    Zf, F = tts.simulate(600, np.random.default_rng(1), fault="F02", burn_in=2000)
    Zn, _ = tts.simulate(600, np.random.default_rng(1), burn_in=2000)
    np.testing.assert_allclose(Zn[ONSET:, 0] - Zf[ONSET:, 0], 20.0, rtol=0, atol=1e-12)
    assert np.all(Zf[ONSET + 50 :, 2] < Zn[ONSET + 50 :, 2])
    assert np.array_equal(F, Zf - Zn)


def test_sensor_fault_only_touches_record():
    Zf, F = tts.simulate(500, np.random.default_rng(2), fault="F03", burn_in=500)
    Zn, _ = tts.simulate(500, np.random.default_rng(2), burn_in=500)
    assert np.array_equal(Zf - Zn, F)
    assert np.array_equal(np.delete(F, 2, axis=1), np.zeros((500, 4)))
    assert F[399, 2] == pytest.approx(-0.005 * 199, abs=1e-9)


def test_component_faults_have_no_ground_truth():
    for fid in ("F05", "F06", "F07", "F08"):
        p = tts.fault_profile(fid)
        assert not p.additive
    Zf, F = tts.simulate(400, np.random.default_rng(3), fault="F05", burn_in=500)
    assert not F.any()


def test_levels_nonnegative_under_leaks():
    st = tts.TtsState(1.0, 1.0, 1.0)
    for _ in range(2000):
        y, _ = tts.tts_step(st, 0.0, 0.0, leak=(1.0, 1.0, 1.0))
        assert np.all(y >= 0)


def test_saturation_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="tdn.sim.tts"):
        tts.simulate(200, np.random.default_rng(0), burn_in=0, q_nominal=(149.0, 149.0), h0=(61.0, 61.0, 61.0))
    assert "clamped" in caplog.text


def test_tts_reproducible():
    a, _ = tts.simulate(300, np.random.default_rng(4), burn_in=100)
    b, _ = tts.simulate(300, np.random.default_rng(4), burn_in=100)
    assert np.array_equal(a, b)


# -- datasets -----------------------------------------------------------------------------


def test_numex_train_shape():
    ds = gen_dataset("numex", "numex-train", 0)
    assert ds.Z.shape == (15000, 5) and not ds.labels.any()


def test_numex_test_labels():
    ds = gen_dataset("numex", "numex-test-F09", 0)
    assert len(ds) == 1000
    assert not ds.labels[:200].any() and ds.labels[200:].all()
    assert ds.meta["onset"] == 200 and ds.meta["fault_id"] == "F09" and ds.meta["seed"] == 0


def test_tts_test_size():
    ds = gen_dataset("tts", "test-F06", 1)
    assert len(ds) == 2000 and ds.labels.sum() == 1800


def test_scenario_list():
    assert scenarios("numex") == ["train"] + [f"test-F{i:02d}" for i in range(1, 11)]
    assert len(scenarios("tts")) == 9


@pytest.mark.parametrize("bad", ["nope", "test-F99", "test-"])
def test_bad_scenarios(bad):
    with pytest.raises(ConfigError):
        gen_dataset("numex", bad, 0)


def test_test_size_must_exceed_prefix():
    with pytest.raises(ConfigError):
        gen_dataset("numex", "test-F05", 0, test_size=200)


def test_same_seed_same_bytes():
    a = dataset_csv(gen_dataset("numex", "test-F05", 7))
    b = dataset_csv(gen_dataset("numex", "test-F05", 7))
    assert hashlib.sha256(a.encode()).digest() == hashlib.sha256(b.encode()).digest()
    assert a != dataset_csv(gen_dataset("numex", "test-F05", 8))


def test_scenarios_use_separate_streams():
    a = gen_dataset("numex", "test-F05", 0)
    b = gen_dataset("numex", "test-F06", 0)
    assert not np.array_equal(a.Z[:200], b.Z[:200])


def test_csv_round_trip(tmp_path):
    ds = gen_dataset("numex", "test-F10", 3)
    p = str(tmp_path / "d.csv")
    write_dataset(p, ds, {"config_hash": "x"})
    back = read_dataset(p)
    assert np.array_equal(back.Z, ds.Z) and np.array_equal(back.F, ds.F)
    assert np.array_equal(back.labels, ds.labels) and back.fault_id == "F10"
    assert back.meta["config_hash"] == "x" and back.additive


@pytest.mark.parametrize(
    "text",
    ["", "a,b,c\n1,2,3\n", "k,z_1,label,f_1,fault_id\n", "k,z_1,label,f_1,fault_id\n0,abc,0,0,F\n",
     "k,z_1,label,f_1,fault_id\n0,nan,0,0,F\n", "k,z_1,label,f_1,fault_id\n0,1,0\n"],
)
def test_corrupt_datasets(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError):
        read_dataset(str(p))


def test_write_into_missing_dir(tmp_path):
    with pytest.raises(ConfigError):
        write_dataset(str(tmp_path / "no" / "d.csv"), gen_dataset("numex", "test-F05", 0))
    assert not (tmp_path / "no").exists()
