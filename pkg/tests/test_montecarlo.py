import math

import pytest
from hypothesis import given, settings, strategies as st

from injqkd.montecarlo import (
    BLOCK_SIZE,
    InsufficientStatistics,
    TallyCounts,
    TrialConfig,
    empirical_key_rate,
    run_protocol,
    simulate_block,
)
from injqkd.security import (
    ChannelParams,
    Decoy,
    GainError,
    NoDecoy,
    ProtocolConfig,
    channel_model,
    key_rate_from_gains,
    model_gains,
    secret_key_rate,
)


def test_zero_pulses():
    t = run_protocol(TrialConfig(0))
    assert t.n_pulses == 0 and t.q_z == 0.0 and t.e_z == 0.0
    assert math.isinf(t.gain_stderr("z"))
    with pytest.raises(InsufficientStatistics):
        empirical_key_rate(t, TrialConfig(0))
    assert t.to_json()["stderr"]["q_z"] is None


def test_config_validation():
    with pytest.raises(ValueError):
        TrialConfig(-1)
    with pytest.raises(ValueError):
        TrialConfig(10, source=Decoy())


def test_ideal_channel():
    ch = ChannelParams(p_dc=0.0, eta_det=1.0, e_d=0.0)
    src = NoDecoy(mu=0.3, nu=0.3)
    t = run_protocol(TrialConfig(400_000, seed=3, source=src, channel=ch))
    assert t.errors == {"z": 0, "x": 0}
    q = 1 - math.exp(-0.3)
    assert abs(t.q_z - q) < 4 * math.sqrt(q * (1 - q) / t.matched["z"])


@pytest.mark.parametrize("L", [0.0, 10.0, 20.0, 30.0])
def test_converges_to_analytic_gains(L):
    cfg = TrialConfig(2_000_000, seed=7, channel=ChannelParams(distance=L))
    t = run_protocol(cfg, workers=4)
    for basis, mu in (("z", cfg.source.mu), ("x", cfg.source.nu)):
        g = channel_model(mu, cfg.channel)
        sq = math.sqrt(g.q * (1 - g.q) / t.matched[basis])
        se = math.sqrt(g.e * (1 - g.e) / t.sifted[basis])
        assert abs(t.gain(basis) - g.q) < 4 * sq
        assert abs(t.error_rate(basis) - g.e) < 4 * se


def test_identical_across_worker_counts():
    cfg = TrialConfig(3 * BLOCK_SIZE + 17, seed=11)
    ref = run_protocol(cfg, workers=1)
    for w in (2, 3, 8):
        assert run_protocol(cfg, workers=w) == ref
    # blocks are independent of the total length
    longer = TrialConfig(5 * BLOCK_SIZE, seed=11)
    assert simulate_block(longer, 1) == simulate_block(cfg, 1)


def test_seeds_differ():
    a = run_protocol(TrialConfig(BLOCK_SIZE, seed=1))
    b = run_protocol(TrialConfig(BLOCK_SIZE, seed=2))
    assert a != b


def test_symbol_and_sifting_fractions():
    p = ProtocolConfig(0.7, 0.6)
    n = 1_000_000
    t = run_protocol(TrialConfig(n, seed=5, protocol=p))
    assert t.n_pulses == n

    def close(count, prob):
        return abs(count / n - prob) < 4 * math.sqrt(prob * (1 - prob) / n)

    assert close(t.sent["z0"], 0.35) and close(t.sent["z1"], 0.35) and close(t.sent["x0"], 0.3)
    assert close(t.matched["z"], 0.42) and close(t.matched["x"], 0.12)


def test_tally_addition():
    a = simulate_block(TrialConfig(2 * BLOCK_SIZE, seed=4), 0)
    b = simulate_block(TrialConfig(2 * BLOCK_SIZE, seed=4), 1)
    s = a + b
    assert s == run_protocol(TrialConfig(2 * BLOCK_SIZE, seed=4))
    assert s.sent["z0"] == a.sent["z0"] + b.sent["z0"]


def _tally_from_gains(L: float, matched: int = 10**13) -> TallyCounts:
    """Integer counts whose ratios reproduce the model gains to about 1e-9."""
    ch = ChannelParams(distance=L)
    g = model_gains(NoDecoy(), ch)
    t = TallyCounts()
    t.matched = {"z": matched, "x": matched}
    t.sifted = {k: round(g[k].q * matched) for k in "zx"}
    t.errors = {k: round(g[k].e * t.sifted[k]) for k in "zx"}
    return t


def test_empirical_rate_uses_key_rate_from_gains():
    t = _tally_from_gains(15.0)
    cfg = TrialConfig(1, channel=ChannelParams(distance=15.0))
    got = empirical_key_rate(t, cfg)
    want = key_rate_from_gains(
        NoDecoy(), {"z": GainError(t.q_z, t.e_z), "x": GainError(t.q_x, t.e_x)},
        ProtocolConfig(), 15.0)
    assert got.rate_per_pulse == want.rate_per_pulse
    analytic = secret_key_rate(NoDecoy(), ChannelParams(distance=15.0), ProtocolConfig())
    assert got.rate_per_pulse == pytest.approx(analytic.rate_per_pulse, rel=1e-5)


def test_all_errors_gives_no_key():
    t = TallyCounts()
    t.matched = {"z": 1000, "x": 1000}
    t.sifted = {"z": 10, "x": 10}
    t.errors = {"z": 10, "x": 10}
    p = empirical_key_rate(t, TrialConfig(1))
    assert p.rate_per_pulse == 0.0 and p.flagged


def test_only_x_detections_is_insufficient():
    t = TallyCounts()
    t.matched = {"z": 10, "x": 10}
    t.sifted = {"z": 0, "x": 3}
    with pytest.raises(InsufficientStatistics):
        empirical_key_rate(t, TrialConfig(1))


def test_tally_json_roundtrip_fields():
    d = run_protocol(TrialConfig(1000, seed=9)).to_json(seed=9)
    assert d["seed"] == 9 and d["n_pulses"] == 1000
    assert set(d["stderr"]) == {"q_z", "e_z", "q_x", "e_x"}


@settings(max_examples=15)
@given(st.integers(0, 3 * BLOCK_SIZE), st.integers(0, 2**63))
def test_counts_consistent(n, seed):
    t = run_protocol(TrialConfig(n, seed=seed, channel=ChannelParams(distance=0.0, p_dc=0.01)))
    assert t.n_pulses == n
    for k in "zx":
        assert 0 <= t.errors[k] <= t.sifted[k] <= t.matched[k]
    assert t.matched["z"] + t.matched["x"] <= n


@pytest.mark.slow
def test_twenty_km_key_rate_within_ten_percent():
    # seed fixed in advance (the command-line default); seed-to-seed spread at
    # this sample size is about 9%, so a minority of seeds fall outside 10%
    cfg = TrialConfig(10_000_000, seed=42, channel=ChannelParams(distance=20.0))
    got = empirical_key_rate(run_protocol(cfg, workers=4), cfg)
    want = secret_key_rate(NoDecoy(), cfg.channel, cfg.protocol)
    assert got.rate_per_pulse == pytest.approx(want.rate_per_pulse, rel=0.10)
