"""Synthetic traffic builders, scenario schema and the built-in catalogue."""

import json

import pytest

from eeesim.errors import ConfigError
from eeesim.scenarios import (
    Scenario,
    builtin_scenarios,
    build_sim_config,
    build_stream,
    combined_csv,
    gen_bursty,
    gen_frames,
    load_scenario,
    mininet_scenario,
    qos_sweep_scenario,
    run_sweep,
)


def test_gen_frames_low_rate_is_plain_cbr():
    pkts = list(gen_frames(1_000_000, 125, 46, 10_000_000, 10_000_000_000))
    gaps = {b.arrival_time - a.arrival_time for a, b in zip(pkts, pkts[1:])}
    assert gaps == {1_000_000}  # one packet per millisecond


def test_gen_frames_high_rate_bundles_line_rate_trains():
    pkts = list(gen_frames(1_000_000_000, 125, 46, 100_000, 10_000_000_000))
    # 1 Gb/s of 125 B packets: trains of ten, 100 ns apart, every 10 us
    assert [p.arrival_time for p in pkts[:12]] == [
        0, 100, 200, 300, 400, 500, 600, 700, 800, 900, 10_000, 10_100
    ]
    total_bits = sum(p.size * 8 for p in pkts)
    assert total_bits == 1_000_000_000 * 100_000 // 10**9  # exact mean rate


def test_gen_frames_rejects_line_rate_below_mean():
    with pytest.raises(ConfigError):
        gen_frames(2_000_000_000, 125, 46, 1000, 1_000_000_000)


def test_gen_bursty_exact_budget_per_window():
    window = 1_000_000
    pkts = list(gen_bursty(100, 1500, 0, window, 7, 10_000_000_000, 4 * window))
    counts = {}
    for p in pkts:
        counts[p.arrival_time // window] = counts.get(p.arrival_time // window, 0) + 1
    assert counts == {0: 100, 1: 100, 2: 100, 3: 100}
    times = [p.arrival_time for p in pkts]
    assert times == sorted(times)


def test_gen_bursty_jitter_is_deterministic():
    args = (50, 1500, 0, 1_000_000, 5, 10_000_000_000, 2_000_000)
    assert list(gen_bursty(*args)) == list(gen_bursty(*args))
    shifted = list(gen_bursty(*args, flow="other"))
    assert [p.arrival_time for p in shifted] != [
        p.arrival_time for p in gen_bursty(*args)
    ]


def test_gen_bursty_rejects_overfull_slot():
    with pytest.raises(ConfigError):
        gen_bursty(10_000, 1500, 0, 1_000_000, 1, 10_000_000_000, 1_000_000)


def test_builtin_catalogue_and_aliases():
    catalogue = builtin_scenarios()
    for name in ("baseline-delay", "qos-sweep", "ordering", "testbed",
                 "fig2", "fig3", "fig4", "fig5", "mininet"):
        assert name in catalogue
        catalogue[name].validate()
    assert catalogue["fig3"].sources == catalogue["qos-sweep"].sources
    assert catalogue["mininet"].sources == catalogue["testbed"].sources


def test_qos_sweep_shape():
    scenario = qos_sweep_scenario()
    points = scenario.sweep_points()
    assert len(scenario.algorithms) * len(points) == 12
    assert [p["ll_rate_bps"] for p in points] == [
        1_000_000, 10_000_000, 100_000_000, 1_000_000_000
    ]


def test_scenario_json_round_trip():
    scenario = mininet_scenario()
    doc = json.loads(json.dumps(scenario.to_json_dict()))
    again = Scenario.from_dict(doc)
    assert again.to_json_dict() == scenario.to_json_dict()


def test_scenario_rejects_unknown_fields():
    doc = mininet_scenario().to_json_dict()
    doc["surprise"] = 1
    with pytest.raises(ConfigError):
        Scenario.from_dict(doc)
    doc = mininet_scenario().to_json_dict()
    doc["sim"]["surprise"] = 1
    with pytest.raises(ConfigError):
        Scenario.from_dict(doc)


def test_scenario_rejects_unknown_source_kind():
    doc = mininet_scenario().to_json_dict()
    doc["sources"][0]["kind"] = "magic"
    with pytest.raises(ConfigError):
        Scenario.from_dict(doc)


def test_load_scenario_rejects_missing_ref(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(str(tmp_path / "nope.json"))


def test_empty_ll_dscp_set_is_respected():
    scenario = qos_sweep_scenario()
    scenario.sim["ll_dscps"] = []
    config = build_sim_config(scenario, "two_queues")
    assert config.ll_dscps == frozenset()


def test_run_sweep_row_order_is_sweep_order(monkeypatch):
    monkeypatch.setenv("EEESIM_THREADS", "1")
    scenario = Scenario(
        name="mini",
        sim={"n_ports": 2, "capacity_bps": 1_000_000_000,
             "sampling_period_ns": 2_000_000, "warmup_ns": 2_000_000,
             "duration_ns": 8_000_000},
        sources=[{"kind": "cbr", "flow": "bulk", "size": 1500, "dscp": 0,
                  "rate_bps": 40_000_000}],
        ll_source={"kind": "frames", "flow": "rt", "size": 125, "dscp": 46,
                   "line_rate_bps": 1_000_000_000},
        algorithms=["conservative", "spare_port"],
        ll_rates_bps=[1_000_000, 2_000_000],
    )
    jobs, reports = run_sweep(scenario)
    assert [(alg, p["ll_rate_bps"]) for alg, p in jobs] == [
        ("conservative", 1_000_000), ("conservative", 2_000_000),
        ("spare_port", 1_000_000), ("spare_port", 2_000_000),
    ]
    csv_text = combined_csv(jobs, reports)
    assert len(csv_text.splitlines()) == 5
    cfg = build_sim_config(scenario, "conservative")
    assert cfg.bundle.n_ports == 2
    stream = list(build_stream(scenario, jobs[0][1]))
    assert stream and all(
        a.arrival_time <= b.arrival_time for a, b in zip(stream, stream[1:])
    )
