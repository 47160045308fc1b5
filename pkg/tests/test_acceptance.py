"""Acceptance suite: ten criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when pytest captures output.
"""

import json
import math
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import law_of_cosines_m, random_point, random_records
from handoff_sim.config import default_scenario
from handoff_sim.geo import EARTH_RADIUS_M, GeoPoint, haversine_distance, haversine_m
from handoff_sim.power import PowerProfile, RadioState, time_to_depletion
from handoff_sim.registry import Registry
from handoff_sim.sharing import SharingClient, client_upload, serve
from handoff_sim.sim import ALL_SCHEMES, SWITCHING_SCHEMES, SchemeKind, compare, overhead_bound, run
from handoff_sim.traffic import STANDARD_THRESHOLDS, RateSample, Threshold, should_switch

B4 = Threshold.standard("B4")


@pytest.fixture
def verdict(capsys):
    """Print one verdict line, then fail the test if the criterion failed."""

    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} ({detail})")
        assert ok, f"criterion {number} failed: {detail}"

    return emit


def conserved(report) -> bool:
    return math.fsum(report.ledger.buckets().values()) == report.total_j


def test_criterion_01_haversine_fidelity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    pairs = 0
    while pairs < 10_000:
        a, b = random_point(rng, (-90, 90)), random_point(rng, (-90, 90))
        oracle = law_of_cosines_m(a, b)
        # near-antipodal and near-coincident pairs are ill-conditioned for the oracle
        if oracle > 0.99 * math.pi * EARTH_RADIUS_M or oracle < 1000.0:
            continue
        worst = max(worst, abs(haversine_distance(a, b).meters - oracle) / oracle)
        pairs += 1
    examples = [
        (GeoPoint.from_degrees(38.88, 121.53), GeoPoint.from_degrees(38.88, 121.53), 0.0),
        (GeoPoint(0.0, 0.0), GeoPoint(0.0, 0.001), 6378.137),
        (GeoPoint.from_degrees(0, 0), GeoPoint.from_degrees(0, 180), 2.0037508e7),
    ]
    examples_ok = all(
        haversine_m(a, b) == pytest.approx(expect, rel=1e-6, abs=0.0 if expect else 1e-9)
        for a, b, expect in examples
    )
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and examples_ok and elapsed < 1.0
    verdict(1, "haversine matches law-of-cosines oracle", ok,
            f"{pairs} pairs, worst rel err {worst:.2e}, examples {'ok' if examples_ok else 'off'}, {elapsed:.2f}s")


def test_criterion_02_nearest_ap_oracle(verdict):
    rng = np.random.default_rng(7)
    mismatches = 0
    queries = 0
    index_s = 0.0
    t0 = time.perf_counter()
    for trial in range(100):
        if trial % 2:
            lat0, lon0 = rng.uniform(-70, 70), rng.uniform(-180, 180)
            box = ((lat0 - 0.2, lat0 + 0.2), (lon0 - 0.2, lon0 + 0.2))
            recs = random_records(rng, 1000, *box, range_m=(30, 400))
        else:
            box = ((-85.0, 85.0), (-180.0, 180.0))
            recs = random_records(rng, 1000, *box, range_m=(1e4, 5e5))
        reg = Registry(recs)
        for _ in range(10):
            p = random_point(rng, *box)
            dists = [(haversine_m(p, r.location), r.bssid, r) for r in recs]
            best = min(dists, key=lambda h: h[:2])
            covering = [h for h in dists if h[0] <= h[2].range_m]
            want_in = min(covering, key=lambda h: h[:2])[2] if covering else None
            s = time.perf_counter()
            got, d = reg.nearest(p)
            got_in = reg.in_range(p)
            index_s += time.perf_counter() - s
            queries += 1
            if (got.bssid, d) != (best[1], best[0]) or got_in != want_in:
                mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10.0
    verdict(2, "grid nearest_ap / in_range equal brute force", ok,
            f"100 registries x 1000 APs, {queries} queries, {mismatches} mismatches, "
            f"index {index_s:.2f}s, total {elapsed:.2f}s")


def test_criterion_03_energy_arithmetic(verdict):
    profile = PowerProfile(gprs_active_w=0.9, gprs_idle_w=0.05, agps_fix_w=0.2)
    closed_form = time_to_depletion(profile, RadioState.WIFI_IDLE, 19980.0)
    campus = default_scenario()
    idle = run(replace(campus, user="idle", run_to_depletion=True, duration_s=None), SchemeKind.WIFI_NON_SWITCHING)
    simulated_ok = idle.depletion_time_s == 78046.875 and idle.total_j == 19980.0

    reports = [idle]
    grid = compare(campus)
    reports += grid.reports
    for scheme in ALL_SCHEMES:
        reports.append(run(replace(campus, user="U3", run_to_depletion=True, duration_s=None), scheme))
    broken = sum(not conserved(r) for r in reports)
    ok = closed_form == 78046.875 and simulated_ok and broken == 0 and not grid.errors
    verdict(3, "Wi-Fi idle depletion 78046.875 s; ledger conservation", ok,
            f"closed form {closed_form!r} s, simulated {idle.depletion_time_s!r} s, "
            f"{len(reports) - broken}/{len(reports)} runs conserve exactly")


def test_criterion_04_agps_single_scan(verdict):
    t0 = time.perf_counter()
    sc = replace(default_scenario(), agps_accuracy_m=0.0, user="U4", threshold=B4)
    r = run(sc, SchemeKind.AGPS_SWITCHING)
    elapsed = time.perf_counter() - t0
    per_episode = [e.scans for e in r.episodes]
    ok = (r.switch_episodes >= 1 and all(n == 1 for n in per_episode)
          and r.unnecessary_scan_count == 0 and conserved(r) and elapsed < 1.0)
    verdict(4, "A-GPS with exact fix scans once per episode", ok,
            f"episodes {r.switch_episodes}, scans/episode {per_episode}, "
            f"unnecessary {r.unnecessary_scan_count}, {elapsed:.3f}s")


def test_criterion_05_scheme_ordering(verdict):
    t0 = time.perf_counter()
    campus = replace(default_scenario(), threshold=B4)
    means: dict[tuple[str, SchemeKind], float] = {}
    broken = 0
    for user in ("U3", "U4"):
        schemes = SWITCHING_SCHEMES + ((SchemeKind.WIFI_NON_SWITCHING,) if user == "U4" else ())
        for scheme in schemes:
            totals = []
            for seed in range(100):
                r = run(replace(campus, user=user, seed=seed), scheme)
                broken += not conserved(r)
                totals.append(r.total_j)
            means[user, scheme] = sum(totals) / len(totals)
    elapsed = time.perf_counter() - t0
    a, g, s = SWITCHING_SCHEMES
    order = {u: means[u, a] < means[u, g] < means[u, s] for u in ("U3", "U4")}
    wifi_ok = means["U4", SchemeKind.WIFI_NON_SWITCHING] < means["U4", a]
    ok = all(order.values()) and wifi_ok and broken == 0 and elapsed < 60.0
    fmt = lambda u: "/".join(f"{means[u, k]:.1f}" for k in SWITCHING_SCHEMES)  # noqa: E731
    verdict(5, "mean energy A-GPS < GSM < Scanning (U3, U4); Wi-Fi only < A-GPS (U4)", ok,
            f"U3 {fmt('U3')} J, U4 {fmt('U4')} J, U4 Wi-Fi only "
            f"{means['U4', SchemeKind.WIFI_NON_SWITCHING]:.1f} J, {elapsed:.1f}s")


def test_criterion_06_u1_closeness(verdict):
    t0 = time.perf_counter()
    campus = replace(default_scenario(), user="U1")
    worst_margin = math.inf
    cells = 0
    for seed in range(10):
        for name in STANDARD_THRESHOLDS:
            sc = replace(campus, seed=seed, threshold=Threshold.standard(name))
            gprs = run(sc, SchemeKind.GPRS_NON_SWITCHING)
            for scheme in SWITCHING_SCHEMES:
                r = run(sc, scheme)
                worst_margin = min(worst_margin, overhead_bound(r) - abs(r.total_j - gprs.total_j))
                cells += 1
    elapsed = time.perf_counter() - t0
    ok = worst_margin >= 0.0 and elapsed < 10.0
    verdict(6, "U1 switching schemes within fix + monitor overhead of GPRS only", ok,
            f"{cells} comparisons, smallest slack {worst_margin:.4f} J, {elapsed:.2f}s")


def test_criterion_07_ratio_trend(verdict):
    t0 = time.perf_counter()
    grid = compare(default_scenario(), schemes=(SchemeKind.WIFI_NON_SWITCHING, SchemeKind.GPRS_NON_SWITCHING))
    ratios = [grid.ratio(u) for u in ("U1", "U2", "U3", "U4")]
    elapsed = time.perf_counter() - t0
    ok = (None not in ratios and ratios[0] < 1 < ratios[1] < ratios[2] < ratios[3] and elapsed < 60.0)
    verdict(7, "efficiency ratio U1 < 1 < U2 < U3 < U4", ok,
            "ratios " + ", ".join(f"{r:.3f}" for r in ratios) + f", {elapsed:.2f}s")


def test_criterion_08_threshold_boundary(verdict):
    results = {name: should_switch(RateSample(30.0, b), Threshold(b, name))
               for name, b in STANDARD_THRESHOLDS.items()}
    verdict(8, "rate equal to threshold triggers a switch", all(results.values()),
            ", ".join(f"{k}={v}" for k, v in results.items()))


def test_criterion_09_sharing_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    recs = random_records(rng, 1000, (20, 60), (-10, 40))
    local = Registry(recs)
    svc = serve("127.0.0.1:0")
    mismatches = 0
    schema_ok = True
    try:
        ack = client_upload(svc.address, recs)
        with SharingClient(svc.address) as client:
            for _ in range(100):
                p = random_point(rng, (18, 62), (-12, 42))
                [(rec, d)] = client.nearest(p, 1)
                want, wd = local.nearest(p)
                mismatches += (rec != want or d != wd)
            reply = client.request({"op": "nearest", "lat_deg": 40.0, "lon_deg": 15.0, "max_results": 3})
            schema_ok = (set(reply) == {"results"} and len(reply["results"]) == 3 and all(
                set(h) == {"t", "bssid", "ssid", "lat_deg", "lon_deg", "range_m", "auth", "distance_m"}
                for h in reply["results"]))
            upload_reply = client.request({"op": "upload", "entries": []})
            schema_ok = schema_ok and upload_reply == {"ok": 0, "rejected": []}
    finally:
        svc.shutdown()
    elapsed = time.perf_counter() - t0
    ok = ack.ok == 1000 and mismatches == 0 and schema_ok and elapsed < 10.0
    verdict(9, "remote nearest equals local nearest_ap; wire schema exact", ok,
            f"100 queries over {ack.ok} APs, {mismatches} mismatches, "
            f"schema {'ok' if schema_ok else 'off'}, {elapsed:.2f}s")


def test_criterion_10_determinism_and_grid_runtime(verdict, tmp_path):
    env = {k: v for k, v in os.environ.items() if k != "HANDOFF_SIM_SEED"}
    cmd = [sys.executable, "-m", "handoff_sim"]
    outputs = [subprocess.run(cmd + ["run", "--seed", "7", "--user", user, "--scheme", scheme],
                              capture_output=True, env=env, check=True).stdout
               for user, scheme in (("U4", "gsm-switching"), ("U2", "scanning-switching"))
               for _ in range(2)]
    identical = outputs[0] == outputs[1] and outputs[2] == outputs[3]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd + ["grid", "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    grid_s = time.perf_counter() - t0
    cells = len(json.loads((tmp_path / "grid.json").read_text())["cells"]) if proc.returncode == 0 else 0
    ok = identical and proc.returncode == 0 and cells == 80 and grid_s < 300.0
    verdict(10, "repeated runs byte-identical; 80-cell grid under 5 minutes", ok,
            f"identical={identical}, grid cells {cells}, grid {grid_s:.1f}s")
