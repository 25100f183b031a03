"""Headline guarantees for the whole package, one test per guarantee.

Run ``pytest -v tests/test_acceptance.py`` to get a pass/fail line per
guarantee.  Everything here uses the synthetic embedding world; the last
test additionally drives a live serving shim over HTTP when the shim
package is installed.
"""
import json
import math
import random
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import numpy as np
import pytest

from odd_audit.audit import (
    benchmark_recovery,
    benchmark_summary,
    estimate_coverage,
    subgroup_risk,
)
from odd_audit.backends.synthetic import SyntheticGenerator, SyntheticPosterior
from odd_audit.cli import main
from odd_audit.covering import generate_covering_array, verify_coverage
from odd_audit.odd import OperationalDesignDomain, SemanticDimension
from odd_audit.stats import (
    clopper_pearson,
    cumulative_fanova,
    fanova_decompose,
)

from oracles import clopper_pearson_oracle, fanova_oracle

ROOT = Path(__file__).resolve().parent.parent


def _random_odd(rng: random.Random) -> OperationalDesignDomain:
    n_dims = rng.randint(2, 6)
    dims = tuple(
        SemanticDimension(
            f"d{i}", tuple(f"d{i}v{j}" for j in range(rng.randint(2, 8)))
        )
        for i in range(n_dims)
    )
    return OperationalDesignDomain(
        dimensions=dims, source_class="alpha", target_classes=("beta",)
    )


def test_covering_arrays_complete_on_random_and_vehicle_domains(vehicle_odd):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    for case in range(50):
        odd = _random_odd(rng)
        strength = min(rng.choice((2, 3)), odd.n_dimensions)
        array = generate_covering_array(odd, strength, seed=case)
        check = verify_coverage(array, odd)
        assert check.complete, f"case {case}: missing {len(check.missing)} tuples"

    array = generate_covering_array(vehicle_odd, 3, seed=7)
    check = verify_coverage(array, vehicle_odd)
    assert check.complete
    assert 1170 <= len(array.rows) <= 2340
    assert len(array.rows) == 1213  # frozen for seed 7

    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(
        f"covering arrays: 50 random domains + 18720-subgroup domain complete, "
        f"{len(array.rows)} rows at strength 3, {elapsed:.1f}s"
    )


def test_poisoned_subgroups_recovered_at_rank_one(car_odd, car_template, bench_world):
    t0 = time.perf_counter()
    rows = benchmark_recovery(
        bench_world,
        car_odd,
        car_template,
        n_samples_sweep=(2, 16),
        n_injections=20,
        seed=5,
    )
    summary = benchmark_summary(rows)
    elapsed = time.perf_counter() - t0

    assert summary[16]["rank1"] >= 18
    assert summary[16]["median_rank"] == 1.0
    assert summary[2]["median_rank"] > summary[16]["median_rank"]
    # Frozen values; any drift means the seeded pipeline changed.
    assert summary[16]["rank1"] == 20
    assert summary[2]["median_rank"] == 11.5
    assert elapsed < 60.0
    print(
        f"recovery: rank 1 in {summary[16]['rank1']}/20 at 16 samples "
        f"(median {summary[16]['median_rank']:g}); median {summary[2]['median_rank']:g} "
        f"at 2 samples; {elapsed:.1f}s"
    )


def test_median_risk_survives_contamination_mean_does_not():
    rng = np.random.default_rng(42)
    n, n_bad = 16, 7
    for case in range(1000):
        if case % 2 == 0:
            # A clean subgroup scores flat: every sample gets the same loss.
            scores = [float(rng.uniform(0.0, 0.4))] * n
            bad = rng.choice(n, size=n_bad, replace=False)
        else:
            # Varying clean scores with the top tail contaminated.
            scores = sorted(float(x) for x in rng.uniform(0.0, 0.4, size=n))
            bad = range(n - n_bad, n)
        dirty = list(scores)
        replaced = []
        for i in bad:
            replaced.append(dirty[i])
            dirty[i] = 1.0

        assert subgroup_risk(dirty, "median") == subgroup_risk(scores, "median")
        shift = subgroup_risk(dirty, "mean") - subgroup_risk(scores, "mean")
        expected = (n_bad / n) * (1.0 - sum(replaced) / n_bad)
        assert shift == pytest.approx(expected, abs=1e-12)
    print("robustness: 1000 contamination cases, median exact, mean shifts 7/16*(1-s)")


def test_binomial_intervals_match_exact_oracle_and_cover():
    t0 = time.perf_counter()
    worst = 0.0
    cases = 0
    for n in (1, 10, 100, 400):
        for alpha in (0.05, 0.01):
            for k in range(n + 1):
                ci = clopper_pearson(k, n, alpha)
                lo, hi = clopper_pearson_oracle(k, n, alpha)
                worst = max(worst, abs(ci.lower - lo), abs(ci.upper - hi))
                cases += 1
    assert worst <= 1e-9

    # Coverage simulation at an awkward corner: tiny p, moderate n.
    p, n = 0.01, 400
    rng = np.random.default_rng(7)
    draws = rng.binomial(n, p, size=10_000)
    by_k = {}
    hits = 0
    for k in draws:
        if int(k) not in by_k:
            ci = clopper_pearson(int(k), n, 0.05)
            by_k[int(k)] = ci.lower <= p <= ci.upper
        hits += by_k[int(k)]
    coverage = hits / len(draws)
    assert coverage >= 0.94
    elapsed = time.perf_counter() - t0
    print(
        f"binomial intervals: {cases} endpoints within {worst:.1e} of the oracle; "
        f"simulated coverage {coverage:.4f}; {elapsed:.1f}s"
    )


def test_generator_subgroup_coverage_bounds(car_odd, car_coverage_template, coverage_world):
    t0 = time.perf_counter()
    gen = SyntheticGenerator(coverage_world, car_odd, template=car_coverage_template)
    post = SyntheticPosterior(coverage_world)
    result = estimate_coverage(
        car_odd,
        car_coverage_template,
        gen,
        post,
        samples_per_subgroup=400,
        seed=3,
    )
    elapsed = time.perf_counter() - t0

    assert len(result.entries) == 100
    assert result.n_total == 40_000
    assert abs(result.mean_fidelity - 0.89) < 0.01
    violations = sum(
        1 for e in result.entries if e.ci.lower <= 0.005 or e.fidelity < 0.85
    )
    assert violations <= 2
    assert elapsed < 120.0
    print(
        f"coverage: mean fidelity {result.mean_fidelity:.4f}, "
        f"min CP lower bound {min(e.ci.lower for e in result.entries):.6f}, "
        f"{violations}/100 subgroups out of bounds; {elapsed:.1f}s"
    )


def test_variance_decomposition_matches_marginalization_oracle():
    rng = np.random.default_rng(13)
    worst = 0.0
    for case in range(100):
        n_dims = int(rng.integers(1, 4))
        shape = tuple(int(rng.integers(2, 5)) for _ in range(n_dims))
        table = {
            z: float(rng.uniform(0, 1))
            for z in np.ndindex(shape)
        }
        decomp = fanova_decompose(table, shape)
        total_o, components_o, fractions_o = fanova_oracle(table, shape)

        worst = max(worst, abs(decomp.total_variance - total_o))
        for u in components_o:
            worst = max(worst, abs(decomp.components[u] - components_o[u]))
            worst = max(worst, abs(decomp.fractions[u] - fractions_o[u]))
        assert sum(decomp.fractions.values()) == pytest.approx(1.0, abs=1e-9)
        full = tuple(range(n_dims))
        assert cumulative_fanova(decomp, n_dims)[full] == pytest.approx(1.0, abs=1e-9)
    assert worst <= 1e-9

    # Purely additive tables carry no interaction variance.
    shape = (3, 4, 2)
    a, b, c = rng.normal(size=3), rng.normal(size=4), rng.normal(size=2)
    additive = {
        (i, j, k): float(a[i] + b[j] + c[k]) for (i, j, k) in np.ndindex(shape)
    }
    decomp = fanova_decompose(additive, shape)
    for u, v in decomp.components.items():
        if len(u) >= 2:
            assert abs(v) <= 1e-9, u
    print(
        f"variance decomposition: 100 random tables within {worst:.1e} of the "
        f"oracle; additive tables have zero interaction"
    )


def test_audit_reports_are_byte_identical_across_parallelism(tmp_path):
    t0 = time.perf_counter()
    cfg = str(ROOT / "configs" / "vehicle.toml")
    out1, out2 = tmp_path / "p1", tmp_path / "p4"
    assert main(["audit", "run", "-c", cfg, "-o", str(out1), "--parallelism", "1"]) == 0
    assert main(["audit", "run", "-c", cfg, "-o", str(out2), "--parallelism", "4"]) == 0
    a = (out1 / "report.json").read_bytes()
    b = (out2 / "report.json").read_bytes()
    assert a == b
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report = json.loads(a)
    print(
        f"determinism: {report['covering']['n_rows']}-row reports byte-identical "
        f"across worker counts; {elapsed:.1f}s for both runs"
    )


def test_readme_scopes_synthetic_substitution():
    text = (ROOT / "README.md").read_text(encoding="utf-8").lower()
    # The published audit findings for real generator/classifier stacks are
    # out of reach here; the README must say what stands in for them.
    assert "synthetic" in text
    assert "substitut" in text or "in place of" in text
    assert "real" in text
    print("scope: README states the synthetic world stands in for real-model results")


# ---------------------------------------------------------------------------
# live shim


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for_health(url: str, proc, timeout: float = 30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise RuntimeError(f"shim exited early with code {proc.returncode}")
        try:
            with urllib.request.urlopen(f"{url}/v1/health", timeout=2) as resp:
                if resp.status == 200:
                    return json.loads(resp.read())
        except OSError:
            time.sleep(0.2)
    raise TimeoutError(f"shim at {url} never became healthy")


def test_live_shim_passes_contract_and_smoke_audit(tmp_path, monkeypatch):
    pytest.importorskip("odd_audit_shim")
    from backend_contract import run_backend_contract
    from odd_audit.backends.remote import RemoteClassifier, RemoteGenerator

    port = _free_port()
    url = f"http://127.0.0.1:{port}"
    proc = subprocess.Popen(
        [sys.executable, "-m", "odd_audit_shim", "--host", "127.0.0.1", "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        health = _wait_for_health(url, proc)
        assert health["status"] == "ok"

        run_backend_contract(
            RemoteGenerator(url),
            RemoteClassifier(url),
            prompt="A red (car:1.5) in front of a forest.",
            classes=["car", "truck"],
            n_samples=4,
            resolution=64,
            steps=4,
        )

        monkeypatch.setenv("ODD_AUDIT_BACKEND_URL", url)
        out = tmp_path / "smoke"
        cfg = str(ROOT / "configs" / "smoke-remote.toml")
        assert main(["audit", "run", "-c", cfg, "-o", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["covering"]["n_rows"] == 10
        assert report["failures"] == []
        print(f"shim: contract suite green, 10-subgroup audit completed against {url}")
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
