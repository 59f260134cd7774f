"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The sweep-based criteria share session fixtures so the default and the
rank-deficient sweeps each run once (plus one rerun for determinism).
"""

import contextlib
import dataclasses
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qudrc.experiment import ExperimentConfig, build_problem, generate_quadratics, run_experiment
from qudrc.fqac import fqac_run
from qudrc.graph import random_strongly_connected_digraph
from qudrc.metrics import IDENTITY_TOL
from qudrc.netsim import NodeRngs
from qudrc.optimizer import (
    ExactAverageCoordinator,
    FqacCoordinator,
    NodeState,
    centralized_optimum,
    init_nodes,
    qudrc_aladin_step,
    rc_aladin_step,
    solve,
)
from qudrc.quantizer import QuantizationLevel, quantize

pytestmark = pytest.mark.slow


@contextlib.contextmanager
def criterion(number, title):
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield
        status = "PASS"
    finally:
        line = f"criterion {number} [{status}] {title} ({time.perf_counter() - start:.1f} s)"
        ACCEPTANCE_LINES.append(line)
        print(line)


def _timed_sweep(cfg, out):
    start = time.perf_counter()
    result = run_experiment(cfg, out_dir=out)
    return result, time.perf_counter() - start, out


@pytest.fixture(scope="session")
def default_sweep(tmp_path_factory):
    return _timed_sweep(ExperimentConfig(), tmp_path_factory.mktemp("default"))


@pytest.fixture(scope="session")
def rank_deficient_sweep(tmp_path_factory):
    cfg = ExperimentConfig(rank_deficiency=2, ridge=False)
    return _timed_sweep(cfg, tmp_path_factory.mktemp("rankdef"))


def _exact_floor_div(b: float, level: QuantizationLevel) -> int:
    bn, bd = float(b).as_integer_ratio()
    return (bn * level.denominator) // (bd * level.numerator)


def test_criterion_1_quantizer_laws():
    with criterion(1, "quantizer sandwich, monotonicity and lattice fixed points on 1e5 trials"):
        rng = np.random.default_rng(1)
        levels = [QuantizationLevel.parse(d) for d in ("1e-2", "1e-4", "1e-5", "1/3", "0.5")]
        trials = 100_000
        b = rng.standard_normal(trials) * 10.0 ** rng.integers(-6, 4, trials)
        which = rng.integers(0, len(levels), trials)
        lattice_k = rng.integers(-10**6, 10**6, 2000)
        lattice_pts = []
        for level in levels:
            pts = np.array([float(Fraction(int(v)) * level.delta) for v in lattice_k])
            on_lattice = np.array([(Fraction(p) / level.delta).denominator == 1 for p in pts])
            lattice_pts.append((pts[on_lattice], lattice_k[on_lattice]))
        start = time.perf_counter()
        ks = np.empty(trials, dtype=np.int64)
        for j, level in enumerate(levels):
            mask = which == j
            ks[mask] = quantize(b[mask], level)
        lattice_ok = True
        monotone_ok = True
        for j, level in enumerate(levels):
            mask = which == j
            order = np.argsort(b[mask], kind="stable")
            monotone_ok &= bool(np.all(np.diff(ks[mask][order]) >= 0))
            pts, k = lattice_pts[j]
            lattice_ok &= bool(np.all(quantize(pts, level) == k))
        elapsed = time.perf_counter() - start
        # exact sandwich: 0 <= b - delta*k < delta  <=>  k == floor(b / delta) in rationals
        expected = [_exact_floor_div(v, levels[w]) for v, w in zip(b, which)]
        assert ks.tolist() == expected
        assert monotone_ok
        assert lattice_ok
        assert sum(len(k) for _, k in lattice_pts) > 2000
        assert elapsed < 1.0, f"{elapsed:.2f} s"


def test_criterion_2_fqac_correctness():
    with criterion(2, "FQAC output within delta of the quantized mean on 200+ random digraphs"):
        rng = np.random.default_rng(7)
        start = time.perf_counter()
        runs = 0
        for trial in range(210):
            n_nodes = int(rng.integers(2, 21))
            dim = int(rng.integers(1, 21))
            delta = ("1e-2", "1e-4")[trial % 2]
            level = QuantizationLevel.parse(delta)
            g = random_strongly_connected_digraph(n_nodes, float(rng.uniform(0, 0.5)), seed=trial)
            y = rng.standard_normal((n_nodes, dim)) * rng.uniform(0.1, 10)
            q = np.array([[_exact_floor_div(v, level) for v in row] for row in y], dtype=object)
            q_sum = q.sum(axis=0)
            seen = {"violations": 0, "rounds": 0}

            def on_round(t, states, q_sum=q_sum, n_nodes=n_nodes, seen=seen):
                seen["rounds"] = t
                chi = np.sum([s.chi for s in states], axis=0)
                if chi.tolist() != [2 * v for v in q_sum] or sum(s.xi for s in states) != 2 * n_nodes:
                    seen["violations"] += 1

            cap = 100 * g.diameter * n_nodes
            res = fqac_run(y, g, level, NodeRngs(trial, n_nodes), max_rounds=cap,
                           on_round=on_round, check=False)
            assert seen["violations"] == 0, f"trial {trial}: conservation broken"
            assert res.rounds == seen["rounds"] <= cap
            true_mean = [sum(Fraction(float(v)) for v in col) / n_nodes for col in y.T]
            for i in range(n_nodes):
                for c in range(dim):
                    k = int(res.indices[i, c])
                    # |k delta - (delta/N) sum q| <= delta  <=>  |N k - sum q| <= N
                    assert abs(n_nodes * k - q_sum[c]) <= n_nodes, (trial, i, c)
                    assert abs(k * level.delta - true_mean[c]) <= 2 * level.delta, (trial, i, c)
            runs += 1
        elapsed = time.perf_counter() - start
        assert runs >= 200
        assert elapsed < 60.0, f"{elapsed:.1f} s"


def test_criterion_3_oracle_equivalence():
    with criterion(3, "exact-average iterates equal the centralized iteration to 1e-12"):
        start = time.perf_counter()
        worst = 0.0
        for inst in range(10):
            costs = generate_quadratics(10, 10, seed=100 + inst)
            dec = init_nodes(costs, seed=inst)
            cen = [nd.copy() for nd in dec]
            coord = ExactAverageCoordinator()
            for _ in range(100):
                dec, _, _ = qudrc_aladin_step(dec, 1.0, coord)
                cen = rc_aladin_step(cen, 1.0)
                for a, b in zip(dec, cen):
                    for attr in ("x", "z_hat", "lambda_hat"):
                        worst = max(worst, float(np.max(np.abs(getattr(a, attr) - getattr(b, attr)))))
        assert worst <= 1e-12, f"max deviation {worst:.3e}"
        assert time.perf_counter() - start < 30.0


def test_criterion_4_per_iteration_identities():
    with criterion(4, "per-iteration bounds at N=n=20, delta=1e-4, 200 iterations"):
        start = time.perf_counter()
        cfg = ExperimentConfig()
        graph, costs = build_problem(cfg)
        level = QuantizationLevel.parse("1e-4")
        delta, rho, n_nodes = float(level), 1.0, len(costs)
        coord = FqacCoordinator(graph, level, seed=cfg.seed)
        bad = []

        def on_step(k, s):
            z_bar = s.y.mean(axis=0)
            tiny = 1e-12 * (1 + np.max(np.abs(s.lambda_hat_plus)))
            lhs = (s.lambda_hat_plus - s.lambda_hat) / (2 * rho) + (s.z_hat_plus + s.z_hat) / 2
            res = np.max(np.abs(s.x_plus - lhs), axis=1)
            if np.any(res > IDENTITY_TOL * (1 + np.max(np.abs(s.x_plus), axis=1))):
                bad.append((k, "primal identity"))
            if np.max(np.abs(s.lambda_hat_plus.sum(axis=0))) > 2 * rho * n_nodes * delta + n_nodes * tiny:
                bad.append((k, "dual sum"))
            if np.max(np.abs(s.z_hat_plus - z_bar)) > 2 * delta + 1e-12 * (1 + np.max(np.abs(z_bar))):
                bad.append((k, "consensus"))
            lam_exact = rho * (s.x_plus - z_bar) - s.g
            if np.max(np.abs(s.lambda_hat_plus - lam_exact)) > 2 * rho * delta + tiny:
                bad.append((k, "dual gap"))

        record = solve(costs, coord, rho=rho, max_iter=200, stop_tol=0.0, seed=cfg.seed,
                       nodes=init_nodes(costs, cfg.seed), on_step=on_step)
        assert len(record) == 200
        assert not bad, bad[:5]
        assert record.all_checks_ok
        assert time.perf_counter() - start < 300.0


def _plateaus(result):
    return {row["run"]: row for row in result.summary}


def _check_sweep(result, elapsed, _out=None):
    assert result.ok, result.failures
    rows = _plateaus(result)
    runs = ["delta_0.001", "delta_0.0001", "delta_1e-05"]
    for r in runs:
        assert rows[r]["contraction_factor"] < 1.0, (r, rows[r]["contraction_factor"])
        assert rows[r]["plateau_lyapunov"] <= 4 * rows[r]["neighborhood_term"], r
        assert rows[r]["checks_ok"] == 1, r
    errs = [rows[r]["plateau_error"] for r in runs] + [rows["baseline_exact_average"]["plateau_error"]]
    assert errs[0] > errs[1] > errs[2] > errs[3], errs
    assert elapsed < 600.0, f"{elapsed:.0f} s"


def test_criterion_5_default_sweep(default_sweep):
    with criterion(5, "default sweep: contraction < 1, plateaus ordered by delta, Lyapunov within bound"):
        _check_sweep(*default_sweep)


def test_criterion_6_centralized_kkt():
    with criterion(6, "centralized step keeps sum of duals at zero and preserves the optimum"):
        costs = generate_quadratics(10, 10, seed=55)
        nodes = init_nodes(costs, seed=3)
        for _ in range(100):
            nodes = rc_aladin_step(nodes, 1.0)
            assert np.max(np.abs(sum(nd.lambda_hat for nd in nodes))) <= 1e-9
        z_star, lam_star = centralized_optimum(costs)
        n = len(z_star)
        nodes = [NodeState(x=z_star.copy(), z_hat=z_star.copy(), lambda_hat=lam.copy(),
                           g=np.zeros(n), cost=c) for c, lam in zip(costs, lam_star)]
        for _ in range(50):
            nodes = rc_aladin_step(nodes, 1.0)
            for nd, lam in zip(nodes, lam_star):
                assert np.max(np.abs(nd.z_hat - z_star)) <= 1e-9
                assert np.max(np.abs(nd.x - z_star)) <= 1e-9
                assert np.max(np.abs(nd.lambda_hat - lam)) <= 1e-9


def test_criterion_7_rank_deficient_sweep(rank_deficient_sweep):
    with criterion(7, "rank-deficient costs: contraction < 1 and delta-ordered plateaus"):
        result = rank_deficient_sweep[0]
        rec = result.records["baseline_exact_average"]
        assert rec.metadata["regime"] == "convex-smooth"
        _check_sweep(*rank_deficient_sweep)


def test_criterion_8_determinism(default_sweep, tmp_path):
    with criterion(8, "rerunning the default sweep gives byte-identical CSVs"):
        first_dir = default_sweep[2]
        run_experiment(ExperimentConfig(), out_dir=tmp_path)
        names = sorted(p.name for p in first_dir.iterdir())
        assert names == sorted(p.name for p in tmp_path.iterdir())
        for name in names:
            assert (first_dir / name).read_bytes() == (tmp_path / name).read_bytes(), name


def test_criterion_9_communication_ledger(default_sweep):
    with criterion(9, "fixed(32) integer traffic is at most half the 64-bit float equivalent"):
        result = default_sweep[0]
        for label, rec in result.records.items():
            if label.startswith("baseline"):
                continue
            for row in rec.rows:
                q, f = int(row["bits_quantized"]), int(row["bits_float_equivalent"])
                rounds = int(row["fqac_rounds"])
                assert rounds > 0 and q > 0
                per_round_node = rounds * int(rec.metadata["n_nodes"])
                assert 2 * Fraction(q, per_round_node) <= Fraction(f, per_round_node), (label, row["iteration"])
                assert q % 32 == 0 and f % 64 == 0
