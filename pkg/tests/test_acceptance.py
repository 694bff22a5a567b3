"""Acceptance suite: one PASS/FAIL line per criterion, printed in the pytest summary."""

import json
import math
import random
import statistics
import time
from fractions import Fraction

import pytest

from guiact.action import canonicalize, has_unquoted_whitespace, parse_unified, serialize_compact, validate
from guiact.adapters import FORMATS, RawPrediction, convert
from guiact.evaluator import aggregate, eval_grounding_bbox, eval_grounding_point, evaluate_step, iou_fraction
from guiact.grpo import GRPOConfig, TokenSequenceLogProbs, group_advantages, grpo_objective, token_kl
from guiact.reward import score
from guiact.rollout_sim import SimConfig, run
from helpers import corrupt_params, corrupt_type, random_action, random_gt
from test_rollout_sim import random_config

RESULTS = []


class Criterion:
    """Times a block and records its verdict for the summary."""

    def __init__(self, name, limit_s):
        self.name, self.limit = name, limit_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and (self.limit is None or elapsed < self.limit)
        if exc_type is not None:
            why = f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        elif not ok:
            why = f"too slow, limit {self.limit}s"
        else:
            why = ""
        line = f"{'PASS' if ok else 'FAIL'}  {self.name}  ({elapsed:.2f}s){'  ' + why if why else ''}"
        RESULTS.append(line)
        print(line)
        if exc_type is None and not ok:
            pytest.fail(line)
        return False


def test_golden_serialization(data_dir):
    with Criterion("golden serialization: reference actions round-trip byte-exactly", 1.0):
        lines = (data_dir / "golden_actions.txt").read_bytes().splitlines()
        assert len(lines) == 7
        for line in lines:
            assert serialize_compact(parse_unified(line)) == line


def test_compactness():
    with Criterion("compactness: 10,000 random actions", 10.0):
        rng = random.Random(100)
        for _ in range(10_000):
            a = random_action(rng)
            data = serialize_compact(a)
            assert not has_unquoted_whitespace(data)
            assert parse_unified(data) == canonicalize(a)


def test_adapter_fixtures(data_dir):
    with Criterion("adapter fixtures: exact conversion", 1.0):
        rows = [json.loads(x) for x in (data_dir / "adapter_fixtures.jsonl").read_text("utf-8").splitlines() if x]
        assert len(rows) >= 30
        assert all(sum(r["format"] == f for r in rows) >= 5 for f in FORMATS)
        for r in rows:
            raw = RawPrediction(r["text"], r["format"], tuple(r["screen"]) if r["screen"] else None,
                                r["low_instruction_mode"])
            out = convert(raw)
            if r["expected"] is None:
                assert out.dropped, r
            else:
                assert serialize_compact(out.action, evaluation=True).decode() == r["expected"], r


def test_metric_sanity():
    rng = random.Random(200)
    steps = [random_gt(rng, step=i) for i in range(1000)]
    with Criterion("metric sanity: self-test, parameter and type corruption", 1.0):
        rep = aggregate(evaluate_step(s.gt_action, s) for s in steps)
        assert rep.tm_rate == 1.0 and rep.em_rate == 1.0
        rep = aggregate(evaluate_step(corrupt_params(s), s) for s in steps)
        assert rep.tm_rate == 1.0 and rep.em_rate == 0.0
        rep = aggregate(evaluate_step(corrupt_type(s), s) for s in steps)
        assert rep.tm_rate == 0.0 and rep.em_rate == 0.0
    with Criterion("metric sanity: EM implies TM over 10,000 steps", None):
        for i in range(10_000):
            g = random_gt(rng, step=i)
            pred = g.gt_action if rng.random() < 0.3 else random_action(rng)
            e = evaluate_step(pred, g)
            assert e.type_match or not e.exact_match


def _mangle(rng, data):
    i = rng.randrange(len(data) + 1)
    junk = rng.choice([b"", b" ", b",", b"}", b'"', b"\xff", b"x"])
    return data[:i] + junk + data[i + rng.randint(0, 3):]


def test_reward_contract():
    with Criterion("reward contract: values, -1 iff invalid, 1 iff exact", 5.0):
        rng = random.Random(300)
        for i in range(5000):
            g = random_gt(rng, step=i)
            roll = rng.random()
            if roll < 0.3:
                out = serialize_compact(g.gt_action)
            elif roll < 0.7:
                out = serialize_compact(random_action(rng))
            else:
                out = _mangle(rng, serialize_compact(random_action(rng)))
            s = score(out, g)
            assert s.value in (-1, 0, 1)
            valid = validate(out).ok
            assert (s.value == -1) == (not valid)
            if valid:
                assert (s.value == 1) == evaluate_step(parse_unified(out), g).exact_match


def test_grpo_math():
    with Criterion("GRPO math: oracle, zero sum, zero variance, clip case", None):
        rng = random.Random(400)
        for _ in range(1000):
            n = rng.randint(2, 16)
            rewards = [rng.choice([-1, 0, 1]) if rng.random() < 0.5 else rng.uniform(-3, 3) for _ in range(n)]
            mu, sd = statistics.fmean(rewards), statistics.pstdev(rewards)
            want = [0.0] * n if sd == 0 else [(r - mu) / sd for r in rewards]
            got = group_advantages(rewards)
            assert max(abs(a - b) for a, b in zip(got, want)) <= 1e-9
            assert abs(math.fsum(got)) <= 1e-9
        assert group_advantages([0.5] * 8) == [0.0] * 8
        lp = TokenSequenceLogProbs([math.log(2.0)], [0.0], [math.log(2.0)])
        assert abs(grpo_objective([([lp], [1.0])], GRPOConfig(epsilon=0.2, beta=0.04)) - 1.2) <= 1e-12


def test_kl_estimator():
    with Criterion("KL estimator: non-negative, zero iff equal", 1.0):
        rng = random.Random(500)
        for _ in range(10_000):
            a = rng.uniform(-30, 0)
            b = a if rng.random() < 0.1 else (a + rng.uniform(-1e-6, 1e-6) if rng.random() < 0.2
                                              else rng.uniform(-30, 0))
            k = token_kl(a, b)
            assert k >= 0
            assert (k == 0) == (a == b)


def test_simulator():
    with Criterion("simulator: conservation and determinism on 100 configs", 60.0):
        rng = random.Random(600)
        for _ in range(100):
            cfg = random_config(rng)
            rep = run(cfg)
            assert rep.samples_completed == cfg.task_count * cfg.num_generations
            assert rep.groups_consumed == cfg.task_count
            assert run(cfg).to_dict() == rep.to_dict()
    with Criterion("simulator: stealing on a 2-node heterogeneous cluster", None):
        cfg = SimConfig()
        assert cfg.nodes == 2 and cfg.latency_model[0] != cfg.latency_model[1]
        on = run(cfg)
        off = run(SimConfig(steal_trigger=None))
        assert on.steal_count > 0
        assert on.total_virtual_time <= off.total_virtual_time


def test_grounding():
    with Criterion("grounding: IoU 0.5 boundary, inclusive corners", 1.0):
        assert iou_fraction((0, 0, 100, 100), (0, 0, 100, 50)) == Fraction(1, 2)
        assert eval_grounding_bbox((0, 0, 100, 100), (0, 0, 100, 50))
        assert not eval_grounding_bbox((0, 0, 100, 100), (0, 0, 100, 49))
        box = (643, 462, 849, 744)
        for corner in [(643, 462), (849, 462), (643, 744), (849, 744)]:
            assert eval_grounding_point(corner, box)
        assert not eval_grounding_point((642, 462), box)


def test_benchmark_numbers_out_of_scope():
    line = "SKIP  benchmark TM/EM tables and RFT reward curves (need model inference and training)"
    RESULTS.append(line)
    print(line)
    pytest.skip("requires model inference and RL training")
