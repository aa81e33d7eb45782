"""Acceptance checks, one test per criterion.

Each test records PASS/FAIL with a short detail in ``conftest.ACCEPTANCE``;
the summary is printed at the end of the pytest run. The learning and
efficiency checks run at desk scale and take several minutes.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from retarget import agent, kernels, neural
from retarget.bdw import bdw, directional_warp_cost
from retarget.cli import main
from retarget.imagecore import save_image
from retarget.multiop import dp_transition_count, exhaustive_search, multiop_search
from retarget.operators import ACTIONS, StepSchedule, rollout
from retarget.synthetic import make_corpus
from conftest import ACCEPTANCE, TINY_NET, random_image
from oracles import brute_seam, brute_warp, luma

ARTIFACTS = Path(__file__).resolve().parents[1] / "artifacts"


@pytest.fixture
def record(request):
    n = int(request.node.name.split("_")[2])
    ACCEPTANCE[n] = (False, "did not complete")

    def _record(ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok

    return _record


def test_criterion_1_seam_oracle(record):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    bad = 0
    for k in range(200):
        h, w = rng.integers(1, 9, size=2)
        # every fourth image is quantised so that ties actually occur
        lum = rng.random((h, w)) if k % 4 else rng.integers(0, 3, (h, w)) / 2.0
        seam, _ = brute_seam(lum)
        bad += not np.array_equal(kernels.find_seam(lum), seam)
    dt = time.perf_counter() - t0
    assert record(bad == 0 and dt < 10, f"{bad} mismatches on 200 images, {dt:.2f}s")


def test_criterion_2_bdw_oracle(record):
    rng = np.random.default_rng(202)
    worst, sym, ident = 0.0, 0, 0
    for _ in range(100):
        h = int(rng.integers(1, 4))
        a = random_image(rng, int(rng.integers(1, 6)), h)
        b = random_image(rng, int(rng.integers(1, 6)), h)
        for s, t in ((a, b), (b, a)):
            worst = max(worst, abs(directional_warp_cost(s, t) - brute_warp(luma(s), luma(t))))
        sym += bdw(a, b) != bdw(b, a)
        ident += bdw(a, a) != 0
    ok = worst <= 1e-9 and sym == 0 and ident == 0
    assert record(ok, f"max |DP - enumeration| = {worst:.2e}, symmetry failures {sym}, "
                      f"bdw(I,I) != 0 in {ident}")


def test_criterion_3_multiop_bound(record):
    rng = np.random.default_rng(303)
    sched = StepSchedule(12)
    below, above_single, equal = 0, 0, 0
    for k in range(50):
        img = random_image(rng, 12, 6)
        i_max = k % 3 + 1
        rep = multiop_search(img, i_max, sched)
        ex = exhaustive_search(img, i_max, sched)
        below += rep.best_score < ex.best_score
        equal += rep.best_score == ex.best_score
        single = min(bdw(img, rollout(img, [a] * i_max, sched)) for a in ACTIONS)
        above_single += rep.best_score > single
    ok = below == 0 and above_single == 0
    assert record(ok, f"DP below exhaustive {below}/50, above single-operator {above_single}/50, "
                      f"DP equals exhaustive on {equal}/50")


def test_criterion_4_gradient_check(record):
    rng = np.random.default_rng(404)
    net = neural.PolicyValueNet(TINY_NET, seed=4, dtype=np.float64)
    t, n = 3, 20
    pix = rng.random((t, n, 40, 40, 6))
    u = (rng.random((t, n, 20)) > 0.5).astype(float)
    acts = rng.integers(0, 4, (t, n))
    ret = rng.choice([-1.0, 1.0], (t, n)) * rng.uniform(0.8, 1.0, (t, n))
    w = rng.uniform(0.1, 1.0, (t, n))
    _, grads = net.loss_and_grads(pix, u, acts, ret, w, 0.01)
    adv = net.advantage(pix, u, ret)
    eps, worst, count = 1e-5, 0.0, 0
    for name, p in net.params.items():
        flat, g = p.reshape(-1), grads[name].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = net.loss(pix, u, acts, ret, w, 0.01, advantage=adv)
            flat[i] = old - eps
            down = net.loss(pix, u, acts, ret, w, 0.01, advantage=adv)
            flat[i] = old
            num = (up - down) / (2 * eps)
            rel = abs(g[i] - num) / max(abs(g[i]) + abs(num), 1e-7)
            worst = max(worst, rel)
            count += 1
    assert record(worst < 1e-3, f"max relative error {worst:.2e} over {count} parameters")


def test_criterion_5_discount_and_weights(record):
    worst = 0.0
    for i_max in range(1, 21):
        for r in (1.0, -1.0):
            got = agent.discounted(r, i_max, 0.99)
            want = np.array([0.99 ** (i_max - i) * r for i in range(i_max)])
            worst = max(worst, np.abs(got - want).max())
    rng = np.random.default_rng(505)
    bad = 0
    for _ in range(1000):
        traces = []
        for _ in range(int(rng.integers(1, 17))):
            acts = rng.integers(0, 4, int(rng.integers(1, 21)))
            traces.append(agent.EpisodeTrace(
                i_max=acts.size, actions=acts, opponent_actions=np.array([]), pixels=None,
                u=None, final_image=None, final_reward=float(rng.choice([1.0, -1.0]))))
        weights = agent.compute_weights(traces)
        for outcome in (1.0, -1.0):
            ws = [w for w, tr in zip(weights, traces) if tr.final_reward == outcome]
            if ws:
                flat = np.concatenate(ws)
                bad += not (np.all((flat > 0) & (flat <= 1)) and np.any(flat == 1))
    ok = worst <= 1e-12 and bad == 0
    assert record(ok, f"max discount error {worst:.1e}, weight violations {bad} in 1000 draws")


def _learning_run(images, freq_weight):
    cfg = agent.TrainConfig(episodes=3000, batch=16, seed=0, freq_weight=freq_weight)
    t0 = time.perf_counter()
    _, _, records = agent.train(cfg, images, eval_images=images, eval_every=100)
    evals = [r for r in records if r.get("kind") == "eval"]
    return evals, time.perf_counter() - t0


def _max_share(hist):
    return max(hist) / sum(hist) if sum(hist) else 1.0


@pytest.mark.slow
def test_criterion_6_desk_learning(record):
    images, _ = make_corpus(64, seed=0)
    on, t_on = _learning_run(images, True)
    off, t_off = _learning_run(images, False)
    ARTIFACTS.mkdir(exist_ok=True)
    summary = {}
    for name, evals, secs in (("freq_weight_on", on, t_on), ("freq_weight_off", off, t_off)):
        final = evals[-1]
        summary[name] = {"evaluations": evals, "wall_time_s": secs,
                         "final_win_histogram": final["action_hist_win"],
                         "final_max_action_share": _max_share(final["action_hist_win"])}
    (ARTIFACTS / "learning_histograms.json").write_text(json.dumps(summary, indent=2) + "\n")
    lines = ["run              CRL   CRR   SCL    SC   win rate"]
    for name in summary:
        h = summary[name]["final_win_histogram"]
        wr = summary[name]["evaluations"][-1]["win_rate"]
        lines.append(f"{name:15s}" + "".join(f"{x:6d}" for x in h) + f"   {wr:.3f}")
    (ARTIFACTS / "learning_histograms.txt").write_text("\n".join(lines) + "\n")

    final = on[-1]
    share = _max_share(final["action_hist_win"])
    total = t_on + t_off
    ok = final["mean_reward"] >= 0 and share <= 0.9 and total < 1800
    assert record(ok, f"freq on: win rate {final['win_rate']:.3f}, top action share {share:.2f}; "
                      f"freq off: top share {_max_share(off[-1]['action_hist_win']):.2f}; "
                      f"{total:.0f}s combined")


@pytest.mark.slow
def test_criterion_7_efficiency(record, tmp_path):
    counts_ok = dp_transition_count(20) == sum(4 * (s + 2) * (s + 1) * s // 6
                                               for s in range(1, 21))
    rng = np.random.default_rng(707)
    src, ckpt, rep = tmp_path / "in.ppm", tmp_path / "n.ckpt", tmp_path / "bench.json"
    save_image(random_image(rng, 160, 120), src)
    neural.save_checkpoint(ckpt, neural.PolicyValueNet(neural.DESK, seed=0))
    t0 = time.perf_counter()
    assert main(["bench", "--input", str(src), "--ratios", "0.5", "--checkpoint", str(ckpt),
                 "--report", str(rep)]) == 0
    dt = time.perf_counter() - t0
    run = json.loads(rep.read_text())["runs"][0]
    closed = dp_transition_count(20) / 20
    ok = (counts_ok and run["images_ratio"] == closed and closed > 1e3
          and run["wall_time_ratio"] > 1e2 and dt < 1200)
    assert record(ok, f"images ratio {run['images_ratio']:.0f} (closed form {closed:.0f}), "
                      f"wall-clock ratio {run['wall_time_ratio']:.0f}, {dt:.0f}s")


def _strip_times(obj):
    if isinstance(obj, dict):
        return {k: _strip_times(v) for k, v in obj.items() if not k.startswith("wall_time")}
    if isinstance(obj, list):
        return [_strip_times(v) for v in obj]
    return obj


def _cli_outputs(base, data, img, ckpt):
    base.mkdir()
    out = {}
    assert main(["train", "--dataset", str(data), "--episodes", "4", "--batch", "2",
                 "--seed", "5", "--out", str(base / "t.ckpt")]) == 0
    out["train.ckpt"] = (base / "t.ckpt").read_bytes()
    out["train.metrics"] = [_strip_times(json.loads(x)) for x in
                            (base / "t.ckpt.metrics.jsonl").read_text().splitlines()]
    assert main(["retarget", "--input", str(img), "--ratio", "0.75", "--checkpoint", str(ckpt),
                 "--output", str(base / "r.png"), "--trace", str(base / "r.json"),
                 "--sample", "--seed", "5"]) == 0
    out["retarget.png"] = (base / "r.png").read_bytes()
    out["retarget.trace"] = (base / "r.json").read_bytes()
    assert main(["multiop", "--input", str(img), "--ratio", "0.9", "--output",
                 str(base / "m.ppm"), "--report", str(base / "m.json")]) == 0
    out["multiop.ppm"] = (base / "m.ppm").read_bytes()
    out["multiop.report"] = _strip_times(json.loads((base / "m.json").read_text()))
    assert main(["bench", "--input", str(img), "--ratios", "0.95,0.9", "--checkpoint",
                 str(ckpt), "--report", str(base / "b.json")]) == 0
    out["bench.report"] = _strip_times(json.loads((base / "b.json").read_text()))
    return out


def test_criterion_8_cli_determinism(record, tmp_path):
    rng = np.random.default_rng(808)
    data = tmp_path / "data"
    data.mkdir()
    for k in range(4):
        save_image(random_image(rng, 40, 12), data / f"{k}.ppm")
    img, ckpt = tmp_path / "x.ppm", tmp_path / "net.ckpt"
    save_image(random_image(rng, 40, 12), img)
    neural.save_checkpoint(ckpt, neural.PolicyValueNet(TINY_NET, seed=8))
    a = _cli_outputs(tmp_path / "a", data, img, ckpt)
    b = _cli_outputs(tmp_path / "b", data, img, ckpt)
    differ = sorted(k for k in a if a[k] != b[k])
    assert record(not differ, f"{len(a)} outputs compared (wall-clock fields excluded), "
                              f"differing: {differ or 'none'}")
