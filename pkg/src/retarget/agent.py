"""Self-play actor-critic training and sequential inference.

A mini-batch shares one episode length ``i_max``, so all |B| episodes (and
both players of each) advance in lock-step and the network sees one batched
observation tensor per step.
"""
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import imagecore
from .bdw import Scorer, score
from .imagecore import U_DIM, encode_original, initial_u, make_observation, step_u
from .neural import PRESETS, PolicyValueNet, RMSProp
from .operators import N_STEPS, StepSchedule, apply_operator

log = logging.getLogger(__name__)

N_ACTIONS = 4


@dataclass
class TrainConfig:
    batch: int = 16
    gamma: float = 0.99
    beta: float = 0.01
    lr: float = 7e-4
    episodes: int = 10_000
    i_max_low: int = 1
    i_max_high: int = N_STEPS
    self_play: bool = True
    freq_weight: bool = True
    strict_eq4_min: bool = False
    seed: int = 0
    net: str = "desk"
    working_width: int = 240
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-8

    def __post_init__(self):
        if self.batch < 1 or self.episodes < 1:
            raise ValueError("batch and episodes must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.beta < 0 or self.lr <= 0:
            raise ValueError("beta must be >= 0 and lr > 0")
        if not 1 <= self.i_max_low <= self.i_max_high <= N_STEPS:
            raise ValueError(f"i_max range must lie within 1..{N_STEPS}")
        if self.net not in PRESETS:
            raise ValueError(f"net must be one of {sorted(PRESETS)}")
        if self.working_width < 1:
            raise ValueError("working_width must be >= 1")

    @property
    def n_batches(self):
        # one episode = one image rollout; a batch holds |B| of them
        return -(-self.episodes // self.batch)


@dataclass
class EpisodeTrace:
    i_max: int
    actions: np.ndarray          # (i_max,) self actions a_ij
    opponent_actions: np.ndarray  # (i_max,) a'_ij (empty without self-play)
    pixels: np.ndarray           # (i_max, 40, 40, 6) self observations
    u: np.ndarray                # (i_max, 20)
    final_image: np.ndarray
    opponent_image: np.ndarray = None
    final_reward: float = 0.0
    rewards: np.ndarray = None   # (i_max,) per-step returns R_ij
    weights: np.ndarray = None   # (i_max,) loss weights w_ij
    entropies: np.ndarray = None


@dataclass
class FreqCounters:
    win: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTIONS, np.int64))
    lose: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTIONS, np.int64))

    @classmethod
    def tally(cls, traces):
        c = cls()
        for tr in traces:
            target = c.win if tr.final_reward == 1 else c.lose
            np.add.at(target, tr.actions, 1)
        return c


# -- rollouts -------------------------------------------------------------------


def _sample(policy, rng):
    p = np.asarray(policy, dtype=np.float64)
    return int(rng.choice(N_ACTIONS, p=p / p.sum()))


def rollout(net, originals, i_max, choosers, n_players):
    """Roll ``n_players`` copies of the policy on every original in lock-step.

    ``choosers[j](k, policy)`` returns the action of player ``k`` on episode
    ``j``. Each player keeps its own LSTM state. Returns per-episode lists of
    per-player (actions, pixels, u, entropies, final image).
    """
    n_ep = len(originals)
    schedules = [StepSchedule(o.shape[1]) for o in originals]
    blocks = [encode_original(o) for o in originals]
    n = n_ep * n_players
    current = [originals[j] for j in range(n_ep) for _ in range(n_players)]
    state = net.initial_state(n)
    u = initial_u(i_max)
    acts = np.zeros((i_max, n), np.int64)
    pix = np.zeros((i_max, n, imagecore.OBS_SIZE, imagecore.OBS_SIZE, 6), np.float32)
    us = np.zeros((i_max, n, U_DIM), np.float32)
    ents = np.zeros((i_max, n))
    for i in range(i_max):
        for idx in range(n):
            j = idx // n_players
            pix[i, idx] = make_observation(originals[j], current[idx], u, blocks[j]).pixels
        us[i] = u
        policy, _, state = net.forward(pix[i], us[i], state)
        p64 = policy.astype(np.float64)
        ents[i] = -np.sum(p64 * np.log(np.where(p64 > 0, p64, 1.0)), axis=1)
        for idx in range(n):
            j, k = divmod(idx, n_players)
            a = choosers[j](k, policy[idx])
            acts[i, idx] = a
            current[idx] = apply_operator(current[idx], a, schedules[j], i)
        u = step_u(u, i_max, i)
    out = []
    for j in range(n_ep):
        players = []
        for k in range(n_players):
            idx = j * n_players + k
            players.append((acts[:, idx].copy(), pix[:, idx].copy(), us[:, idx].copy(),
                            ents[:, idx].copy(), current[idx]))
        out.append(players)
    return out


def _sampling_chooser(rng):
    return lambda k, policy: _sample(policy, rng)


def discounted(final_reward, i_max, gamma):
    """R_i for i = 0..i_max-1 from R_{i_max} by R_i = gamma * R_{i+1}."""
    r = np.empty(i_max)
    acc = float(final_reward)
    for i in range(i_max - 1, -1, -1):
        acc = gamma * acc
        r[i] = acc
    return r


def compute_self_play_reward(original, final, opponent_final, scorer=None):
    """+1 if the self result strictly beats the opponent's, else -1."""
    scorer = scorer or Scorer()
    mine, _ = score(scorer, original, final)
    theirs, _ = score(scorer, original, opponent_final)
    return 1 if scorer.better(mine, theirs) else -1


def run_self_play_episode(net, original, i_max, rng, scorer=None, gamma=0.99):
    """One self-play episode (self vs an independent copy of the policy)."""
    return run_self_play_batch(net, [original], i_max, [rng], scorer, gamma)[0]


def run_self_play_batch(net, originals, i_max, rngs, scorer=None, gamma=0.99):
    if not 1 <= i_max <= N_STEPS:
        raise ValueError(f"i_max must be in 1..{N_STEPS}")
    scorer = scorer or Scorer()
    results = rollout(net, originals, i_max, [_sampling_chooser(r) for r in rngs], 2)
    traces = []
    for orig, (me, opp) in zip(originals, results):
        reward = compute_self_play_reward(orig, me[4], opp[4], scorer)
        traces.append(EpisodeTrace(
            i_max=i_max, actions=me[0], opponent_actions=opp[0], pixels=me[1], u=me[2],
            final_image=me[4], opponent_image=opp[4], final_reward=float(reward),
            rewards=discounted(reward, i_max, gamma), entropies=me[3]))
    return traces


def run_single_batch(net, originals, i_max, rngs, scorer=None, gamma=0.99):
    """Rollouts without an opponent, rewarded per step by the distance change.

    The step reward is the decrease of the scorer's distance (or the increase
    of a higher-is-better score); returns are discounted sums of it.
    """
    scorer = scorer or Scorer()
    results = rollout(net, originals, i_max, [_sampling_chooser(r) for r in rngs], 1)
    traces = []
    for orig, (me,) in zip(originals, results):
        sched = StepSchedule(orig.shape[1])
        img = orig
        prev, orient = score(scorer, orig, img)
        step_r = np.empty(i_max)
        for i, a in enumerate(me[0]):
            img = apply_operator(img, a, sched, i)
            cur, _ = score(scorer, orig, img)
            step_r[i] = (prev - cur) if orient == "lower" else (cur - prev)
            prev = cur
        ret = np.empty(i_max)
        acc = 0.0
        for i in range(i_max - 1, -1, -1):
            acc = step_r[i] + gamma * acc
            ret[i] = acc
        traces.append(EpisodeTrace(
            i_max=i_max, actions=me[0], opponent_actions=np.zeros(0, np.int64),
            pixels=me[1], u=me[2], final_image=me[4],
            final_reward=1.0 if step_r.sum() > 0 else -1.0,
            rewards=ret, entropies=me[3]))
    return traces


# -- frequency-aware weights ----------------------------------------------------


def _min_positive(f):
    pos = f[f > 0]
    return pos.min() if pos.size else 0


def compute_weights(traces, counters=None, strict=False):
    """w_ij = min(f) / f[a_ij] using the win or lose counters of the episode.

    By default the minimum runs over actions that were selected at least once;
    ``strict`` takes the literal minimum over all four entries, which is 0
    whenever some action never occurred.
    """
    if counters is None:
        counters = FreqCounters.tally(traces)
    out = []
    for tr in traces:
        f = counters.win if tr.final_reward == 1 else counters.lose
        fmin = f.min() if strict else _min_positive(f)
        sel = f[tr.actions]
        if np.any(sel == 0):
            raise ValueError("selected action missing from the counters")
        out.append(fmin / sel.astype(np.float64))
    return out


# -- inference --------------------------------------------------------------------


def ratio_to_steps(ratio):
    if not 0.5 - 1e-9 <= ratio <= 0.975 + 1e-9:
        raise ValueError(f"ratio must be within [0.5, 0.975], got {ratio}")
    i_max = int(round((1.0 - ratio) / 0.025))
    if not 1 <= i_max <= N_STEPS:
        raise ValueError(f"ratio {ratio} does not map to 1..{N_STEPS} steps")
    return i_max


def infer(net, original, ratio, sample=False, rng=None):
    """Greedy (or sampled) sequential retargeting; no scorer calls."""
    i_max = ratio_to_steps(ratio)
    if sample:
        rng = rng if rng is not None else np.random.default_rng(0)
        chooser = _sampling_chooser(rng)
    else:
        chooser = lambda k, policy: int(np.argmax(policy))
    ((acts, _, _, _, final),) = rollout(net, [original], i_max, [chooser], 1)[0]
    return final, [int(a) for a in acts]


# -- training -----------------------------------------------------------------------


def prepare_image(img, working_width):
    """Downscale ``img`` to ``working_width`` columns (never enlarges)."""
    h, w = img.shape[:2]
    if w <= working_width:
        return img
    nh = max(1, int(np.floor(h * working_width / w + 0.5)))
    return imagecore.resize_bilinear(img, working_width, nh)


def batch_rng(seed, batch_index):
    return np.random.default_rng([seed, batch_index, 0])


def episode_rng(seed, batch_index, j):
    return np.random.default_rng([seed, batch_index, 1, j])


def train_batch(net, opt, images, config, batch_index, scorer=None):
    """One Algorithm-1 update. Returns (metrics dict, traces)."""
    t0 = time.perf_counter()
    scorer = scorer or Scorer()
    brng = batch_rng(config.seed, batch_index)
    i_max = int(brng.integers(config.i_max_low, config.i_max_high + 1))
    pick = brng.choice(len(images), size=config.batch, replace=len(images) < config.batch)
    originals = [images[k] for k in pick]
    rngs = [episode_rng(config.seed, batch_index, j) for j in range(config.batch)]
    if config.self_play:
        traces = run_self_play_batch(net, originals, i_max, rngs, scorer, config.gamma)
    else:
        traces = run_single_batch(net, originals, i_max, rngs, scorer, config.gamma)

    counters = FreqCounters.tally(traces)
    if config.freq_weight:
        weights = compute_weights(traces, counters, strict=config.strict_eq4_min)
    else:
        weights = [np.ones(i_max) for _ in traces]
    for tr, w in zip(traces, weights):
        tr.weights = w

    pixels = np.stack([tr.pixels for tr in traces], axis=1)
    u = np.stack([tr.u for tr in traces], axis=1)
    actions = np.stack([tr.actions for tr in traces], axis=1)
    returns = np.stack([tr.rewards for tr in traces], axis=1)
    w = np.stack(weights, axis=1)
    try:
        stats, grads = net.loss_and_grads(pixels, u, actions, returns, w, config.beta)
    except FloatingPointError as exc:
        raise FloatingPointError(f"batch {batch_index}: {exc} (i_max={i_max})") from exc
    opt.step(net.params, grads)

    metrics = {
        "batch": batch_index,
        "i_max": i_max,
        "mean_reward": float(np.mean([tr.final_reward for tr in traces])),
        "action_hist_win": counters.win.tolist(),
        "action_hist_lose": counters.lose.tolist(),
        "mean_entropy": float(np.mean([tr.entropies.mean() for tr in traces])),
        "loss_v": stats["loss_v"],
        "loss_pi": stats["loss_pi"],
        "wall_time_s": time.perf_counter() - t0,
    }
    return metrics, traces


def evaluate_vs_random(net, images, seed=0, i_max_values=None, scorer=None):
    """Greedy policy against a uniform-random opponent on every image.

    Returns a dict with win_rate, mean_reward and the action histogram of
    the agent over won and lost episodes.
    """
    scorer = scorer or Scorer()
    rng = np.random.default_rng([seed, 7])
    if i_max_values is None:
        i_max_values = rng.integers(1, N_STEPS + 1, size=len(images))
    hist_win = np.zeros(N_ACTIONS, np.int64)
    hist_lose = np.zeros(N_ACTIONS, np.int64)
    rewards = []
    for img, i_max in zip(images, i_max_values):
        ((acts, _, _, _, mine),) = rollout(
            net, [img], int(i_max), [lambda k, p: int(np.argmax(p))], 1)[0]
        sched = StepSchedule(img.shape[1])
        opp = img
        for i in range(int(i_max)):
            opp = apply_operator(opp, int(rng.integers(N_ACTIONS)), sched, i)
        r = compute_self_play_reward(img, mine, opp, scorer)
        rewards.append(r)
        np.add.at(hist_win if r == 1 else hist_lose, acts, 1)
    rewards = np.array(rewards, dtype=np.float64)
    return {
        "win_rate": float(np.mean(rewards == 1)),
        "mean_reward": float(rewards.mean()),
        "action_hist_win": hist_win.tolist(),
        "action_hist_lose": hist_lose.tolist(),
    }


def load_dataset(source):
    """Directory of .png/.ppm files or a newline-separated manifest."""
    source = Path(source)
    if source.is_dir():
        paths = sorted(p for p in source.iterdir()
                       if p.suffix.lower() in (".png", ".ppm", ".pnm"))
    else:
        base = source.parent
        paths = []
        for line in source.read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                p = Path(line)
                paths.append(p if p.is_absolute() else base / p)
    if not paths:
        raise ValueError(f"{source}: no images")
    return paths


def train(config, dataset, metrics_path=None, scorer=None, net=None, eval_images=None,
          eval_every=100, on_batch=None):
    """Full training loop.

    ``dataset`` holds image arrays or paths. ``metrics_path`` receives one
    JSON object per batch. When ``eval_images`` is given the greedy policy is
    evaluated against a uniform-random opponent every ``eval_every`` batches
    and after the last one; those results land in the log with
    ``"kind": "eval"``. Returns ``(net, optimizer, log_records)``.
    """
    scorer = scorer or Scorer()
    images = []
    for item in dataset:
        img = imagecore.load_image(item) if isinstance(item, (str, Path)) else np.asarray(item)
        images.append(prepare_image(imagecore.check_image(img), config.working_width))
    if not images:
        raise ValueError("empty dataset")
    if net is None:
        net = PolicyValueNet(PRESETS[config.net], seed=config.seed)
    opt = RMSProp(net.params, lr=config.lr, decay=config.rmsprop_decay, eps=config.rmsprop_eps)
    records = []
    sink = open(metrics_path, "w") if metrics_path else None
    try:
        for b in range(config.n_batches):
            metrics, _ = train_batch(net, opt, images, config, b, scorer)
            records.append(metrics)
            if sink:
                sink.write(json.dumps(metrics, sort_keys=True) + "\n")
                sink.flush()
            log.info("batch %d i_max=%d reward=%.3f entropy=%.3f", b, metrics["i_max"],
                     metrics["mean_reward"], metrics["mean_entropy"])
            last = b == config.n_batches - 1
            if eval_images is not None and ((b + 1) % eval_every == 0 or last):
                ev = evaluate_vs_random(net, eval_images, seed=config.seed, scorer=scorer)
                ev.update(kind="eval", batch=b)
                records.append(ev)
                if sink:
                    sink.write(json.dumps(ev, sort_keys=True) + "\n")
                    sink.flush()
            if on_batch is not None:
                on_batch(b, metrics)
    finally:
        if sink:
            sink.close()
    return net, opt, records


def config_dict(config):
    return asdict(config)
