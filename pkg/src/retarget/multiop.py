"""Dynamic-programming operator search over operator-count states.

A state is the vector of how many units of each operator were applied.
Different orderings reaching the same vector are merged, keeping only the
best-scoring image, so level ``s`` holds C(s + 3, 3) states.
"""
import itertools
import json
import time
from dataclasses import dataclass, field
from math import comb

from .bdw import Scorer, score
from .operators import ACTIONS, N_STEPS, Action, apply_operator

EXHAUSTIVE_MAX_STEPS = 4


@dataclass
class SearchReport:
    best_sequence: list
    best_score: float
    images_generated: int
    bdw_evaluations: int
    wall_time: float
    best_image: object = field(default=None, repr=False)

    def to_dict(self):
        return {
            "sequence": [Action(a).name for a in self.best_sequence],
            "score": self.best_score,
            "images_generated": self.images_generated,
            "bdw_evaluations": self.bdw_evaluations,
            "wall_time_s": self.wall_time,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dp_transition_count(i_max, n_ops=4):
    """Images generated by the count-state search up to depth ``i_max``."""
    return sum(n_ops * comb(s - 1 + n_ops - 1, n_ops - 1) for s in range(1, i_max + 1))


def _wins(scorer, value, seq, best_value, best_seq):
    # strict improvement, or a tie resolved towards the lexicographically
    # smaller action sequence
    if best_seq is None or scorer.better(value, best_value):
        return True
    return value == best_value and seq < best_seq


def multiop_search(original, i_max, schedule, scorer=None):
    scorer = scorer or Scorer()
    if not 1 <= i_max <= N_STEPS:
        raise ValueError(f"i_max must be in 1..{N_STEPS}")
    t0 = time.perf_counter()
    images = evals = 0
    # counts -> (score, sequence, image)
    level = {(0, 0, 0, 0): (None, (), original)}
    for step in range(i_max):
        nxt = {}
        for counts in sorted(level):
            _, seq, img = level[counts]
            for a in ACTIONS:
                child = apply_operator(img, a, schedule, step)
                images += 1
                value, _ = score(scorer, original, child)
                evals += 1
                key = counts[:a] + (counts[a] + 1,) + counts[a + 1:]
                cseq = seq + (int(a),)
                cur = nxt.get(key)
                if cur is None or _wins(scorer, value, cseq, cur[0], cur[1]):
                    nxt[key] = (value, cseq, child)
        level = nxt
    best = None
    for value, seq, img in level.values():
        if best is None or _wins(scorer, value, seq, best[0], best[1]):
            best = (value, seq, img)
    return SearchReport(
        best_sequence=list(best[1]),
        best_score=best[0],
        images_generated=images,
        bdw_evaluations=evals,
        wall_time=time.perf_counter() - t0,
        best_image=best[2],
    )


def exhaustive_search(original, i_max, schedule, scorer=None):
    """Score every action sequence of length ``i_max`` (testing oracle)."""
    scorer = scorer or Scorer()
    if not 1 <= i_max <= EXHAUSTIVE_MAX_STEPS:
        raise ValueError(f"exhaustive search is capped at i_max={EXHAUSTIVE_MAX_STEPS}")
    t0 = time.perf_counter()
    images = evals = 0
    prefixes = {(): original}
    for step in range(i_max):
        nxt = {}
        for seq, img in prefixes.items():
            for a in ACTIONS:
                nxt[seq + (int(a),)] = apply_operator(img, a, schedule, step)
                images += 1
        prefixes = nxt
    best = None
    for seq in itertools.product(range(len(ACTIONS)), repeat=i_max):
        img = prefixes[seq]
        value, _ = score(scorer, original, img)
        evals += 1
        if best is None or _wins(scorer, value, seq, best[0], best[1]):
            best = (value, seq, img)
    return SearchReport(
        best_sequence=list(best[1]),
        best_score=best[0],
        images_generated=images,
        bdw_evaluations=evals,
        wall_time=time.perf_counter() - t0,
        best_image=best[2],
    )
