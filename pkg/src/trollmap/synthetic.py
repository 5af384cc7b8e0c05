"""Synthetic discussion threads with planted trolls.

Ordinary users leave a handful of short comments; trolls post dozens of long
ones with many ``!`` and ``?``. Letters follow approximate Russian letter
frequencies with a per-user jitter on the vowels. ``э`` is never generated, so
its frequency column is constant (zero) across users.

Run as ``python -m trollmap.synthetic OUT.jsonl [--seed N]`` to write a
corpus to disk.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .corpus import Comment, dump_jsonl

LETTERS = {
    "о": 0.110, "е": 0.085, "а": 0.080, "и": 0.074, "н": 0.067, "т": 0.063, "с": 0.055,
    "р": 0.047, "в": 0.045, "л": 0.044, "к": 0.035, "м": 0.032, "д": 0.030, "п": 0.028,
    "у": 0.026, "я": 0.020, "ы": 0.019, "ь": 0.017, "г": 0.017, "з": 0.016, "б": 0.016,
    "ч": 0.015, "й": 0.012, "х": 0.010, "ж": 0.009, "ш": 0.007, "ю": 0.006, "ц": 0.005,
    "щ": 0.004, "ф": 0.002, "ё": 0.001,
}
VOWELS = ("а", "е", "и", "о", "у", "ю", "я")
SPACE_SHARE = 0.15
COMMA_SHARE = 0.015
# message-count distribution of ordinary users (1..7)
NORMAL_M_PROBS = (0.45, 0.2, 0.12, 0.09, 0.06, 0.045, 0.035)
TROLL_QUEST = (0.004, 0.033)


@dataclass(frozen=True)
class Fixture:
    comments: list[Comment]
    trolls: frozenset[str]
    n_users: int


def _alphabet(rng, excl: float, quest: float):
    weights = dict(LETTERS)
    for v in VOWELS:
        weights[v] *= float(rng.lognormal(0.0, 0.25))
    total = sum(weights.values())
    letter_share = 1.0 - SPACE_SHARE - COMMA_SHARE - excl - quest
    chars = list(weights) + [" ", ",", "!", "?"]
    probs = [w / total * letter_share for w in weights.values()] + [SPACE_SHARE, COMMA_SHARE, excl, quest]
    probs = np.array(probs)
    return chars, probs / probs.sum()


def _message(rng, chars, probs, length: int) -> str:
    text = "".join(rng.choice(chars, size=length, p=probs))
    return text[:1].upper() + text[1:]


def troll_thread(seed: int = 0, n_normal: int = 141, n_trolls: int = 4) -> Fixture:
    """Ordinary users plus ``n_trolls`` planted trolls, comments interleaved."""
    rng = np.random.default_rng(seed)
    n_users = n_normal + n_trolls
    ids = [f"u{i:03d}" for i in range(n_users)]
    troll_slots = rng.choice(n_users, size=n_trolls, replace=False).tolist()
    # "?" rates spread evenly over 0.004-0.033, in random order
    troll_quest = dict(zip(troll_slots, rng.permutation(np.linspace(TROLL_QUEST[0], TROLL_QUEST[1], n_trolls))))
    comments = []
    trolls = set()
    for slot, uid in enumerate(ids):
        if slot in troll_quest:
            trolls.add(uid)
            chars, probs = _alphabet(rng, excl=rng.uniform(0.005, 0.02), quest=float(troll_quest[slot]))
            n_msgs = int(rng.integers(25, 41))
            lengths = rng.integers(150, 261, size=n_msgs)
        else:
            chars, probs = _alphabet(rng, excl=rng.uniform(0.0, 0.02), quest=0.0)
            n_msgs = int(rng.choice(np.arange(1, 8), p=NORMAL_M_PROBS))
            lengths = np.clip(rng.lognormal(np.log(45), 0.6, size=n_msgs), 12, 120).astype(int)
        comments += [Comment(uid, _message(rng, chars, probs, int(n))) for n in lengths]
    order = rng.permutation(len(comments))
    return Fixture([comments[i] for i in order], frozenset(trolls), n_users)


def quiet_thread(seed: int = 0, n_users: int = 30, n_comments: int = 61) -> Fixture:
    """A troll-free thread: every user posts one to three short comments."""
    rng = np.random.default_rng(seed)
    counts = np.ones(n_users, dtype=int)
    extra = n_comments - n_users
    while extra > 0:
        i = int(rng.integers(n_users))
        if counts[i] < 3:
            counts[i] += 1
            extra -= 1
    comments = []
    for i, n_msgs in enumerate(counts):
        chars, probs = _alphabet(rng, excl=rng.uniform(0.0, 0.02), quest=0.0)
        lengths = np.clip(rng.lognormal(np.log(45), 0.6, size=n_msgs), 12, 120).astype(int)
        comments += [Comment(f"q{i:03d}", _message(rng, chars, probs, int(n))) for n in lengths]
    order = rng.permutation(len(comments))
    return Fixture([comments[j] for j in order], frozenset(), n_users)


def main(argv=None):
    parser = argparse.ArgumentParser(description="Write a synthetic thread with planted trolls as JSONL.")
    parser.add_argument("out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quiet", action="store_true", help="troll-free thread (30 users, 61 comments)")
    args = parser.parse_args(argv)
    fx = quiet_thread(args.seed) if args.quiet else troll_thread(args.seed)
    with open(args.out, "wb") as fh:
        fh.write(dump_jsonl(fx.comments))
    print(f"{len(fx.comments)} comments, {fx.n_users} users, trolls: {sorted(fx.trolls)}", file=sys.stderr)


if __name__ == "__main__":
    main()
