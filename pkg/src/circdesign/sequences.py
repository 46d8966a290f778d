"""Circular treatment sequences: canonical forms, enumeration and statistics.

A sequence is a plain tuple of 1-based treatment labels, e.g. ``(1, 3, 1, 3, 2)``.
Indexing is circular: position 0 is position k and position k+1 is position 1.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import CapExceeded

Seq = tuple[int, ...]

DEFAULT_K_CAP = 16
DEFAULT_CLASS_CAP = 10**6


def validate(seq: Sequence[int], t: int | None = None) -> Seq:
    seq = tuple(int(a) for a in seq)
    if not seq:
        raise ValueError("empty sequence")
    if min(seq) < 1:
        raise ValueError(f"labels must be >= 1: {seq}")
    if t is not None and max(seq) > t:
        raise ValueError(f"label {max(seq)} exceeds t={t}")
    return seq


def parse_sequence(text: str) -> Seq:
    """Parse ``"1,3,1,3,2"`` (commas optional for single-digit labels)."""
    text = text.strip().strip("()")
    if "," in text:
        parts = [p for p in text.split(",") if p.strip()]
    else:
        parts = list(text.replace(" ", ""))
    return validate(int(p) for p in parts)


def format_sequence(seq: Sequence[int]) -> str:
    return ",".join(str(a) for a in seq)


def canonicalize(seq: Sequence[int]) -> Seq:
    """Relabel treatments in order of first occurrence (restricted growth form)."""
    relabel: dict[int, int] = {}
    out = []
    for a in seq:
        if a not in relabel:
            relabel[a] = len(relabel) + 1
        out.append(relabel[a])
    return tuple(out)


def n_distinct(seq: Sequence[int]) -> int:
    return len(set(seq))


def dual(seq: Sequence[int]) -> Seq:
    return tuple(reversed(tuple(seq)))


def rotations(seq: Sequence[int]) -> list[Seq]:
    seq = tuple(seq)
    return [seq[i:] + seq[:i] for i in range(len(seq))]


def orbit_key(seq: Sequence[int], reflect: bool = True) -> Seq:
    """Smallest canonical form over rotations (and reversals when ``reflect``).

    Identifies sequences that agree up to relabeling, rotation and reflection.
    """
    cands = rotations(seq)
    if reflect:
        cands += rotations(dual(seq))
    return min(canonicalize(s) for s in cands)


# ---------------------------------------------------------------------------
# enumeration

def stirling2(n: int, j: int) -> int:
    """Stirling number of the second kind S(n, j)."""
    return sum((-1) ** i * math.comb(j, i) * (j - i) ** n for i in range(j + 1)) // math.factorial(j)


def count_class_reps(k: int, t: int) -> int:
    """Number of equivalence classes of length-k sequences over t treatments."""
    return sum(stirling2(k, j) for j in range(1, min(k, t) + 1))


def _check_k(k, t, k_cap):
    if k < 1 or t < 1:
        raise ValueError("need k >= 1 and t >= 1")
    if k > k_cap:
        raise CapExceeded(f"k={k} exceeds enumeration cap {k_cap}")


def enumerate_class_reps(k: int, t: int, k_cap: int = DEFAULT_K_CAP) -> Iterator[Seq]:
    """Yield one canonical representative per equivalence class, lazily."""
    _check_k(k, t, k_cap)
    for block in class_rep_blocks(k, t, k_cap=k_cap):
        for row in block:
            yield tuple(int(a) for a in row)


def class_rep_blocks(k: int, t: int, block_size: int = 200_000,
                     k_cap: int = DEFAULT_K_CAP) -> Iterator[np.ndarray]:
    """Stream all class representatives as int8 arrays of at most ``block_size`` rows.

    Rows are restricted growth strings with values in 1..t, in lexicographic order.
    """
    _check_k(k, t, k_cap)

    def expand(rows, maxes):
        pos = rows.shape[1]
        if pos == k:
            yield rows
            return
        nchild = np.minimum(maxes + 1, t)
        total = int(nchild.sum())
        if total > block_size and len(rows) > 1:
            half = len(rows) // 2
            yield from expand(rows[:half], maxes[:half])
            yield from expand(rows[half:], maxes[half:])
            return
        parent = np.repeat(np.arange(len(rows)), nchild)
        starts = np.repeat(np.cumsum(nchild) - nchild, nchild)
        vals = (np.arange(total) - starts + 1).astype(np.int8)
        new_rows = np.concatenate([rows[parent], vals[:, None]], axis=1)
        new_max = np.maximum(maxes[parent], vals)
        yield from expand(new_rows, new_max)

    yield from expand(np.ones((1, 1), dtype=np.int8), np.ones(1, dtype=np.int8))


def class_size(rep: Sequence[int], t: int) -> int:
    return math.perm(t, n_distinct(rep))


def expand_equivalence_class(rep: Sequence[int], t: int, cap: int = DEFAULT_CLASS_CAP) -> set[Seq]:
    """All relabelings of ``rep`` under injections of its labels into 1..t."""
    labels = sorted(set(rep))
    j = len(labels)
    if j > t:
        raise ValueError(f"sequence uses {j} treatments but t={t}")
    size = math.perm(t, j)
    if size > cap:
        raise CapExceeded(f"class of {rep} has {size} members, cap {cap}")
    index = {a: i for i, a in enumerate(labels)}
    pos = [index[a] for a in rep]
    return {tuple(img[i] for i in pos) for img in itertools.permutations(range(1, t + 1), j)}


# ---------------------------------------------------------------------------
# combinatorial statistics

class PseudoClassKey(NamedTuple):
    psi: int
    gamma: int
    chi: int


@dataclass(frozen=True)
class SequenceStats:
    gamma: int
    psi: int
    chi: int
    freq: dict = field(default_factory=dict)
    gamma_by: dict = field(default_factory=dict)
    psi_by: dict = field(default_factory=dict)

    @property
    def key(self) -> PseudoClassKey:
        return PseudoClassKey(self.psi, self.gamma, self.chi)


def stats(seq: Sequence[int]) -> SequenceStats:
    """Circular self-neighbour counts.

    gamma counts positions j with t_j == t_{j-1}; psi counts positions with
    t_{j-1} == t_{j+1}; chi is the sum of squared treatment frequencies.
    """
    seq = tuple(seq)
    k = len(seq)
    freq = Counter(seq)
    gamma_by: Counter = Counter()
    psi_by: Counter = Counter()
    for j in range(k):
        prev, nxt = seq[j - 1], seq[(j + 1) % k]
        if seq[j] == prev:
            gamma_by[prev] += 1
        if prev == nxt:
            psi_by[prev] += 1
    return SequenceStats(
        gamma=sum(gamma_by.values()),
        psi=sum(psi_by.values()),
        chi=sum(f * f for f in freq.values()),
        freq=dict(freq),
        gamma_by=dict(gamma_by),
        psi_by=dict(psi_by),
    )


def stats_array(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised (gamma, psi, chi) for an (N, k) array of sequences."""
    arr = np.asarray(arr)
    left = np.roll(arr, 1, axis=1)
    right = np.roll(arr, -1, axis=1)
    gamma = (arr == left).sum(axis=1)
    psi = (left == right).sum(axis=1)
    eq = arr[:, :, None] == arr[:, None, :]
    chi = eq.sum(axis=(1, 2))
    return gamma, psi, chi


def pseudo_class_contains(key: PseudoClassKey, seq: Sequence[int]) -> bool:
    return stats(seq).key == tuple(key)


# ---------------------------------------------------------------------------
# structured sequences

def interleave(a: Sequence[int], b: Sequence[int]) -> Seq:
    """Intertwine ``a`` and ``b``: (a1, b1, a2, b2, ...), with len(b) in {len(a), len(a)-1}."""
    a, b = tuple(a), tuple(b)
    if len(b) not in (len(a), len(a) - 1):
        raise ValueError(f"cannot interleave lengths {len(a)} and {len(b)}")
    out = []
    for i, x in enumerate(a):
        out.append(x)
        if i < len(b):
            out.append(b[i])
    return tuple(out)


def balanced_frequencies(k: int, n: int) -> list[int]:
    """Split k plots over n treatments, extra replications to the left."""
    base, extra = divmod(k, n)
    return [base + 1] * extra + [base] * (n - extra)


def tilde_seq(k: int, t1: int, t2: int) -> Seq:
    """Contiguous runs of treatments t1+1..t1+t2 with near-equal lengths summing to k."""
    if k == 0:
        return ()
    if k < 0 or t2 < 1 or t1 < 0:
        raise ValueError(f"invalid tilde parameters ({k}, {t1}, {t2})")
    if t2 > k:
        raise ValueError(f"cannot place {t2} treatments in {k} plots")
    out: list[int] = []
    for j, f in enumerate(balanced_frequencies(k, t2)):
        out.extend([t1 + 1 + j] * f)
    return tuple(out)


def hat_seq(k: int, t: int) -> Seq:
    """Interleave of a left block on the first ceil(t/2) treatments and a right
    block on the remaining floor(t/2)."""
    if k == 0:
        return ()
    if k < 2 or t < 2:
        raise ValueError(f"hat sequence needs k >= 2 and t >= 2, got ({k}, {t})")
    hk, ht = k // 2, t // 2
    return interleave(tilde_seq(k - hk, 0, t - ht), tilde_seq(hk, t - ht, ht))


def candidate_seq(k: int, k1: int, t1: int, t2: int) -> Seq:
    """Interleaved head of length k1 on t1 treatments followed by blocks of t2 treatments."""
    if not 0 <= k1 <= k:
        raise ValueError(f"need 0 <= k1 <= k, got k1={k1}, k={k}")
    if k - k1 > 0 and t2 <= 0:
        raise ValueError("t2 must be positive when k - k1 > 0")
    if k1 > 0 and (k1 < 2 or t1 < 2):
        raise ValueError("k1 and t1 must be >= 2 when k1 > 0")
    return hat_seq(k1, t1) + tilde_seq(k - k1, t1, t2)


def candidate_bound(k: int, t: int) -> int:
    return min(int(math.floor(4 * math.sqrt(k) + 2)), t)


def candidate_params(k: int, t: int) -> Iterator[tuple[int, int, int, int]]:
    """All feasible (k, k1, t1, t2) parameter tuples of the candidate family."""
    bound = candidate_bound(k, t)
    for t1 in range(bound + 1):
        for t2 in range(bound - t1 + 1):
            for k1 in range(k + 1):
                try:
                    candidate_seq(k, k1, t1, t2)
                except ValueError:
                    continue
                yield (k, k1, t1, t2)


def candidate_set(k: int, t: int, include_duals: bool = True,
                  rotation_dedup: bool = False) -> list[Seq]:
    """Canonical, deduplicated candidate sequences for block size k and t treatments."""
    if k < 1 or t < 2:
        raise ValueError("need k >= 1 and t >= 2")
    seen: dict[Seq, None] = {}
    keyed: set[Seq] = set()
    for params in candidate_params(k, t):
        s = candidate_seq(*params)
        forms = [s, dual(s)] if include_duals else [s]
        for f in forms:
            c = canonicalize(f)
            if c in seen:
                continue
            if rotation_dedup:
                ok = orbit_key(c, reflect=False)
                if ok in keyed:
                    continue
                keyed.add(ok)
            seen[c] = None
    return list(seen)


def candidate_labels(k: int, t: int) -> dict[Seq, tuple[int, int, int, int]]:
    """Map canonical candidate sequence -> the first parameter tuple producing it."""
    out: dict[Seq, tuple[int, int, int, int]] = {}
    for params in candidate_params(k, t):
        out.setdefault(canonicalize(candidate_seq(*params)), params)
    return out


def balanced_single_class(k: int, i: int) -> Seq:
    """(1_{f1} | 2_{f2} | ... | i_{fi}) with near-equal runs, longer runs first."""
    if not 1 <= i <= k:
        raise ValueError(f"need 1 <= i <= k, got i={i}, k={k}")
    return tilde_seq(k, 0, i)


def runs(*spec: tuple[int, int]) -> Seq:
    """Build a sequence from (label, length) pairs: ``runs((1, 3), (2, 2))``."""
    out: list[int] = []
    for label, n in spec:
        out.extend([label] * n)
    return tuple(out)
