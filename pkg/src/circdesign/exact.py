"""Exact n-block designs: residual minimisation, OA symmetrisation and single-class designs."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import CapExceeded, ZeroInformation
from .evaluate import EfficiencyReport, efficiencies, model_blocks
from .moments import IDENTITY, CovarianceSpec, ModelKind, btilde, moment_blocks, moment_table
from .sequences import (DEFAULT_K_CAP, Seq, balanced_single_class, canonicalize, class_rep_blocks,
                        count_class_reps, dual, expand_equivalence_class, format_sequence,
                        n_distinct, rotations, validate)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# designs

@dataclass
class ExactDesign:
    k: int
    t: int
    blocks: list
    model: ModelKind = ModelKind.DIRECTIONAL
    sigma: CovarianceSpec = IDENTITY
    provenance: str = "iqp"
    efficiencies: EfficiencyReport | None = None
    certificate: dict | None = None
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        self.blocks = [tuple(int(a) for a in b) for b in self.blocks]
        for b in self.blocks:
            if len(b) != self.k:
                raise ValueError(f"block {b} does not have length k={self.k}")
            validate(b, self.t)

    @property
    def n(self) -> int:
        return len(self.blocks)

    def counts(self) -> dict:
        out: dict[Seq, int] = {}
        for b in self.blocks:
            out[b] = out.get(b, 0) + 1
        return out

    def evaluate(self, y_star: float) -> EfficiencyReport:
        self.efficiencies = efficiencies(self, y_star, self.model, self.sigma)
        return self.efficiencies

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model.value,
            "k": self.k,
            "t": self.t,
            "n": self.n,
            "sigma": self.sigma.describe(),
            "provenance": self.provenance,
            "blocks": [list(b) for b in self.blocks],
            "efficiencies": self.efficiencies.as_dict() if self.efficiencies else None,
            "certificate": self.certificate,
        }

    @classmethod
    def from_dict(cls, d) -> "ExactDesign":
        for key in ("k", "t", "blocks"):
            if key not in d:
                raise ValueError(f"design record is missing {key!r}")
        blocks = d["blocks"]
        if not isinstance(blocks, list) or not blocks:
            raise ValueError("design record has no blocks")
        design = cls(
            k=int(d["k"]),
            t=int(d["t"]),
            blocks=blocks,
            model=ModelKind.parse(d.get("model", "directional")),
            sigma=CovarianceSpec.from_description(d.get("sigma") or {}),
            provenance=d.get("provenance", "iqp"),
            efficiencies=EfficiencyReport.from_dict(d["efficiencies"]) if d.get("efficiencies") else None,
            certificate=d.get("certificate"),
        )
        if "n" in d and int(d["n"]) != design.n:
            raise ValueError(f"n={d['n']} does not match {design.n} blocks")
        return design

    def to_csv_rows(self) -> list[list]:
        return [[f"p{j + 1}" for j in range(self.k)]] + [list(b) for b in self.blocks]


# ---------------------------------------------------------------------------
# residual of the exact-design equations

def _stacked_pieces(seqs, t: int, x_star, model, sigma: CovarianceSpec) -> np.ndarray:
    """For each sequence the stacked matrix [E00 + E01 (x* (x) B_t); E10 + E11 (x* (x) B_t)]."""
    model = ModelKind.parse(model)
    seqs = list(seqs)
    k = len(seqs[0])
    bt = btilde(sigma, k)
    Bt = np.eye(t) - 1.0 / t
    xb = np.kron(np.atleast_1d(np.asarray(x_star, dtype=float)).reshape(-1, 1), Bt)
    out = []
    for s in seqs:
        E00, E01, E11 = model_blocks(moment_blocks(s, t, sigma, bt=bt), model)
        out.append(np.vstack([E00 + E01 @ xb, E01.T + E11 @ xb]))
    return np.array(out)


def residual_matrix(counts: dict, x_star, y_star: float, model, sigma: CovarianceSpec = IDENTITY,
                    t: int | None = None) -> np.ndarray:
    """sum_s n_s [E_s00 + E_s01 (x* (x) B_t) - y* B_t/(t-1); E_s10 + E_s11 (x* (x) B_t)]."""
    items = [(tuple(s), c) for s, c in counts.items() if c]
    model = ModelKind.parse(model)
    t = t or max(max(s) for s, _ in items)
    p = model.dim
    if not items:
        log.warning("residual of an empty design requested")
        return np.zeros(((1 + p) * t, t))
    pieces = _stacked_pieces([s for s, _ in items], t, x_star, model, sigma)
    Bt = np.eye(t) - 1.0 / t
    target = np.vstack([y_star * Bt / (t - 1), np.zeros((p * t, t))])
    return np.einsum("n,nij->ij", np.array([c for _, c in items], dtype=float), pieces - target)


# ---------------------------------------------------------------------------
# integer search

@dataclass
class ExactOptions:
    restarts: int = 32
    seed: int = 0
    class_cap: int = 10**5
    max_steps: int = 10_000
    # classes with q_s(x*) >= (1 - near_active) y* join the pool with zero
    # starting weight; only used when all class representatives are enumerable
    near_active: float = 0.02
    rep_cap: int = 200_000
    # efficiency used to choose among the local optima: "A", "D", "E", "T" or "residual"
    criterion: str = "A"


@dataclass
class SearchReport:
    objective: float
    rounding_objective: float
    improved: bool
    history: list


def _near_active_reps(cert, slack: float, rep_cap: int) -> list:
    """Class representatives whose q at x* is within a relative slack of y*."""
    if slack <= 0 or cert.k > DEFAULT_K_CAP or count_class_reps(cert.k, cert.t) > rep_cap:
        return []
    out = []
    x = np.atleast_1d(np.asarray(cert.x_star, dtype=float))
    for block in class_rep_blocks(cert.k, cert.t):
        block = block[block.max(axis=1) > 1]
        if not len(block):
            continue
        tab = moment_table([tuple(int(a) for a in row) for row in block], cert.model, cert.sigma)
        q = tab.q(x)
        out += [tab.seq(i) for i in np.flatnonzero(q >= (1 - slack) * cert.y_star)]
    return out


def _pool(cert, cap: int, slack: float = 0.0, rep_cap: int = 200_000) -> tuple[list, list, int]:
    """Member sequences of the support classes followed by those of any
    near-active classes, the certificate weight share of each, and the number
    of support members."""
    from .solver import symmetric_weights

    reps = [tuple(s) for s in cert.support_reps]
    try:
        measure = symmetric_weights(reps, cert.x_star, cert.model, cert.sigma, cert.t)
        rep_w = measure.weights
    except ValueError:
        rep_w = {r: 1.0 / len(reps) for r in reps}
    n_support_reps = len(reps)
    reps = list(dict.fromkeys(reps + _near_active_reps(cert, slack, rep_cap)))
    seqs: list[Seq] = []
    n_support = 0
    weights: list[float] = []
    seen = set()
    total = 0
    for i, r in enumerate(reps):
        try:
            members = expand_equivalence_class(r, cert.t, cap=cap - total)
        except CapExceeded:
            log.warning("class expansion of %s exceeds the cap; using rotations and duals", r)
            members = list(dict.fromkeys(list(rotations(r)) + list(rotations(dual(r)))))
        members = [m for m in members if m not in seen]
        seen.update(members)
        total += len(members)
        share = rep_w.get(r, 0.0) / max(len(members), 1)
        seqs += members
        weights += [share] * len(members)
        if i < n_support_reps:
            n_support = len(seqs)
    w = np.array(weights)
    if w.sum() <= 0:
        w = np.zeros(len(seqs))
        w[:n_support] = 1.0
    return seqs, list(w / w.sum()), n_support


def largest_remainder(weights: np.ndarray, n: int) -> np.ndarray:
    """Integer counts summing to n from proportions, by largest remainders."""
    raw = np.asarray(weights, dtype=float) * n
    base = np.floor(raw + 1e-9).astype(int)
    rest = n - base.sum()
    if rest > 0:
        order = np.lexsort((np.arange(len(raw)), -(raw - base)))
        base[order[:rest]] += 1
    elif rest < 0:
        order = np.lexsort((np.arange(len(raw)), raw - base))
        for i in order:
            if rest == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                rest += 1
    return base


def _local_search(V: np.ndarray, counts: np.ndarray, max_steps: int) -> tuple[np.ndarray, list]:
    """Best-improvement moves of one block from one sequence to another."""
    counts = counts.copy()
    r = counts @ V
    norms = np.einsum("ij,ij->i", V, V)
    history = [float(r @ r)]
    for _ in range(max_steps):
        supp = np.flatnonzero(counts > 0)
        rv = V @ r
        cross = V[supp] @ V.T
        # ||r + v_j - v_i||^2 - ||r||^2
        delta = (2 * (rv[None, :] - rv[supp, None]) + norms[None, :] + norms[supp, None] - 2 * cross)
        a, b = np.unravel_index(np.argmin(delta), delta.shape)
        if delta[a, b] >= -1e-12 * max(1.0, history[-1]):
            break
        i, j = supp[a], b
        counts[i] -= 1
        counts[j] += 1
        r = r + V[j] - V[i]
        history.append(float(r @ r))
    return counts, history


def solve_exact(certificate, n: int, model=None, sigma: CovarianceSpec | None = None,
                opts: ExactOptions | None = None) -> tuple[ExactDesign, SearchReport]:
    """n-block design from a certificate.

    Local search on the Frobenius norm of the residual matrix, started from the
    largest-remainder rounding and from random draws, is run first over the
    support classes and then over the pool widened by near-active classes.
    Among the local optima found, the design with the best ``opts.criterion``
    efficiency is returned (smallest residual on ties).
    """
    opts = opts or ExactOptions()
    if opts.criterion not in ("A", "D", "E", "T", "residual"):
        raise ValueError(f"unknown selection criterion {opts.criterion!r}")
    if n < 1:
        raise ValueError("n must be positive")
    model = ModelKind.parse(model if model is not None else certificate.model)
    sigma = sigma if sigma is not None else certificate.sigma
    if model is not certificate.model:
        raise ValueError("model does not match the certificate")
    seqs, w, m = _pool(certificate, opts.class_cap, opts.near_active, opts.rep_cap)
    w = np.array(w)
    t = certificate.t
    pieces = _stacked_pieces(seqs, t, certificate.x_star, model, sigma)
    Bt = np.eye(t) - 1.0 / t
    target = np.vstack([certificate.y_star * Bt / (t - 1), np.zeros((model.dim * t, t))])
    V = (pieces - target).reshape(len(seqs), -1)

    def score(counts):
        blocks = [seqs[i] for i in np.flatnonzero(counts) for _ in range(counts[i])]
        rep = efficiencies(ExactDesign(certificate.k, t, blocks, model, sigma), certificate.y_star)
        return getattr(rep, "e_" + opts.criterion) if opts.criterion != "residual" else 0.0

    start = largest_remainder(w, n)
    r0 = start @ V
    f0 = float(r0 @ r0)
    tiny = 1e-12 * max(1.0, n * n * certificate.y_star ** 2)
    rng = np.random.default_rng(opts.seed)
    inits = [start] + [np.bincount(rng.choice(len(seqs), size=n, p=w), minlength=len(seqs))
                       for _ in range(opts.restarts)]
    # local optima of the residual over the support pool, then over the widened pool
    found: dict[tuple, tuple[float, float]] = {}
    history = []
    for rows in ([m, len(seqs)] if m < len(seqs) else [m]):
        for init in inits:
            c, h = _local_search(V[:rows], init[:rows], opts.max_steps)
            c = np.r_[c, np.zeros(len(seqs) - rows, dtype=int)]
            history.append(h)
            key = tuple(c)
            if key not in found:
                found[key] = (score(c), h[-1])
            if h[-1] <= tiny and opts.criterion == "residual":
                break
    # best criterion value, then smallest residual, then first found
    order = {key: i for i, key in enumerate(found)}
    best_key = max(found, key=lambda kk: (round(found[kk][0], 12), -found[kk][1], -order[kk]))
    best = np.array(best_key)
    best_score, best_f = found[best_key]
    blocks = [seqs[i] for i in np.flatnonzero(best) for _ in range(best[i])]
    design = ExactDesign(certificate.k, t, blocks, model, sigma, "iqp",
                         certificate={"x_star": [float(v) for v in np.atleast_1d(certificate.x_star)],
                                      "y_star": float(certificate.y_star),
                                      "support": [format_sequence(s) for s in certificate.support_reps]})
    design.evaluate(certificate.y_star)
    improved = (best_f < f0 - tiny or f0 <= tiny
                or best_score > score(start) + 1e-12)
    report = SearchReport(best_f, f0, improved, history)
    return design, report


# ---------------------------------------------------------------------------
# finite fields and orthogonal arrays of type I

def prime_power(q: int):
    """(p, m) with q = p**m, or None."""
    if q < 2:
        return None
    for p in range(2, q + 1):
        if q % p == 0:
            m = 0
            r = q
            while r % p == 0:
                r //= p
                m += 1
            return (p, m) if r == 1 else None
    return None


def _poly_mod(a: list, mod: list, p: int) -> list:
    a = a[:]
    while len(a) >= len(mod):
        c = a[-1]
        if c:
            shift = len(a) - len(mod)
            for i, mc in enumerate(mod):
                a[shift + i] = (a[shift + i] - c * mc) % p
        a.pop()
    return a


def _irreducible(p: int, m: int) -> list:
    """A monic irreducible polynomial of degree m over GF(p), low coefficients first."""
    if m == 1:
        return [0, 1]
    for coeffs in itertools.product(range(p), repeat=m):
        f = list(coeffs) + [1]
        if f[0] == 0:
            continue
        reducible = False
        for d in range(1, m // 2 + 1):
            for gc in itertools.product(range(p), repeat=d):
                g = list(gc) + [1]
                if not any(_poly_mod(f, g, p)):
                    reducible = True
                    break
            if reducible:
                break
        if not reducible:
            return f
    raise ValueError(f"no irreducible polynomial of degree {m} over GF({p})")


@lru_cache(maxsize=None)
def gf_tables(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Addition and multiplication tables of GF(q); element e encodes a
    polynomial through its base-p digits."""
    pm = prime_power(q)
    if pm is None:
        raise ValueError(f"{q} is not a prime power")
    p, m = pm
    mod = _irreducible(p, m)

    def digits(e):
        return [(e // p ** i) % p for i in range(m)]

    def encode(d):
        return sum(int(c) * p ** i for i, c in enumerate(d))

    add = np.zeros((q, q), dtype=np.int64)
    mul = np.zeros((q, q), dtype=np.int64)
    for a in range(q):
        da = digits(a)
        for b in range(q):
            db = digits(b)
            add[a, b] = encode([(x + y) % p for x, y in zip(da, db)])
            prod = [0] * (2 * m - 1)
            for i, x in enumerate(da):
                for j, y in enumerate(db):
                    prod[i + j] = (prod[i + j] + x * y) % p
            red = _poly_mod(prod, mod, p) if m > 1 else prod
            mul[a, b] = encode((red + [0] * m)[:m])
    return add, mul


def oa_columns(t: int, w: int) -> int:
    """Number of columns oa_type_I(t, w) will have."""
    if w > t or w < 1:
        raise ValueError(f"need 1 <= w <= t, got w={w}, t={t}")
    if prime_power(t) is not None:
        return t * (t - 1)
    return math.perm(t, w)


def oa_type_I(t: int, w: int) -> np.ndarray:
    """w x N array over symbols 1..t in which every pair of rows contains each
    ordered pair of distinct symbols equally often.

    For prime-power t the columns are the maps x -> a x + b (a != 0) over GF(t)
    evaluated at w distinct field elements, giving N = t(t-1); otherwise all
    injective columns are used.
    """
    if w > t or w < 1:
        raise ValueError(f"need 1 <= w <= t, got w={w}, t={t}")
    if prime_power(t) is None:
        return np.array(list(itertools.permutations(range(1, t + 1), w)), dtype=np.int64).T
    add, mul = gf_tables(t)
    cols = []
    for a in range(1, t):
        for b in range(t):
            cols.append([add[mul[a, e], b] + 1 for e in range(w)])
    return np.array(cols, dtype=np.int64).T


def symmetrize(rep, t: int, copies: int = 1, model=ModelKind.DIRECTIONAL,
               sigma: CovarianceSpec = IDENTITY) -> ExactDesign:
    """Relabel a representative by every column of an OA of type I, `copies` times."""
    if copies < 1:
        raise ValueError("copies must be positive")
    rep = canonicalize(rep)
    w = n_distinct(rep)
    if w > t:
        raise ValueError(f"sequence uses {w} treatments but t={t}")
    oa = oa_type_I(t, w)
    blocks = [tuple(int(col[a - 1]) for a in rep) for col in oa.T] * copies
    return ExactDesign(len(rep), t, blocks, model, sigma, "symmetrized")


# ---------------------------------------------------------------------------
# single-class designs and the efficiency bound

def _small_k_rep(k: int, t: int) -> Seq:
    """Single-class representative for 4 <= k <= 10: the closed-form s_a (the t = 3 row
    when t > 3), except where the tabulated efficiency is attained by a class
    using four treatments."""
    from .solver import _table_row

    if t >= 4 and k == 4:
        return (1, 2, 3, 4)
    if (k, t) == (6, 4):
        return (1, 1, 2, 2, 3, 4)
    return _table_row(k, min(t, 3))[1][0][1]


def _q_balanced(k: int, i: int, x: float) -> float:
    """q_{s_i}(x) for Sigma = I from the run lengths of s_i (no sequence is built)."""
    base, extra = divmod(k, i)
    chi = extra * (base + 1) ** 2 + (i - extra) * base ** 2
    if i == 1:
        gamma = psi = k
    else:
        gamma = k - i
        psi = extra * max(base - 1, 0) + (i - extra) * max(base - 2, 0)
    return k - chi / k + 4 * (gamma - k) * x + (6 * k + 2 * psi - 8 * gamma) * x * x


def best_single_index(k: int, t: int, x: float) -> int:
    """min{argmax_i q_{s_i}(x), t} with ties going to the smallest i.

    The scan covers i = 1..min(floor(k/2), t), the range in which every
    treatment of s_i appears at least twice; beyond it q_{s_i}(x) no longer
    follows the balanced-run formula the index is defined through.
    """
    top = max(1, min(k // 2, t))
    vals = [_q_balanced(k, i, x) for i in range(1, top + 1)]
    return vals.index(max(vals)) + 1


def efficiency_bound(k: int, t: int) -> tuple[float, int]:
    """(v(t, k), i0) with e_R > 1 - v for the single-class design, k > 10."""
    if k <= 10:
        raise ValueError("the bound is only claimed for k > 10")
    i0 = best_single_index(k, t, 0.4)
    v = 0.04 * i0 / (k - k / i0 - 0.96 * i0 - 0.25 * i0 / k)
    return v, i0


def single_class_efficiency(rep, k: int, t: int, model, sigma: CovarianceSpec = IDENTITY,
                            y_star: float | None = None) -> float:
    """y_R / y* where R is the class of rep (with its dual for the directional model)."""
    from .solver import _minimax_small, solve

    model = ModelKind.parse(model)
    if y_star is None:
        y_star = solve(k, t, model, sigma)[1].y_star
    seqs = [tuple(rep)]
    if model is ModelKind.DIRECTIONAL:
        seqs.append(dual(rep))
    tab = moment_table(list(dict.fromkeys(seqs)), model, sigma)
    if np.all(np.abs(tab.Q) < 1e-12):
        return 0.0
    _, y = _minimax_small(tab)
    return float(max(y, 0.0) / y_star)


def single_class_design(k: int, t: int, model=ModelKind.UNDIRECTIONAL,
                        sigma: CovarianceSpec = IDENTITY, with_efficiency: bool = True):
    """(representative, diagnostics) of the recommended single-class support."""
    model = ModelKind.parse(model)
    if k < 4:
        raise ZeroInformation(f"no contrast is estimable with block size k={k}")
    if (k, t) == (4, 2):
        raise ZeroInformation("for k=4, t=2 every single class carries zero information")
    diag: dict = {}
    if k > 10:
        i_star = best_single_index(k, t, 0.5)
        v, i0 = efficiency_bound(k, t)
        rep = balanced_single_class(k, i_star)
        diag.update(i_star=i_star, i0=i0, v=v)
    else:
        rep = _small_k_rep(k, t)
    diag["dual"] = dual(rep) if model is ModelKind.DIRECTIONAL else None
    if with_efficiency:
        diag["efficiency"] = single_class_efficiency(rep, k, t, model, sigma)
    return tuple(rep), diag
