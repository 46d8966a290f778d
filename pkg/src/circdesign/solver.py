"""Optimal approximate measures: exchange algorithm, envelope minimax and support recovery.

Every sequence s carries a convex quadratic q_s(x).  The optimal value y* is
both the maximum over measures of y_xi = min_x sum_s p_s q_s(x) and the
minimum over x of the upper envelope r(x) = max_s q_s(x); x* is the envelope
minimiser and the support set T collects the sequences active at x*.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize, nnls

from .evaluate import information_matrix, model_blocks
from .errors import NonConvergence, SingularInformation, ZeroInformation
from .moments import (IDENTITY, CovarianceSpec, ModelKind, MomentTable, SequenceMoments,
                      moment_blocks, moment_table, pinv)
from .sequences import (DEFAULT_K_CAP, PseudoClassKey, Seq, canonicalize, candidate_labels,
                        candidate_set, class_rep_blocks, count_class_reps, dual,
                        expand_equivalence_class, format_sequence, runs, stats)

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    get_tol: float = 1e-8
    max_iters: int = 10_000
    x_tol: float = 1e-11
    support_tol: float = 1e-7
    prune: float = 1e-10
    n_init: int = 8
    seed: int = 0
    k_cap: int = DEFAULT_K_CAP
    class_cap: int = 10**5

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# measures and certificates

@dataclass
class Measure:
    """Weights over sequences.  Solver outputs are keyed by canonical class
    representatives and stand for the symmetric measure that spreads each
    weight uniformly over its class."""

    weights: dict
    model: ModelKind
    sigma: CovarianceSpec = IDENTITY
    t: int | None = None

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        self.weights = {tuple(int(a) for a in s): float(w) for s, w in self.weights.items()}
        w = np.array(list(self.weights.values()))
        if len(w) == 0:
            raise ValueError("empty measure")
        if np.any(w < -1e-12):
            raise ValueError("measure weights must be nonnegative")
        total = math.fsum(w)
        if abs(total - 1) > 1e-12:
            raise ValueError(f"measure weights sum to {total!r}")
        if self.t is None:
            self.t = max(max(s) for s in self.weights)

    @property
    def k(self) -> int:
        return len(next(iter(self.weights)))

    def table(self) -> tuple[MomentTable, np.ndarray]:
        seqs = list(self.weights)
        return moment_table(seqs, self.model, self.sigma), np.array([self.weights[s] for s in seqs])

    def moments(self) -> SequenceMoments:
        tab, w = self.table()
        return tab.mix(w)

    def y(self) -> float:
        return self.moments().y()

    def x(self) -> np.ndarray:
        return self.moments().argmin()

    def expanded(self, cap: int = 10**5) -> "Measure":
        """Spread each weight uniformly over the relabeling class of its sequence."""
        out: dict[Seq, float] = {}
        for s, w in self.weights.items():
            members = expand_equivalence_class(s, self.t, cap=cap)
            share = w / len(members)
            for m in members:
                out[m] = out.get(m, 0.0) + share
        total = math.fsum(out.values())
        return Measure({s: v / total for s, v in out.items()}, self.model, self.sigma, self.t)

    def class_weights(self) -> dict:
        out: dict[Seq, float] = {}
        for s, w in self.weights.items():
            c = canonicalize(s)
            out[c] = out.get(c, 0.0) + w
        return out


@dataclass
class Certificate:
    model: ModelKind
    k: int
    t: int
    sigma: CovarianceSpec
    x_star: np.ndarray
    y_star: float
    support_reps: list
    pseudo_keys: list = field(default_factory=list)
    get_residual: float = float("nan")
    tol: dict = field(default_factory=dict)
    path: str = ""
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "k": self.k,
            "t": self.t,
            "sigma": self.sigma.describe(),
            "x_star": [float(v) for v in np.atleast_1d(self.x_star)],
            "y_star": float(self.y_star),
            "support": [format_sequence(s) for s in self.support_reps],
            "pseudo_keys": [list(map(int, key)) for key in self.pseudo_keys],
            "get_residual": float(self.get_residual),
            "tol": self.tol,
            "path": self.path,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Certificate":
        from .sequences import parse_sequence

        return cls(
            model=ModelKind.parse(d["model"]),
            k=int(d["k"]),
            t=int(d["t"]),
            sigma=CovarianceSpec.from_description(d.get("sigma", {})),
            x_star=np.array(d["x_star"], dtype=float),
            y_star=float(d["y_star"]),
            support_reps=[parse_sequence(s) for s in d["support"]],
            pseudo_keys=[PseudoClassKey(*v) for v in d.get("pseudo_keys", [])],
            get_residual=float(d.get("get_residual", float("nan"))),
            tol=dict(d.get("tol", {})),
            path=d.get("path", ""),
            notes=list(d.get("notes", [])),
        )


# ---------------------------------------------------------------------------
# GET residual

def get_residual(measure, seq, model=None, sigma=None) -> float:
    """tr(F_s F_xi^-1) - tr(Q_s Q_xi^-1) for a sequence against a measure.

    ``measure`` may be a ``Measure`` or a ``SequenceMoments`` (then model and
    sigma must be given).
    """
    if isinstance(measure, Measure):
        mm = measure.moments()
        model, sigma = measure.model, measure.sigma
    else:
        mm = measure
    ms = moment_table([seq], model, sigma or IDENTITY).moments(0)
    F = mm.F
    if np.linalg.matrix_rank(F, tol=1e-10 * max(1.0, np.abs(F).max())) < F.shape[0]:
        raise SingularInformation("moment matrix F of the measure is singular")
    return float(np.trace(ms.F @ np.linalg.inv(F)) - np.trace(ms.Q @ pinv(mm.Q)))


def _state(tab: MomentTable, w: np.ndarray) -> tuple[np.ndarray, float]:
    m = tab.mix(w)
    x = -pinv(m.Q) @ m.ell
    return x, float(m.c00 + m.ell @ x)


# ---------------------------------------------------------------------------
# minimax of a small family of quadratics

def _roots(a: float, b: float, c: float) -> list[float]:
    """Real roots of a x^2 + 2 b x + c = 0, computed stably."""
    scale = max(abs(a), abs(b), abs(c), 1e-300)
    if abs(a) <= 1e-14 * scale:
        return [] if abs(b) <= 1e-14 * scale else [-c / (2 * b)]
    disc = b * b - a * c
    if disc < 0:
        if disc > -1e-14 * scale * scale:
            return [-b / a]
        return []
    sq = math.sqrt(disc)
    qv = -(b + math.copysign(sq, b))
    out = []
    if qv != 0:
        out += [qv / a, c / qv]
    else:
        out += [-b / a]
    return out


def _minimax_1d_exact(tab: MomentTable, bracket=None) -> tuple[np.ndarray, float]:
    """Exact minimiser of max_s q_s(x) over a small family in one dimension.

    The minimiser is a vertex of one quadratic, a crossing of two, or a
    bracket end; all candidates are enumerated.
    """
    c, l, Q = tab.c00, tab.ell[:, 0], tab.Q[:, 0, 0]
    cands: list[float] = []
    pos = Q > 1e-12 * max(1.0, np.abs(Q).max())
    cands += list(-l[pos] / Q[pos])
    n = len(c)
    for i in range(n):
        for j in range(i + 1, n):
            cands += _roots(Q[i] - Q[j], l[i] - l[j], c[i] - c[j])
    if bracket is not None:
        lo, hi = bracket
        cands = [x for x in cands if lo <= x <= hi] + [lo, hi]
    if not cands:
        if np.all(np.abs(Q) <= 1e-12) and np.all(np.abs(l) <= 1e-12):
            return np.zeros(1), float(c.max())
        raise ValueError("envelope has no finite minimiser")
    xs = np.array(cands)
    vals = (c[None, :] + 2 * l[None, :] * xs[:, None] + Q[None, :] * xs[:, None] ** 2).max(axis=1)
    i = int(np.argmin(vals))
    return np.array([xs[i]]), float(vals[i])


def _kkt_polish(tab: MomentTable, x: np.ndarray, rel: float = 1e-6, iters: int = 30):
    """Newton refinement of x on the near-active set, solving
    q_s(x) = y (s active), sum p_s (ell_s + Q_s x) = 0, sum p_s = 1."""
    p = tab.dim
    x = np.array(x, dtype=float)
    q = tab.q(x)
    r0 = q.max()
    act = np.flatnonzero(q >= r0 - rel * max(1.0, abs(r0)))
    sub = tab.subset(act)
    g = sub.grad(x)
    A = np.vstack([g.T, np.ones(len(act))])
    w, _ = nnls(A, np.r_[np.zeros(p), 1.0])
    z = np.r_[x, r0, w]
    for _ in range(iters):
        xx, yy, ww = z[:p], z[p], z[p + 1:]
        gq = sub.grad(xx)
        F = np.r_[sub.q(xx) - yy, ww @ gq, ww.sum() - 1]
        J = np.zeros((len(F), len(z)))
        J[:len(act), :p] = 2 * gq
        J[:len(act), p] = -1
        J[len(act):len(act) + p, :p] = np.einsum("n,nij->ij", ww, sub.Q)
        J[len(act):len(act) + p, p + 1:] = gq.T
        J[-1, p + 1:] = 1
        dz = np.linalg.lstsq(J, -F, rcond=None)[0]
        z = z + dz
        if np.max(np.abs(dz)) < 1e-15 * max(1.0, np.max(np.abs(z))):
            break
    xn = z[:p]
    if not np.all(np.isfinite(xn)):
        return x, float(r0)
    rn = float(tab.q(xn).max())
    if rn <= r0 + 1e-13 * max(1.0, abs(r0)):
        return xn, rn
    return x, float(r0)


def _minimax_2d(tab: MomentTable, x0=None) -> tuple[np.ndarray, float]:
    p = tab.dim
    if x0 is None:
        m = tab.mix(np.full(len(tab), 1.0 / len(tab)))
        x0 = -pinv(m.Q) @ m.ell
    x0 = np.asarray(x0, dtype=float)
    v0 = np.r_[x0, tab.q(x0).max()]
    cons = {
        "type": "ineq",
        "fun": lambda v: v[p] - tab.q(v[:p]),
        "jac": lambda v: np.hstack([-2 * tab.grad(v[:p]), np.ones((len(tab), 1))]),
    }
    res = minimize(lambda v: v[p], v0, jac=lambda v: np.r_[np.zeros(p), 1.0],
                   constraints=[cons], method="SLSQP",
                   options={"ftol": 1e-15, "maxiter": 1000})
    x = res.x[:p] if np.all(np.isfinite(res.x)) else x0
    if tab.q(x).max() > tab.q(x0).max():
        x = x0
    return _kkt_polish(tab, x)


def _minimax_small(tab: MomentTable, bracket=None, x0=None):
    if tab.dim == 1:
        return _minimax_1d_exact(tab, bracket)
    return _minimax_2d(tab, x0)


def _cutting_plane(tab: MomentTable, start: Iterable[int], bracket=None, x0=None,
                   tol: float = 1e-13, max_iters: int = 10_000):
    """Grow a working set until its envelope minimiser is optimal for the whole table."""
    W = list(dict.fromkeys(int(i) for i in start))
    x = x0
    for _ in range(max_iters):
        x, y = _minimax_small(tab.subset(W), bracket, x)
        q = tab.q(x)
        order = np.argsort(q)[::-1]
        new = [int(i) for i in order[:4] if q[i] > y + tol * max(1.0, abs(y)) and int(i) not in W]
        if not new:
            return x, float(max(y, q.max())), W
        W.extend(new)
    raise NonConvergence("cutting-plane minimax did not converge", best=(x, y))


# ---------------------------------------------------------------------------
# envelope minimax

def _as_table(seqs, model, sigma) -> MomentTable:
    if isinstance(seqs, MomentTable):
        return seqs
    seqs = list(seqs)
    if not seqs:
        raise ValueError("empty sequence list")
    return moment_table(seqs, model, sigma)


def _subgradient(tab: MomentTable, x: float) -> tuple[float, float]:
    q = tab.q([x])
    top = q.max()
    near = q >= top - 1e-12 * max(1.0, abs(top))
    d = 2 * (tab.ell[near, 0] + tab.Q[near, 0, 0] * x)
    return float(d.min()), float(d.max())


def minimax_envelope(seqs, model=ModelKind.UNDIRECTIONAL, sigma: CovarianceSpec = IDENTITY,
                     bracket=None, opts: SolverOptions | None = None):
    """(x*, y*) minimising r(x) = max_s q_s(x).

    Scalar models are bracketed and bisected on the envelope subgradient, then
    finished exactly on the set of near-active quadratics.  The directional
    model reduces to the undirectional one when the covariance is
    persymmetric; otherwise a cutting-plane scheme with a two-dimensional
    inner solver is used.
    """
    opts = opts or SolverOptions()
    model = ModelKind.parse(model)
    if model is ModelKind.DIRECTIONAL and not isinstance(seqs, MomentTable):
        seqs = list(seqs)
        if not seqs:
            raise ValueError("empty sequence list")
        if sigma.is_persymmetric(len(seqs[0])):
            x, y = minimax_envelope(seqs, ModelKind.UNDIRECTIONAL, sigma, bracket, opts)
            return np.array([x[0], x[0]]), y
    tab = _as_table(seqs, model, sigma)
    if np.all(np.abs(tab.Q) <= 1e-12) and np.all(np.abs(tab.c00) <= 1e-12):
        raise ZeroInformation("envelope is identically zero")

    if tab.dim == 2:
        m = tab.mix(np.full(len(tab), 1.0 / len(tab)))
        x0 = -pinv(m.Q) @ m.ell
        start = np.argsort(tab.q(x0))[::-1][:6]
        x, y, _ = _cutting_plane(tab, start, x0=x0)
        return x, y

    if bracket is None:
        lo, hi = -1.0, 1.0
        while _subgradient(tab, lo)[1] > 0 and lo > -1e6:
            lo *= 2
        while _subgradient(tab, hi)[0] < 0 and hi < 1e6:
            hi *= 2
        bnd = None
    else:
        lo, hi = map(float, bracket)
        bnd = (lo, hi)
    a, b = lo, hi
    while b - a > max(opts.x_tol, 1e-9):
        mid = 0.5 * (a + b)
        gmin, gmax = _subgradient(tab, mid)
        if gmin > 0:
            b = mid
        elif gmax < 0:
            a = mid
        else:
            a = b = mid
    xm = 0.5 * (a + b)
    q = tab.q([xm])
    start = np.argsort(q)[::-1][:8]
    x, y, _ = _cutting_plane(tab, start, bracket=bnd)
    return x, y


# ---------------------------------------------------------------------------
# exchange algorithm over class representatives

def class_rep_table(k: int, t: int, model, sigma: CovarianceSpec = IDENTITY,
                    k_cap: int = DEFAULT_K_CAP, drop_constant: bool = True) -> MomentTable:
    """Moment table over every equivalence-class representative."""
    blocks = []
    for block in class_rep_blocks(k, t, k_cap=k_cap):
        if drop_constant:
            block = block[block.max(axis=1) > 1]
        if len(block):
            blocks.append(moment_table(block, model, sigma))
    return MomentTable.concat(blocks)


def _golden(f, lo: float, hi: float, iters: int = 80) -> float:
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    cands = [(f(lo), lo), (f(hi), hi), (fc, c), (fd, d)]
    return max(cands)[1]


def _weights_on_active(tab: MomentTable, x: np.ndarray, y: float, idx: Sequence[int], rel: float):
    q = tab.q(x)
    act = [i for i in idx if q[i] >= y - rel * max(1.0, abs(y))]
    sub = tab.subset(act)
    A = np.vstack([sub.grad(x).T, np.ones(len(act))])
    w, _ = nnls(A, np.r_[np.zeros(tab.dim), 1.0])
    if w.sum() <= 0:
        return None
    return act, w / w.sum()


@dataclass
class ExchangeResult:
    weights: dict
    x_star: np.ndarray
    y_star: float
    max_residual: float
    iterations: int
    history: list


def exchange(tab: MomentTable, opts: SolverOptions | None = None) -> ExchangeResult:
    """Maximise y_xi over measures on the rows of ``tab``.

    Each step adds the row with the largest GET residual q_s(x_xi)/y_xi using a
    line-searched mixing weight, then re-optimises the weights on the current
    support.  Stops when every residual is at most 1 + get_tol.
    """
    opts = opts or SolverOptions()
    rng = np.random.default_rng(opts.seed)
    n = len(tab)
    init = rng.choice(n, size=min(opts.n_init, n), replace=False)
    w = np.zeros(n)
    w[init] = 1.0 / len(init)
    x, y = _state(tab, w)
    history = [y]
    stalls = 0
    for it in range(1, opts.max_iters + 1):
        q = tab.q(x)
        j = int(np.argmax(q))
        resid = q[j] / y if y > 0 else np.inf
        if y > 0 and resid <= 1 + opts.get_tol:
            supp = np.flatnonzero(w > 0)
            return ExchangeResult({tab.seq(i): float(w[i]) for i in supp}, x, y,
                                  float(resid), it - 1, history)
        # vertex-direction step towards the most violating row
        ej = np.zeros(n)
        ej[j] = 1.0

        def y_of(a, w=w, ej=ej):
            return _state(tab, (1 - a) * w + a * ej)[1]

        alpha = _golden(y_of, 0.0, 1.0)
        w_new = (1 - alpha) * w + alpha * ej
        x_new, y_new = _state(tab, w_new)
        # re-optimise on the support
        supp = np.flatnonzero(w_new > 0)
        sub = tab.subset(supp)
        try:
            xs, ys = _minimax_small(sub, x0=x_new if tab.dim == 2 else None)
            got = _weights_on_active(sub, xs, ys, range(len(supp)), 1e-9)
        except (ValueError, np.linalg.LinAlgError):
            got = None
        if got is not None:
            act, wa = got
            w_pol = np.zeros(n)
            w_pol[supp[act]] = wa
            x_pol, y_pol = _state(tab, w_pol)
            if y_pol >= y_new - 1e-12 * max(1.0, abs(y_new)):
                w_new, x_new, y_new = w_pol, x_pol, y_pol
        tiny = 1e-12 * max(1.0, abs(y))
        if y_new < y - tiny:  # keep the iterate monotone
            w_new = w.copy()
        stalls = stalls + 1 if y_new <= y + tiny else 0
        if stalls >= 5:
            break
        w_new[w_new < opts.prune] = 0.0
        w = w_new / w_new.sum()
        x, y = _state(tab, w)
        history.append(y)
    raise NonConvergence(f"exchange algorithm stopped after {len(history) - 1} iterations "
                         f"with GET residual above 1 + {opts.get_tol:g}",
                         best=ExchangeResult({tab.seq(i): float(w[i]) for i in np.flatnonzero(w)},
                                             x, y, float("nan"), opts.max_iters, history))


def _check_block_size(k: int, model: ModelKind):
    """Interference models estimate nothing with k <= 3, the crossover model nothing with k <= 2."""
    smallest = 3 if model is ModelKind.CROSSOVER else 4
    if k < smallest:
        raise ZeroInformation(f"no contrast is estimable with block size k={k} under the {model.value} model")


def maximize_symmetric(k: int, t: int, model, sigma: CovarianceSpec = IDENTITY,
                       opts: SolverOptions | None = None):
    """Optimal symmetric measure over all class representatives, with certificate."""
    opts = opts or SolverOptions()
    model = ModelKind.parse(model)
    _check_block_size(k, model)
    tab = class_rep_table(k, t, model, sigma, k_cap=opts.k_cap)
    res = exchange(tab, opts)
    reps, keys = recover_support(tab, res.x_star, res.y_star, opts.support_tol)
    measure = Measure(res.weights, model, sigma, t)
    cert = Certificate(model, k, t, sigma, np.asarray(res.x_star), res.y_star, reps,
                       pseudo_keys=keys if sigma.is_type_h(k) else [],
                       get_residual=res.max_residual, tol=opts.as_dict(), path="exchange")
    cert.notes.append(f"exchange iterations: {res.iterations}")
    measure.history = res.history
    return measure, cert


# ---------------------------------------------------------------------------
# support recovery

def recover_support(seqs, x_star, y_star: float, tol: float = 1e-7, model=None,
                    sigma: CovarianceSpec = IDENTITY):
    """Rows with q_s(x*) >= y*(1 - tol), and their (psi, gamma, chi) keys."""
    tab = _as_table(seqs, model, sigma)
    q = tab.q(x_star)
    idx = np.flatnonzero(q >= y_star - tol * abs(y_star))
    if len(idx) == 0:
        raise ValueError("empty support: inconsistent (x*, y*) for these sequences")
    idx = idx[np.argsort(-q[idx], kind="stable")]
    reps = list(dict.fromkeys(canonicalize(tab.seq(i)) for i in idx))
    keys = list(dict.fromkeys(stats(s).key for s in reps))
    return reps, keys


# ---------------------------------------------------------------------------
# closed-form supports for two and three treatments

def _table_row(k: int, t: int):
    """(x*, [(name, seq)], has_duals, flagged) for the closed-form supports."""
    if t == 2:
        lam, odd = divmod(k, 2)
        if odd:
            xs = Fraction(2 * lam - 2, 4 * lam - 3)
            reps = [("s_a", runs((1, lam + 1), (2, lam))),
                    ("s_b", (1, 2) * lam + (1,))]
        else:
            xs = Fraction(lam - 1, 2 * lam - 1)
            reps = [("s_a", runs((1, lam), (2, lam))), ("s_b", (1, 2) * lam)]
        return xs, reps, False, False
    if k == 4:
        return Fraction(1, 3), [("s_a", (1, 1, 2, 3)), ("s_b", (1, 2, 1, 3))], False, False
    if k == 5:
        return Fraction(2, 5), [("s_a", (1, 1, 2, 2, 3)), ("s_b", (1, 1, 2, 3, 2)),
                                ("s_c", (1, 2, 3, 2, 3))], False, True
    if k == 6:
        return Fraction(2, 5), [("s_a", (1, 1, 2, 2, 3, 3)), ("s_b", (1, 1, 2, 3, 2, 3))], False, False
    if k == 7:
        return ((28 + math.sqrt(532)) / 126,
                [("s_a", (1, 1, 1, 2, 2, 2, 3)), ("s_b", (1, 1, 1, 2, 3, 2, 3))], False, False)
    if k == 8:
        # The printed s_b = (11112323) is not active at x* = 3/7; the active
        # class follows the k = 3 mu + 2 pattern with mu = 2.
        return Fraction(3, 7), [("s_a", (1, 1, 1, 2, 2, 3, 3, 3)),
                                ("s_b", (1, 1, 1, 2, 3, 2, 3, 2))], True, False
    mu, r = divmod(k, 3)
    if r == 0:
        # The printed s_b = (1_{mu+1} | 1_{mu-1} (x) (23) | 2) lies below y*;
        # the active class has balanced frequencies.
        xs = Fraction(2 * mu - 2, 4 * mu - 3)
        sa = runs((1, mu), (2, mu), (3, mu))
        sb = runs((1, mu)) + (2, 3) * mu
    elif r == 1:
        xs = Fraction(2 * mu - 2, 4 * mu - 3)
        sa = runs((1, mu), (2, mu + 1), (3, mu))
        sb = runs((1, mu + 1)) + (2, 3) * mu
    else:
        xs = Fraction(2 * mu - 1, 4 * mu - 1)
        sa = runs((1, mu + 1), (2, mu), (3, mu + 1))
        sb = runs((1, mu + 1)) + (2, 3) * mu + (2,)
    return xs, [("s_a", sa), ("s_b", sb)], True, False


def known_support(k: int, t: int, model, sigma: CovarianceSpec = IDENTITY):
    """Tabulated (x*, representative sequences) for t in {2, 3}, or None.

    Directional results are returned as x* = (x, x) with the listed duals
    included; the undirectional model drops them.
    """
    model = ModelKind.parse(model)
    if t not in (2, 3) or k < 4 or model is ModelKind.CROSSOVER:
        return None
    if not sigma.is_type_h(k):
        return None
    if model is ModelKind.DIRECTIONAL and not sigma.is_persymmetric(k):
        return None
    xs, reps, has_duals, _ = _table_row(k, t)
    seqs = [canonicalize(s) for _, s in reps]
    if model is ModelKind.DIRECTIONAL:
        if has_duals:
            seqs.append(canonicalize(dual(reps[1][1])))
        x = np.array([float(xs), float(xs)])
    else:
        x = np.array([float(xs)])
    return x, list(dict.fromkeys(seqs))


def known_support_flagged(k: int, t: int) -> bool:
    """True for the row whose dual sequences are not listed (t = 3, k = 5)."""
    return t == 3 and k == 5


def known_x_exact(k: int, t: int):
    """Exact x* as a Fraction (or float for the irrational k = 7 row)."""
    return _table_row(k, t)[0]


# ---------------------------------------------------------------------------
# weights and verification

def symmetric_weights(support_reps, x_star, model, sigma: CovarianceSpec = IDENTITY,
                      t: int | None = None, tol: float = 1e-8) -> Measure:
    """Nonnegative weights with sum p_s (ell_s + Q_s x*) = 0 and sum p_s = 1.

    Representatives with identical moments are pooled onto the first of them.
    When the system is underdetermined the minimum-norm nonnegative solution is
    returned.
    """
    model = ModelKind.parse(model)
    reps = [tuple(s) for s in support_reps]
    if not reps:
        raise ValueError("empty support")
    tab = moment_table(reps, model, sigma)
    x = np.atleast_1d(np.asarray(x_star, dtype=float))
    sig = np.column_stack([tab.c00, tab.ell, tab.Q.reshape(len(tab), -1)])
    groups: dict[tuple, int] = {}
    lead = []
    for i, row in enumerate(sig):
        key = tuple(np.round(row, 9))
        if key not in groups:
            groups[key] = len(lead)
            lead.append(i)
    sub = tab.subset(lead)
    A = np.vstack([sub.grad(x).T, np.ones(len(lead))])
    b = np.r_[np.zeros(tab.dim), 1.0]
    w, rn = nnls(A, b)
    if rn > tol * max(1.0, np.abs(A).max()):
        raise ValueError(f"no nonnegative weights solve the support equations (residual {rn:.3g})")
    if np.linalg.matrix_rank(A) < len(lead):
        res = minimize(lambda v: v @ v, w, jac=lambda v: 2 * v, method="SLSQP",
                       bounds=[(0, None)] * len(lead),
                       constraints=[{"type": "eq", "fun": lambda v: A @ v - b, "jac": lambda v: A}],
                       options={"ftol": 1e-15, "maxiter": 500})
        if res.success and np.linalg.norm(A @ res.x - b) <= tol * 10:
            w = np.clip(res.x, 0, None)
    w = w / w.sum()
    weights = {reps[i]: float(wi) for i, wi in zip(lead, w) if wi > 0}
    return Measure(weights, model, sigma, t or max(max(s) for s in reps))


@dataclass
class OptimalityReport:
    passed: bool
    residual_eq1: float
    residual_eq2: float
    info_residual: float
    y_xi: float
    tol: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def optimality_blocks(seq, t: int, x_star, model, sigma: CovarianceSpec = IDENTITY):
    """The two stacked pieces E00 + E01 (x* (x) B_t) and E10 + E11 (x* (x) B_t)."""
    model = ModelKind.parse(model)
    E00, E01, E11 = model_blocks(moment_blocks(seq, t, sigma), model)
    Bt = np.eye(t) - 1.0 / t
    xb = np.kron(np.atleast_1d(x_star).reshape(-1, 1), Bt)
    return E00 + E01 @ xb, E01.T + E11 @ xb


def verify_universal_optimality(measure: Measure, x_star, y_star: float,
                                tol: float = 1e-8, expand: bool = True,
                                cap: int = 10**5) -> OptimalityReport:
    """Check the linear characterisation of universally optimal measures and
    C_xi = y* B_t/(t-1) on the class-expanded measure."""
    t = measure.t
    full = measure.expanded(cap) if expand else measure
    Bt = np.eye(t) - 1.0 / t
    top = np.zeros((t, t))
    bottom = None
    for s, w in full.weights.items():
        a, b = optimality_blocks(s, t, x_star, full.model, full.sigma)
        top += w * a
        bottom = w * b if bottom is None else bottom + w * b
    r1 = float(np.linalg.norm(top - y_star * Bt / (t - 1)))
    r2 = float(np.linalg.norm(bottom))
    C = information_matrix(full, full.model, full.sigma)
    r3 = float(np.linalg.norm(C - y_star * Bt / (t - 1)))
    scale = max(1.0, abs(y_star))
    y_xi = float(np.trace(C))
    passed = max(r1, r2, r3) <= tol * scale and y_xi > 0
    return OptimalityReport(passed, r1, r2, r3, y_xi, tol)


# ---------------------------------------------------------------------------
# dispatch

def max_get_residual(tab: MomentTable, x, y) -> float:
    return float(tab.q(x).max() / y)


def solve(k: int, t: int, model, sigma: CovarianceSpec = IDENTITY,
          opts: SolverOptions | None = None, path: str | None = None):
    """Compute (measure, certificate) choosing the cheapest valid route.

    Routes: ``table`` (closed forms, t in {2, 3}, type-H covariance),
    ``candidates`` (envelope minimax over the candidate family, k > 10, t > 3,
    type-H covariance) and ``exchange`` (all class representatives).
    """
    opts = opts or SolverOptions()
    model = ModelKind.parse(model)
    _check_block_size(k, model)
    if t < 2:
        raise ValueError("need at least two treatments")
    typeh = sigma.is_type_h(k)
    if path is None:
        if known_support(k, t, model, sigma) is not None:
            path = "table"
        elif k > 10 and t > 3 and typeh and model is not ModelKind.CROSSOVER:
            path = "candidates"
        else:
            path = "exchange"

    if path == "exchange":
        return maximize_symmetric(k, t, model, sigma, opts)

    if path == "table":
        got = known_support(k, t, model, sigma)
        if got is None:
            raise ValueError("closed-form route not applicable")
        x, reps = got
        tab = moment_table(reps, model, sigma)
        y = float(tab.q(x).max())
        pool = _check_pool(k, t, model, sigma, opts)
        notes = []
        if known_support_flagged(k, t):
            notes.append("t=3, k=5 row: duals of s_b, s_c are not listed for the directional model")
        resid = max_get_residual(pool, x, y) if pool is not None else float("nan")
        measure = symmetric_weights(reps, x, model, sigma, t)
        cert = Certificate(model, k, t, sigma, x, y, reps, [stats(s).key for s in reps],
                           resid, opts.as_dict(), "table", notes)
        return measure, cert

    if path == "candidates":
        if not typeh:
            raise ValueError("candidate route needs a type-H covariance")
        seqs = [s for s in candidate_set(k, t) if max(s) > 1]
        und = moment_table(seqs, ModelKind.UNDIRECTIONAL, sigma)
        x2, y = minimax_envelope(und, ModelKind.UNDIRECTIONAL, sigma, bracket=(0.35, 0.55), opts=opts)
        notes = []
        if not 0.4 - 1e-12 <= x2[0] < 0.5:
            notes.append(f"x* = {x2[0]:.12g} outside [0.4, 0.5)")
        reps, keys = recover_support(und, x2, y, opts.support_tol)
        x = np.array([x2[0], x2[0]]) if model is ModelKind.DIRECTIONAL else x2
        resid = max_get_residual(und, x2, y)
        measure = symmetric_weights(reps, x, model, sigma, t)
        labels = candidate_labels(k, t)
        named = [f"s{labels[r]}" for r in reps if r in labels]
        if named:
            notes.append("active candidates: " + ", ".join(named))
        cert = Certificate(model, k, t, sigma, x, y, reps, keys, resid, opts.as_dict(),
                           "candidates", notes)
        return measure, cert

    raise ValueError(f"unknown solve path {path!r}")


def _check_pool(k, t, model, sigma, opts, limit: int = 200_000):
    """Moment table used to audit a closed-form answer, when affordable."""
    if k <= opts.k_cap and count_class_reps(k, t) <= limit:
        return class_rep_table(k, t, model, sigma, k_cap=opts.k_cap)
    seqs = [s for s in candidate_set(k, t) if max(s) > 1]
    return moment_table(seqs, model, sigma)
