"""Per-sequence information moments for the circular interference models.

For a sequence s with plot-by-treatment incidence T and circular neighbour
incidences L (left) and R (right), the design matrices are G0 = T,
G1 = L - T and G2 = R - T.  With the within-block weight matrix

    Bt = S^-1 - S^-1 J S^-1 / (1' S^-1 1)

the blocks C_ij = Gi' Bt Gj reduce to scalars c_ij = tr(B_t C_ij B_t), which
assemble into the quadratic q_s(x) = c00 + 2 ell'x + x'Qx.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .sequences import SequenceStats, Seq

PINV_RCOND = 1e-10


class ModelKind(enum.Enum):
    DIRECTIONAL = "directional"
    UNDIRECTIONAL = "undirectional"
    CROSSOVER = "crossover"

    @property
    def dim(self) -> int:
        return 2 if self is ModelKind.DIRECTIONAL else 1

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"3": "directional", "2": "undirectional", "10": "crossover",
                   "dir": "directional", "undir": "undirectional", "cross": "crossover"}
        return cls(aliases.get(v, v))


# ---------------------------------------------------------------------------
# covariance

@dataclass(frozen=True)
class CovarianceSpec:
    """Within-block covariance: identity, AR(1) with parameter rho, or dense."""

    kind: str = "identity"
    rho: float = 0.0
    dense: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "ar1", "dense"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "ar1" and not abs(self.rho) < 1:
            raise ValueError("AR(1) parameter must satisfy |rho| < 1")
        if self.kind == "dense":
            m = np.asarray(self.dense, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("dense covariance must be square")
            if np.max(np.abs(m - m.T)) > 1e-10:
                raise ValueError("dense covariance must be symmetric")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError("dense covariance must be positive definite")

    @classmethod
    def identity(cls) -> "CovarianceSpec":
        return cls("identity")

    @classmethod
    def ar1(cls, rho: float) -> "CovarianceSpec":
        return cls("ar1", rho=float(rho))

    @classmethod
    def from_matrix(cls, m) -> "CovarianceSpec":
        m = np.asarray(m, dtype=float)
        return cls("dense", dense=tuple(map(tuple, m)))

    @classmethod
    def parse(cls, text: str | None) -> "CovarianceSpec":
        """Accept ``identity``, ``ar1:<rho>`` or a path to a k x k CSV file."""
        if text is None or text.strip().lower() in ("", "identity", "i"):
            return cls.identity()
        t = text.strip()
        if t.lower().startswith("ar1:"):
            return cls.ar1(float(t[4:]))
        m = np.loadtxt(t, delimiter=",", ndmin=2)
        return cls.from_matrix(m)

    def matrix(self, k: int) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(k)
        if self.kind == "ar1":
            idx = np.arange(k)
            return self.rho ** np.abs(idx[:, None] - idx[None, :])
        m = np.asarray(self.dense, dtype=float)
        if m.shape[0] != k:
            raise ValueError(f"covariance is {m.shape[0]}x{m.shape[0]} but k={k}")
        return m

    def type_h_fit(self, k: int) -> tuple[float, np.ndarray, float]:
        """Least-squares fit of S = aI + b1' + 1b'; returns (a, b, residual norm)."""
        s = self.matrix(k)
        rows = []
        for i in range(k):
            for j in range(k):
                r = np.zeros(k + 1)
                r[0] = float(i == j)
                r[1 + i] += 1.0
                r[1 + j] += 1.0
                rows.append(r)
        coef, *_ = np.linalg.lstsq(np.array(rows), s.ravel(), rcond=None)
        fit = coef[0] * np.eye(k) + coef[1:][:, None] + coef[1:][None, :]
        return float(coef[0]), coef[1:], float(np.linalg.norm(s - fit))

    def is_type_h(self, k: int) -> bool:
        if self.kind == "identity":
            return True
        a, _, resid = self.type_h_fit(k)
        return a > 0 and resid <= 1e-9 * np.linalg.norm(self.matrix(k))

    def type_h_scale(self, k: int) -> float:
        """The coefficient a of a type-H covariance (1 for the identity)."""
        if self.kind == "identity":
            return 1.0
        return self.type_h_fit(k)[0]

    def is_persymmetric(self, k: int) -> bool:
        s = self.matrix(k)
        return bool(np.max(np.abs(s - s[::-1, ::-1].T)) <= 1e-10)

    def describe(self) -> dict:
        if self.kind == "ar1":
            return {"kind": "ar1", "rho": self.rho}
        if self.kind == "dense":
            return {"kind": "dense", "matrix": [list(r) for r in self.dense]}
        return {"kind": "identity"}

    @classmethod
    def from_description(cls, d: Mapping) -> "CovarianceSpec":
        kind = d.get("kind", "identity")
        if kind == "ar1":
            return cls.ar1(d["rho"])
        if kind == "dense":
            return cls.from_matrix(d["matrix"])
        return cls.identity()

    def __str__(self):
        if self.kind == "ar1":
            return f"ar1:{self.rho:g}"
        return self.kind


IDENTITY = CovarianceSpec.identity()


def btilde(sigma: CovarianceSpec, k: int) -> np.ndarray:
    s = sigma.matrix(k)
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    si = np.linalg.inv(s)
    si = (si + si.T) / 2
    v = si.sum(axis=1)
    bt = si - np.outer(v, v) / v.sum()
    return (bt + bt.T) / 2


def pinv(m: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via its eigendecomposition."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    m = (m + m.T) / 2
    w, v = np.linalg.eigh(m)
    cutoff = rcond * max(np.abs(w).max(initial=0.0), 0.0)
    inv = np.where(np.abs(w) > cutoff, 1.0 / np.where(w == 0, 1, w), 0.0)
    if cutoff == 0.0:
        inv = np.zeros_like(w)
    return (v * inv) @ v.T


# ---------------------------------------------------------------------------
# design matrices and moment blocks

def design_matrices(seq: Sequence[int], t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(T, L, R) k x t incidences of the plot, its left and its right neighbour."""
    s = np.asarray(seq) - 1
    eye = np.eye(t)
    T = eye[s]
    L = eye[np.roll(s, 1)]
    R = eye[np.roll(s, -1)]
    return T, L, R


def moment_blocks(seq: Sequence[int], t: int, sigma: CovarianceSpec = IDENTITY,
                  bt: np.ndarray | None = None) -> np.ndarray:
    """The 3 x 3 array of t x t blocks C_ij = Gi' Bt Gj, shape (3, 3, t, t)."""
    T, L, R = design_matrices(seq, t)
    if bt is None:
        bt = btilde(sigma, len(seq))
    G = np.stack([T, L - T, R - T])
    return np.einsum("api,pq,bqj->abij", G, bt, G)


@dataclass(frozen=True)
class SequenceMoments:
    c00: float
    ell: np.ndarray
    Q: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.ell)

    @property
    def F(self) -> np.ndarray:
        p = self.dim
        f = np.empty((p + 1, p + 1))
        f[0, 0] = self.c00
        f[0, 1:] = self.ell
        f[1:, 0] = self.ell
        f[1:, 1:] = self.Q
        return f

    def y(self) -> float:
        """min_x q(x) = c00 - ell' Q^- ell."""
        return float(self.c00 - self.ell @ pinv(self.Q) @ self.ell)

    def argmin(self) -> np.ndarray:
        return -pinv(self.Q) @ self.ell


def assemble(c: np.ndarray, model: ModelKind) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map raw scalars c[..., i, j] (i, j in 0..2) to (c00, ell, Q) for a model."""
    c00 = c[..., 0, 0]
    if model is ModelKind.DIRECTIONAL:
        ell = c[..., 0, 1:3]
        Q = c[..., 1:3, 1:3]
    elif model is ModelKind.UNDIRECTIONAL:
        ell = (c[..., 0, 1] + c[..., 0, 2])[..., None]
        Q = (c[..., 1, 1] + c[..., 1, 2] + c[..., 2, 1] + c[..., 2, 2])[..., None, None]
    else:
        ell = c[..., 0, 1][..., None]
        Q = c[..., 1, 1][..., None, None]
    return c00, ell, Q


def raw_moments(seq: Sequence[int], sigma: CovarianceSpec = IDENTITY) -> np.ndarray:
    """3 x 3 matrix of c_ij = tr(B_t C_ij B_t), computed through the t x t blocks."""
    t = max(seq)
    blocks = moment_blocks(seq, t, sigma)
    bt = np.eye(t) - 1.0 / t
    return np.einsum("ij,abjk,ki->ab", bt, blocks, bt)


def sequence_moments(seq: Sequence[int], model, sigma: CovarianceSpec = IDENTITY) -> SequenceMoments:
    model = ModelKind.parse(model)
    c00, ell, Q = assemble(raw_moments(seq, sigma), model)
    return SequenceMoments(float(c00), np.array(ell, dtype=float), np.array(Q, dtype=float))


def q_value(m: SequenceMoments, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (m.dim,):
        raise ValueError(f"x must have dimension {m.dim}, got shape {x.shape}")
    return float(m.c00 + 2 * m.ell @ x + x @ m.Q @ x)


def q_closed_form_typeh(st: SequenceStats, k: int, x: float) -> float:
    """q_s(x) for the undirectional model with identity covariance, from (gamma, psi, chi)."""
    return k - st.chi / k + 4 * (st.gamma - k) * x + (6 * k + 2 * st.psi - 8 * st.gamma) * x * x


# ---------------------------------------------------------------------------
# vectorised moments for many sequences

@dataclass
class MomentTable:
    """Moments of many sequences: c00 (N,), ell (N, p), Q (N, p, p)."""

    seqs: np.ndarray
    c00: np.ndarray
    ell: np.ndarray
    Q: np.ndarray

    def __len__(self):
        return len(self.c00)

    @property
    def dim(self) -> int:
        return self.ell.shape[1]

    def q(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.c00 + 2 * self.ell @ x + np.einsum("i,nij,j->n", x, self.Q, x)

    def grad(self, x) -> np.ndarray:
        """Half-gradients ell + Q x, shape (N, p)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.ell + self.Q @ x

    def subset(self, idx) -> "MomentTable":
        idx = np.asarray(idx)
        return MomentTable(self.seqs[idx], self.c00[idx], self.ell[idx], self.Q[idx])

    def moments(self, i: int) -> SequenceMoments:
        return SequenceMoments(float(self.c00[i]), self.ell[i].copy(), self.Q[i].copy())

    def seq(self, i: int) -> Seq:
        return tuple(int(a) for a in self.seqs[i])

    def mix(self, w: np.ndarray) -> SequenceMoments:
        w = np.asarray(w, dtype=float)
        return SequenceMoments(float(w @ self.c00), w @ self.ell, np.einsum("n,nij->ij", w, self.Q))

    @staticmethod
    def concat(tables: Iterable["MomentTable"]) -> "MomentTable":
        tables = list(tables)
        return MomentTable(np.concatenate([t.seqs for t in tables]),
                           np.concatenate([t.c00 for t in tables]),
                           np.concatenate([t.ell for t in tables]),
                           np.concatenate([t.Q for t in tables]))


def _pair_sums(arr: np.ndarray, bt: np.ndarray) -> dict:
    """sum_{p,q} Bt[p,q] [x_p == y_q] for shifted copies x, y of each sequence."""
    shifted = {"T": arr, "L": np.roll(arr, 1, axis=1), "R": np.roll(arr, -1, axis=1)}
    out = {}
    for a, b in (("T", "T"), ("T", "L"), ("T", "R"), ("L", "L"), ("L", "R"), ("R", "R")):
        eq = shifted[a][:, :, None] == shifted[b][:, None, :]
        val = np.einsum("npq,pq->n", eq, bt, dtype=float)
        out[a + b] = val
        out[b + a] = val
    return out


def raw_moments_array(arr: np.ndarray, sigma: CovarianceSpec = IDENTITY,
                      chunk: int = 50_000) -> np.ndarray:
    """Matrix-path raw scalars c_ij for an (N, k) array, shape (N, 3, 3)."""
    arr = np.asarray(arr)
    n, k = arr.shape
    bt = btilde(sigma, k)
    out = np.empty((n, 3, 3))
    for lo in range(0, n, chunk):
        a = arr[lo:lo + chunk]
        s = _pair_sums(a, bt)
        # G0 = T, G1 = L - T, G2 = R - T expanded bilinearly
        g = {0: {"T": 1}, 1: {"L": 1, "T": -1}, 2: {"R": 1, "T": -1}}
        for i in range(3):
            for j in range(i, 3):
                v = sum(ci * cj * s[x + y] for x, ci in g[i].items() for y, cj in g[j].items())
                out[lo:lo + chunk, i, j] = v
                out[lo:lo + chunk, j, i] = v
    return out


def raw_moments_typeh(arr: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Raw scalars from (gamma, psi, chi) for a type-H covariance with coefficient ``scale``."""
    from .sequences import stats_array

    arr = np.asarray(arr)
    k = arr.shape[1]
    gamma, psi, chi = (v.astype(float) for v in stats_array(arr))
    out = np.empty((len(arr), 3, 3))
    out[:, 0, 0] = k - chi / k
    out[:, 0, 1] = out[:, 1, 0] = out[:, 0, 2] = out[:, 2, 0] = gamma - k
    out[:, 1, 1] = out[:, 2, 2] = 2 * k - 2 * gamma
    out[:, 1, 2] = out[:, 2, 1] = k + psi - 2 * gamma
    return out / scale


def moment_table(seqs, model, sigma: CovarianceSpec = IDENTITY, fast: bool = True) -> MomentTable:
    """Moments for a collection of equal-length sequences.

    With ``fast`` and a type-H covariance the scalars come from the counting
    statistics; otherwise the matrix path is used.
    """
    model = ModelKind.parse(model)
    arr = np.asarray([tuple(s) for s in seqs] if not isinstance(seqs, np.ndarray) else seqs)
    if arr.ndim != 2 or len(arr) == 0:
        raise ValueError("need a non-empty 2-d collection of sequences")
    k = arr.shape[1]
    if fast and sigma.is_type_h(k):
        raw = raw_moments_typeh(arr, sigma.type_h_scale(k))
    else:
        raw = raw_moments_array(arr, sigma)
    c00, ell, Q = assemble(raw, model)
    return MomentTable(arr, np.asarray(c00, dtype=float), np.asarray(ell, dtype=float),
                       np.asarray(Q, dtype=float))


def measure_moments(measure, model=None, sigma: CovarianceSpec | None = None) -> SequenceMoments:
    """Convex combination of per-sequence moments under a measure.

    ``measure`` is a ``Measure`` or a mapping sequence -> weight.
    """
    weights = getattr(measure, "weights", measure)
    model = ModelKind.parse(model if model is not None else measure.model)
    sigma = sigma if sigma is not None else getattr(measure, "sigma", IDENTITY)
    seqs = list(weights)
    w = np.array([weights[s] for s in seqs], dtype=float)
    if np.any(w < -1e-15):
        raise ValueError("measure weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"measure weights sum to {w.sum()!r}, not 1")
    return moment_table(seqs, model, sigma).mix(w)
