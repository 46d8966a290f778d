"""Information matrices and A-, D-, E-, T-efficiencies of designs and measures."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .moments import IDENTITY, CovarianceSpec, ModelKind, btilde, moment_blocks, pinv

DISCONNECTED_RTOL = 1e-10


def model_blocks(blocks: np.ndarray, model) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(C00, C0., C..) from the 3 x 3 array of t x t blocks for the given model."""
    model = ModelKind.parse(model)
    if model is ModelKind.DIRECTIONAL:
        c01 = np.hstack([blocks[0, 1], blocks[0, 2]])
        c11 = np.block([[blocks[1, 1], blocks[1, 2]], [blocks[2, 1], blocks[2, 2]]])
    elif model is ModelKind.UNDIRECTIONAL:
        c01 = blocks[0, 1] + blocks[0, 2]
        c11 = blocks[1, 1] + blocks[1, 2] + blocks[2, 1] + blocks[2, 2]
    else:
        c01 = blocks[0, 1]
        c11 = blocks[1, 1]
    return blocks[0, 0], c01, c11


def _weighted_sequences(obj):
    """Normalise designs, measures and plain sequence lists to (seq, weight) pairs and t."""
    if hasattr(obj, "weights"):
        return list(obj.weights.items()), obj.t
    if hasattr(obj, "blocks"):
        return list(Counter(tuple(b) for b in obj.blocks).items()), obj.t
    if isinstance(obj, dict):
        items = list(obj.items())
        return items, max(max(s) for s, _ in items)
    items = list(Counter(tuple(b) for b in obj).items())
    return items, max(max(s) for s, _ in items)


def summed_blocks(obj, sigma: CovarianceSpec = IDENTITY, t: int | None = None) -> np.ndarray:
    items, t0 = _weighted_sequences(obj)
    t = t or t0
    k = len(items[0][0])
    bt = btilde(sigma, k)
    total = np.zeros((3, 3, t, t))
    for s, w in items:
        total += w * moment_blocks(s, t, sigma, bt=bt)
    return total


def information_matrix(design_or_measure, model=ModelKind.DIRECTIONAL,
                       sigma: CovarianceSpec = IDENTITY, t: int | None = None) -> np.ndarray:
    """C = C00 - C0. (C..)^- C.0 for a design (blocks), a measure (weights),
    a mapping seq -> count, or an iterable of sequences."""
    c00, c01, c11 = model_blocks(summed_blocks(design_or_measure, sigma, t), model)
    C = c00 - c01 @ pinv(c11) @ c01.T
    return 0.5 * (C + C.T)


@dataclass
class EfficiencyReport:
    e_A: float
    e_D: float
    e_E: float
    e_T: float
    eigenvalues: list = field(default_factory=list)
    y_ratio: float = float("nan")
    disconnected: bool = False

    def as_dict(self) -> dict:
        return {
            "e_A": self.e_A, "e_D": self.e_D, "e_E": self.e_E, "e_T": self.e_T,
            "eigenvalues": list(self.eigenvalues), "y_ratio": self.y_ratio,
            "disconnected": self.disconnected,
        }

    @classmethod
    def from_dict(cls, d) -> "EfficiencyReport":
        return cls(**{k: d[k] for k in ("e_A", "e_D", "e_E", "e_T")},
                   eigenvalues=list(d.get("eigenvalues", [])),
                   y_ratio=d.get("y_ratio", float("nan")),
                   disconnected=bool(d.get("disconnected", False)))

    CSV_FIELDS = ("e_A", "e_D", "e_E", "e_T", "y_ratio", "disconnected")

    def csv_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def efficiencies_from_matrix(C: np.ndarray, n: float, y_star: float) -> EfficiencyReport:
    """Efficiencies of an information matrix C built from n blocks (n = 1 for a measure)."""
    if y_star <= 0:
        raise ValueError("y* must be positive")
    t = C.shape[0]
    lam = np.linalg.eigvalsh(C)
    lam = np.sort(lam)
    nz = np.clip(lam[1:], 0.0, None)
    scale = n * y_star
    e_T = float(nz.sum() / scale)
    top = nz.max() if len(nz) else 0.0
    disconnected = bool(top <= 0 or nz[0] <= DISCONNECTED_RTOL * max(top, scale))
    if disconnected:
        e_A = e_E = e_D = 0.0
    else:
        e_A = float((t - 1) ** 2 / (scale * np.sum(1.0 / nz)))
        e_D = float((t - 1) / scale * np.exp(np.mean(np.log(nz))))
        e_E = float((t - 1) * nz[0] / scale)
    return EfficiencyReport(e_A, e_D, e_E, e_T, [float(v) for v in lam],
                            float(np.trace(C) / scale), disconnected)


def efficiencies(design, y_star: float, model=None, sigma: CovarianceSpec | None = None) -> EfficiencyReport:
    """A-, D-, E- and T-efficiencies of an exact design relative to n y*."""
    model = model if model is not None else design.model
    sigma = sigma if sigma is not None else getattr(design, "sigma", IDENTITY)
    C = information_matrix(design, model, sigma, t=design.t)
    return efficiencies_from_matrix(C, len(design.blocks), y_star)


def measure_efficiency(measure, y_star: float) -> float:
    """y_xi / y* for a measure."""
    if y_star <= 0:
        raise ValueError("y* must be positive")
    return float(measure.y() / y_star)
