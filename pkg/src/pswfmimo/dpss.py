"""Discrete prolate spheroidal (Slepian) sequences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh

from .errors import NumericalFailure


@dataclass(frozen=True)
class DpssBasis:
    """Eigenvectors of the ``n x n`` concentration matrix for band ``|f| <= w/2``.

    ``vectors[:, k]`` pairs with ``eigenvalues[k]``; eigenvalues descend.
    """

    n: int
    w: float
    vectors: np.ndarray
    eigenvalues: np.ndarray

    def admissible(self, eps: float) -> np.ndarray:
        """Indices of sequences whose concentration is at least ``eps``."""
        return np.flatnonzero(self.eigenvalues >= eps)


def _check(n: int, w: float) -> None:
    if n < 1:
        raise ValueError(f"sequence length must be >= 1, got {n}")
    if not 0 < w <= 1:
        raise ValueError(f"discrete bandwidth must lie in (0, 1], got {w}")


def build_concentration_matrix(n: int, w: float) -> np.ndarray:
    _check(n, w)
    k = np.arange(n)
    return w * np.sinc(w * (k[:, None] - k[None, :]))


def compute_dpss(n: int, w: float) -> DpssBasis:
    _check(n, w)
    if w == 1:
        return DpssBasis(n, 1.0, np.eye(n), np.ones(n))
    s = build_concentration_matrix(n, w)
    try:
        vals, vecs = eigh(s)
    except LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition of S_W failed (n={n}, w={w})") from exc
    # roundoff can push the extremes just outside (0, 1)
    vals = np.clip(vals[::-1], np.finfo(float).tiny, np.nextafter(1.0, 0.0))
    vecs = vecs[:, ::-1].copy()
    peak = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[peak, np.arange(n)])
    vecs *= signs
    return DpssBasis(n, float(w), vecs, vals)
