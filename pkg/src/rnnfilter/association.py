"""Residual grid construction and the survival/occlusion/birth decision rules."""
from dataclasses import dataclass, field

import numpy as np

from rnnfilter.lstm import ShapeError


@dataclass
class ResidualGrid:
    """Targetness matrix ``T`` (measurements x targets) and its reductions.

    ``C_I``/``mg`` are per-measurement nearest target index and distance,
    ``R_I``/``g`` per-target nearest measurement index and distance. With no
    measurements every target gets ``R_I = -1`` and ``g = inf``; with no
    targets every measurement gets ``C_I = -1`` and ``mg = inf``.
    """

    T: np.ndarray
    C_I: np.ndarray
    R_I: np.ndarray
    mg: np.ndarray
    g: np.ndarray
    H_C: np.ndarray
    H_R: np.ndarray

    @property
    def n_meas(self):
        return self.T.shape[0]

    @property
    def n_targets(self):
        return self.T.shape[1]


@dataclass
class AssociationOutcome:
    survivals: list = field(default_factory=list)  # (target, measurement, g_new)
    freezes: list = field(default_factory=list)
    deaths: list = field(default_factory=list)
    births: list = field(default_factory=list)
    # target index -> "survival" | "occluded" | "clutter" | "immature" | "far"
    branch: dict = field(default_factory=dict)


def _points(a, name, d=None):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return a.reshape(0, d if d is not None else (a.shape[-1] if a.ndim == 2 else 0))
    if a.ndim != 2:
        raise ShapeError(f"{name} must be a (n, d) matrix, got shape {a.shape}")
    return a


def build_grid(x_hats, Z):
    X = _points(x_hats, "x_hats")
    Z = _points(Z, "Z", X.shape[1] if X.size else None)
    if X.size == 0:
        X = X.reshape(0, Z.shape[1])
    if X.shape[1] != Z.shape[1]:
        raise ShapeError(f"dimension mismatch: predictions d={X.shape[1]}, measurements d={Z.shape[1]}")
    n, m = Z.shape[0], X.shape[0]

    diff = Z[:, None, :] - X[None, :, :]
    T = np.sqrt(np.sum(diff * diff, axis=-1))

    if m:
        C_I = np.argmin(T, axis=1) if n else np.zeros(0, dtype=np.intp)
        mg = T[np.arange(n), C_I]
    else:
        C_I = np.full(n, -1, dtype=np.intp)
        mg = np.full(n, np.inf)
    if n:
        R_I = np.argmin(T, axis=0) if m else np.zeros(0, dtype=np.intp)
        g = T[R_I, np.arange(m)]
    else:
        R_I = np.full(m, -1, dtype=np.intp)
        g = np.full(m, np.inf)

    H_C = np.bincount(C_I[C_I >= 0], minlength=m) if m else np.zeros(0, dtype=np.intp)
    H_R = np.bincount(R_I[R_I >= 0], minlength=n) if n else np.zeros(0, dtype=np.intp)
    return ResidualGrid(T=T, C_I=C_I, R_I=R_I, mg=mg, g=g, H_C=H_C, H_R=H_R)


def associate(grid, maturities, cfg):
    """Classify every target as survival or freeze and pick birth measurements.

    Survival needs at least one measurement choosing the target as its
    nearest and a nearest-measurement distance below ``g_min``. Every other
    target is frozen: unassociated ones (whatever their maturity) and ones
    whose nearest measurement is ``g_min`` or farther, including beyond
    ``g_max``. Deaths are left to the caller. A measurement is a birth when no
    target picked it or it lies farther than ``g_max`` from every target,
    unless a survival already consumed it.
    """
    maturities = np.asarray(maturities)
    if maturities.shape != (grid.n_targets,):
        raise ShapeError(f"need {grid.n_targets} maturities, got shape {maturities.shape}")
    out = AssociationOutcome()
    consumed = set()
    for t in range(grid.n_targets):
        hits, g = grid.H_C[t], grid.g[t]
        if hits == 0:
            branch = "occluded" if maturities[t] >= cfg.m_min else "immature"
        elif g < cfg.g_min:
            branch = "survival"
        elif g <= cfg.g_max:
            branch = "clutter"
        else:
            branch = "far"
        out.branch[t] = branch
        if branch == "survival":
            n = int(grid.R_I[t])
            out.survivals.append((t, n, float(g)))
            consumed.add(n)
        else:
            out.freezes.append(t)
    for n in range(grid.n_meas):
        if n in consumed:
            continue
        if grid.H_R[n] == 0 or grid.mg[n] > cfg.g_max:
            out.births.append(n)
    return out
