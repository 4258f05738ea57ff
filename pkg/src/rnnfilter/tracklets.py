"""Tracklet tuples and their lifecycle transitions.

A tracklet carries a patch of recent positions (oldest row first), a maturity
counter, the genuinity error of its last accepted association and a freeze
flag. Every operation returns a new tuple; the patch array is never mutated.
"""
from dataclasses import dataclass, replace

import numpy as np

from rnnfilter.lstm import ConfigError


@dataclass(frozen=True)
class AssociationConfig:
    m_min: int = 4
    m_init: int = 1
    g_min: float = 100.0
    g_max: float = 120.0
    max_batch: int = 10
    m_max: int = 5
    death_floor: int = 0

    def __post_init__(self):
        problems = []
        for name in ("m_min", "m_init", "max_batch", "m_max", "death_floor"):
            if not isinstance(getattr(self, name), int):
                problems.append((name, f"must be an integer, got {getattr(self, name)!r}"))
        if problems:
            raise ConfigError(problems)
        if not 0 < self.g_min < self.g_max:
            problems.append(("g_min/g_max", f"need 0 < g_min < g_max, got g_min={self.g_min}, g_max={self.g_max}"))
        if not self.death_floor <= self.m_init <= self.m_max:
            problems.append((
                "m_init",
                f"need death_floor <= m_init <= m_max, got {self.death_floor}, {self.m_init}, {self.m_max}",
            ))
        if self.m_min < 0:
            problems.append(("m_min", f"must be >= 0, got {self.m_min}"))
        if not self.death_floor < self.m_min <= self.m_max:
            problems.append((
                "death_floor/m_min/m_max",
                f"need death_floor < m_min <= m_max, got {self.death_floor}, {self.m_min}, {self.m_max}",
            ))
        if self.max_batch < 1:
            problems.append(("max_batch", f"must be >= 1, got {self.max_batch}"))
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True, eq=False)
class Tracklet:
    id: int
    x: np.ndarray
    m: int
    g: float = 0.0
    f: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"patch must be a non-empty (M, d) matrix, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def newest(self):
        return self.x[-1]

    def __len__(self):
        return self.x.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Tracklet):
            return NotImplemented
        return (self.id, self.m, self.g, self.f) == (other.id, other.m, other.g, other.f) \
            and np.array_equal(self.x, other.x)


def _finite_row(row):
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or not np.all(np.isfinite(row)):
        raise ValueError(f"row must be a finite vector, got {row!r}")
    return row


def birth_tuple(z, cfg, id):
    return Tracklet(id=id, x=_finite_row(z)[None, :], m=cfg.m_init, g=0.0, f=0)


def append_row(t, row, cfg):
    """Append ``row`` as newest, dropping the oldest row beyond ``max_batch``."""
    row = _finite_row(row)
    x = np.vstack((t.x, row[None, :]))
    if x.shape[0] > cfg.max_batch:
        x = x[x.shape[0] - cfg.max_batch:]
    return replace(t, x=x)


def apply_survival(t, z, g_new, cfg):
    if g_new < 0:
        raise ValueError(f"genuinity error must be >= 0, got {g_new}")
    t = append_row(t, z, cfg)
    return replace(t, f=0, m=min(t.m + 1, cfg.m_max), g=float(g_new))


def apply_freeze(t, x_hat, cfg):
    t = append_row(t, x_hat, cfg)
    return replace(t, f=1, m=t.m - 1)


def is_dead(t, cfg):
    return t.m < cfg.death_floor
