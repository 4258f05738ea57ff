"""One filtering cycle per time step, and whole-scenario runs.

A single parameter set is shared by every target. Targets are visited in
ascending id order; each one fine-tunes the shared weights on its own patch
and queries the result for its next position. Confirmed targets (or all of
them, with ``write_back="all"``) write the fine-tuned weights back, so later
targets start from weights already adapted to the earlier ones.
"""
from dataclasses import dataclass, field

import numpy as np

from rnnfilter.association import associate, build_grid
from rnnfilter.lstm import DivergenceError, LstmParams, TrainConfig, predict_next, train_online
from rnnfilter.ospa import OspaConfig, ospa
from rnnfilter.scenario import streams
from rnnfilter.tracklets import AssociationConfig, apply_freeze, apply_survival, birth_tuple, is_dead

TRACK_COLUMNS = ("step", "id", "x", "y", "m", "g", "f", "is_estimate")


@dataclass
class FilterState:
    targets: list
    global_params: LstmParams
    next_id: int = 0
    step: int = 0

    @classmethod
    def initial(cls, rng, train_cfg=TrainConfig(), dim=2):
        params = LstmParams.glorot(rng, train_cfg.num_layers, dim, train_cfg.hidden_size, dim)
        return cls([], params)


@dataclass
class StepInfo:
    """Bookkeeping from one call to :func:`step`, indices refer to the previous targets."""

    predictions: dict = field(default_factory=dict)  # id -> predicted position
    survived: list = field(default_factory=list)     # ids
    frozen: list = field(default_factory=list)
    died: list = field(default_factory=list)
    born: list = field(default_factory=list)
    losses: dict = field(default_factory=dict)       # id -> final training loss


def _diverged(msg, target_id=None, step=None):
    err = DivergenceError(msg)
    err.target_id = target_id
    err.step = step
    return err


def patch_rows(x, train_cfg):
    """Network rows for a position patch: scaled positions or scaled per-step moves."""
    if train_cfg.mode == "position":
        return x / train_cfg.scale
    return np.diff(x, axis=0) / train_cfg.displacement_scale


def from_prediction(x, y, train_cfg):
    """Position predicted for the step after the patch ``x`` from network output ``y``.

    In displacement mode a single-row patch has no moves yet and is predicted
    to stay where it is.
    """
    if train_cfg.mode == "position":
        return y * train_cfg.scale
    if y is None:
        return x[-1].copy()
    return x[-1] + y * train_cfg.displacement_scale


def step(state, Z, cfg=AssociationConfig(), train_cfg=TrainConfig(), info=None):
    """Advance the filter by one measurement set; returns ``(new_state, estimates)``.

    ``estimates`` lists ``(id, position)`` for every surviving or frozen
    tuple whose maturity is at least ``m_min``. Tuples born in this step are
    not reported yet.
    """
    targets = sorted(state.targets, key=lambda t: t.id)
    Z = np.asarray(Z, dtype=np.float64).reshape(-1, 2) if np.size(Z) else np.zeros((0, 2))
    if not np.all(np.isfinite(Z)):
        raise ValueError("measurements must be finite")
    info = info if info is not None else StepInfo()
    scale = train_cfg.scale

    params = state.global_params
    x_hats = np.zeros((len(targets), Z.shape[1]))
    for n, t in enumerate(targets):
        rows = patch_rows(t.x, train_cfg)
        own = params
        if len(rows) >= 2:
            try:
                own, loss = train_online(params, train_cfg.new_adam(params), rows, train_cfg)
            except DivergenceError as exc:
                raise _diverged(f"target {t.id}: {exc}", t.id, state.step + 1) from exc
            info.losses[t.id] = loss
            if train_cfg.write_back == "all" or t.m >= cfg.m_min:
                params = own
        x_hat = from_prediction(t.x, predict_next(own, rows) if len(rows) else None, train_cfg)
        if not np.all(np.isfinite(x_hat)):
            raise _diverged(f"target {t.id}: non-finite prediction {x_hat}", t.id, state.step + 1)
        x_hats[n] = x_hat
        info.predictions[t.id] = x_hat

    grid = build_grid(x_hats, Z)
    outcome = associate(grid, np.array([t.m for t in targets], dtype=np.int64), cfg)

    updated = {}
    for n, meas, g_new in outcome.survivals:
        updated[n] = apply_survival(targets[n], Z[meas], g_new, cfg)
        info.survived.append(targets[n].id)
    for n in outcome.freezes:
        frozen = apply_freeze(targets[n], x_hats[n], cfg)
        if is_dead(frozen, cfg):
            outcome.deaths.append(n)
            info.died.append(frozen.id)
        else:
            updated[n] = frozen
            info.frozen.append(frozen.id)
    outcome.freezes = [n for n in outcome.freezes if n not in set(outcome.deaths)]

    kept = [updated[n] for n in sorted(updated)]
    estimates = [(t.id, t.newest.copy()) for t in kept if t.m >= cfg.m_min]

    next_id = state.next_id
    born = []
    for meas in outcome.births:
        born.append(birth_tuple(Z[meas], cfg, next_id))
        info.born.append(next_id)
        next_id += 1

    new_state = FilterState(kept + born, params, next_id, state.step + 1)
    return new_state, estimates


@dataclass
class RunResult:
    """Per-step filter output next to the ground truth it is scored against."""

    estimate_ids: list = field(default_factory=list)  # per step: (n_est,) ids
    estimates: list = field(default_factory=list)     # per step: (n_est, 2)
    truths: list = field(default_factory=list)        # per step: (n_truth, 2)
    tracks: list = field(default_factory=list)        # rows matching TRACK_COLUMNS

    @property
    def steps(self):
        return len(self.estimates)

    def ospa_series(self, cfg=OspaConfig()):
        return [ospa(est, truth, cfg) for est, truth in zip(self.estimates, self.truths)]


def run(trace, cfg=AssociationConfig(), train_cfg=TrainConfig(), seed=0):
    """Filter a whole :class:`~rnnfilter.scenario.ScenarioTrace` from a fresh state.

    Weights are initialised from the ``weights`` stream of ``seed``.
    """
    if trace.steps < 1:
        raise ValueError("scenario has no steps")
    state = FilterState.initial(streams(seed)["weights"], train_cfg)
    result = RunResult()
    for frame in trace.frames:
        try:
            state, estimates = step(state, frame.meas, cfg, train_cfg)
        except DivergenceError as exc:
            raise _diverged(f"step {frame.step}: {exc}", getattr(exc, "target_id", None), frame.step) from exc
        ids = np.array([i for i, _ in estimates], dtype=np.int64)
        pos = np.array([p for _, p in estimates], dtype=np.float64).reshape(-1, 2)
        result.estimate_ids.append(ids)
        result.estimates.append(pos)
        result.truths.append(frame.truth)
        reported = set(ids.tolist())
        for t in state.targets:
            result.tracks.append((frame.step, t.id, float(t.newest[0]), float(t.newest[1]),
                                  t.m, float(t.g), t.f, int(t.id in reported)))
    return result
