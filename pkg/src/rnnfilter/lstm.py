"""Multi-layer LSTM motion model with online (per-patch) training.

Parameters live in one flat float64 vector so the kernels can run the whole
training loop without touching Python objects. Per layer the vector holds a
``(4H, in + H)`` weight block whose rows are the input, candidate, forget and
output gates (columns ``[A | B]``), followed by the ``4H`` biases; the output
layer ``C`` (``out x H``) and ``b_y`` come last.

The kernel backend is chosen at import: the compiled ``_lstm_ext`` module when
it was built, the numpy implementation otherwise. :func:`use_backend` switches
explicitly.
"""
from dataclasses import dataclass, field

import numpy as np

from rnnfilter import _lstm_py

try:
    from rnnfilter import _lstm_ext
except ImportError:  # extension not built
    _lstm_ext = None

_BACKENDS = {"python": _lstm_py}
if _lstm_ext is not None:
    _BACKENDS["compiled"] = _lstm_ext

_kernels = _BACKENDS.get("compiled", _lstm_py)

GATES = ("i", "j", "f", "o")


class ShapeError(ValueError):
    """Input dimensions do not match the network."""


class DivergenceError(FloatingPointError):
    """Training or prediction produced a non-finite value."""


class TrainingSkipped(Exception):
    """The patch is too short to form a single (input, next) training pair."""


def available_backends():
    return sorted(_BACKENDS)


def backend():
    """Name of the active kernel backend."""
    return "compiled" if _kernels is _lstm_ext else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels; returns the previous name."""
    global _kernels
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    previous = backend()
    _kernels = _BACKENDS[name]
    return previous


@dataclass
class LstmLayerParams:
    """Views of one layer's gate weights into the flat parameter vector."""

    A_i: np.ndarray
    A_j: np.ndarray
    A_f: np.ndarray
    A_o: np.ndarray
    B_i: np.ndarray
    B_j: np.ndarray
    B_f: np.ndarray
    B_o: np.ndarray
    b_i: np.ndarray
    b_j: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray

    @property
    def input_size(self):
        return self.A_i.shape[1]

    @property
    def hidden_size(self):
        return self.A_i.shape[0]


class LstmParams:
    """All weights of a stacked LSTM plus its fully-connected output layer."""

    def __init__(self, theta, num_layers, input_size, hidden_size, output_size):
        self.dims = (int(num_layers), int(input_size), int(hidden_size), int(output_size))
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.ndim != 1 or theta.shape[0] != _lstm_py.n_params(self.dims):
            raise ShapeError(
                f"expected {_lstm_py.n_params(self.dims)} parameters for dims {self.dims}, "
                f"got shape {theta.shape}"
            )
        self.theta = theta

    @classmethod
    def zeros(cls, num_layers=3, input_size=2, hidden_size=20, output_size=2):
        dims = (num_layers, input_size, hidden_size, output_size)
        return cls(np.zeros(_lstm_py.n_params(dims)), *dims)

    @classmethod
    def glorot(cls, rng, num_layers=3, input_size=2, hidden_size=20, output_size=2):
        """Uniform +-sqrt(6 / (fan_in + fan_out)) per weight matrix, zero biases."""
        params = cls.zeros(num_layers, input_size, hidden_size, output_size)
        for layer in params.layers:
            for name in GATES:
                for mat in (getattr(layer, "A_" + name), getattr(layer, "B_" + name)):
                    limit = np.sqrt(6.0 / (mat.shape[0] + mat.shape[1]))
                    mat[...] = rng.uniform(-limit, limit, mat.shape)
        limit = np.sqrt(6.0 / (params.C.shape[0] + params.C.shape[1]))
        params.C[...] = rng.uniform(-limit, limit, params.C.shape)
        return params

    @property
    def num_layers(self):
        return self.dims[0]

    @property
    def input_size(self):
        return self.dims[1]

    @property
    def hidden_size(self):
        return self.dims[2]

    @property
    def output_size(self):
        return self.dims[3]

    @property
    def layers(self):
        H = self.hidden_size
        out = []
        offsets, _ = _lstm_py.layout(self.dims)
        for w_off, b_off, k in offsets:
            W = self.theta[w_off:b_off].reshape(4 * H, k)
            b = self.theta[b_off:b_off + 4 * H]
            n_in = k - H
            kw = {}
            for g, name in enumerate(GATES):
                kw["A_" + name] = W[g * H:(g + 1) * H, :n_in]
                kw["B_" + name] = W[g * H:(g + 1) * H, n_in:]
                kw["b_" + name] = b[g * H:(g + 1) * H]
            out.append(LstmLayerParams(**kw))
        return out

    @property
    def C(self):
        _, c_off = _lstm_py.layout(self.dims)
        n = self.output_size * self.hidden_size
        return self.theta[c_off:c_off + n].reshape(self.output_size, self.hidden_size)

    @property
    def b_y(self):
        _, c_off = _lstm_py.layout(self.dims)
        n = self.output_size * self.hidden_size
        return self.theta[c_off + n:c_off + n + self.output_size]

    def copy(self):
        return LstmParams(self.theta.copy(), *self.dims)

    def all_finite(self):
        return bool(np.all(np.isfinite(self.theta)))

    def __repr__(self):
        L, d_in, H, d_out = self.dims
        return f"LstmParams(layers={L}, input={d_in}, hidden={H}, output={d_out})"


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, params):
        shape = (params.num_layers, params.hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))

    def copy(self):
        return LstmState(self.h.copy(), self.c.copy())


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, params, lr=1e-2, beta1=0.9, beta2=0.999, epsilon=1e-8):
        n = params.theta.shape[0]
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, epsilon)


class ConfigError(ValueError):
    """One or more configuration invariants are violated.

    ``problems`` lists ``(field, message)`` pairs.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {msg}" for k, msg in self.problems))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    scale: float = 1000.0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    num_layers: int = 3
    hidden_size: int = 20
    loss: str = field(default="mse")
    # "displacement": rows are per-step moves divided by displacement_scale;
    # "position": rows are positions divided by scale
    mode: str = "displacement"
    displacement_scale: float = 50.0
    # "mature": only tuples with m >= m_min write fine-tuned weights back; "all": every tuple does
    write_back: str = "mature"

    def __post_init__(self):
        problems = []
        if not isinstance(self.epochs, int) or self.epochs < 1:
            problems.append(("epochs", f"must be an integer >= 1, got {self.epochs!r}"))
        if not self.scale > 0:
            problems.append(("scale", f"must be > 0, got {self.scale!r}"))
        if not self.lr > 0:
            problems.append(("lr", f"must be > 0, got {self.lr!r}"))
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            problems.append(("beta1/beta2", "must lie in [0, 1)"))
        if not self.epsilon > 0:
            problems.append(("epsilon", "must be > 0"))
        if not isinstance(self.num_layers, int) or self.num_layers < 1:
            problems.append(("num_layers", "must be an integer >= 1"))
        if not isinstance(self.hidden_size, int) or self.hidden_size < 1:
            problems.append(("hidden_size", "must be an integer >= 1"))
        if self.mode not in ("displacement", "position"):
            problems.append(("mode", f"must be 'displacement' or 'position', got {self.mode!r}"))
        if not self.displacement_scale > 0:
            problems.append(("displacement_scale", f"must be > 0, got {self.displacement_scale!r}"))
        if self.write_back not in ("mature", "all"):
            problems.append(("write_back", f"must be 'mature' or 'all', got {self.write_back!r}"))
        if self.loss != "mse":
            problems.append(("loss", f"only 'mse' is supported, got {self.loss!r}"))
        if problems:
            raise ConfigError(problems)

    def new_adam(self, params):
        return AdamState.fresh(params, self.lr, self.beta1, self.beta2, self.epsilon)


def _rows(params, rows):
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != params.input_size:
        raise ShapeError(f"rows must be (M, {params.input_size}), got {rows.shape}")
    return rows


def forward_step(params, state, x):
    """One time step through every layer; returns ``(y, new_state)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (params.input_size,):
        raise ShapeError(f"x must have shape ({params.input_size},), got {x.shape}")
    shape = (params.num_layers, params.hidden_size)
    if state.h.shape != shape or state.c.shape != shape:
        raise ShapeError(f"state must be {shape}, got h={state.h.shape} c={state.c.shape}")
    new = LstmState(np.array(state.h, dtype=np.float64), np.array(state.c, dtype=np.float64))
    y = _kernels.step(params.theta, params.dims, x, new.h, new.c)
    return y, new


def forward_sequence(params, rows):
    """Run the rows through the network from a zero state.

    Output row ``t`` is the prediction for input row ``t + 1``.
    """
    rows = _rows(params, rows)
    if rows.shape[0] < 1:
        raise ValueError("forward_sequence needs at least one row")
    return _kernels.forward(params.theta, params.dims, rows)


def predict_next(params, rows):
    return forward_sequence(params, rows)[-1]


def loss_and_gradient(params, inputs, targets):
    """MSE over all (pair, coordinate) entries and its BPTT gradient (flat)."""
    inputs = _rows(params, inputs)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if targets.shape != (inputs.shape[0], params.output_size):
        raise ShapeError(f"targets must be {(inputs.shape[0], params.output_size)}, got {targets.shape}")
    return _kernels.loss_grad(params.theta, params.dims, inputs, targets)


def train_online(params, adam, rows, cfg, history=None):
    """Fit one-step-ahead pairs ``rows[:-1] -> rows[1:]`` for ``cfg.epochs`` epochs.

    Each epoch is a full-BPTT gradient on the whole patch followed by one Adam
    update, so ``adam.t`` advances by exactly ``cfg.epochs``. Returns a new
    parameter object and the loss measured in the final epoch; the input
    ``params`` is not modified. Per-epoch losses are appended to ``history``
    when given.
    """
    rows = _rows(params, rows)
    if rows.shape[0] < 2:
        raise TrainingSkipped(f"need at least 2 rows to train, got {rows.shape[0]}")
    if params.output_size != params.input_size:
        raise ShapeError("online training predicts the next input row; output size must equal input size")
    out = params.copy()
    inputs = np.ascontiguousarray(rows[:-1])
    targets = np.ascontiguousarray(rows[1:])
    losses, adam.t = _kernels.train(
        out.theta, adam.m, adam.v, adam.t, out.dims, inputs, targets,
        cfg.epochs, adam.lr, adam.beta1, adam.beta2, adam.epsilon,
    )
    if history is not None:
        history.extend(float(v) for v in losses)
    if len(losses) < cfg.epochs or not np.isfinite(losses[-1]) or not out.all_finite():
        raise DivergenceError(f"training diverged at epoch {len(losses)} (loss={losses[-1]!r})")
    return out, float(losses[-1])
