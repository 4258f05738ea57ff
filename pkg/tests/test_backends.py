import numpy as np
import pytest

from rnnfilter import lstm
from rnnfilter.lstm import LstmParams, LstmState, TrainConfig

pytestmark = pytest.mark.skipif("compiled" not in lstm.available_backends(),
                                reason="compiled extension not built")


def both(fn):
    out = {}
    for name in ("python", "compiled"):
        previous = lstm.use_backend(name)
        try:
            out[name] = fn()
        finally:
            lstm.use_backend(previous)
    return out["python"], out["compiled"]


@pytest.mark.parametrize("layers, hidden, M", [(1, 2, 2), (2, 3, 4), (3, 5, 8), (3, 20, 9)])
def test_loss_and_gradient_agree(layers, hidden, M):
    params = LstmParams.glorot(np.random.default_rng(M), layers, 2, hidden, 2)
    rows = np.random.default_rng(M + 1).normal(size=(M + 1, 2))
    (lp, gp), (lc, gc) = both(lambda: lstm.loss_and_gradient(params, rows[:-1], rows[1:]))
    assert lc == pytest.approx(lp, rel=1e-12)
    np.testing.assert_allclose(gc, gp, rtol=1e-10, atol=1e-14)


def test_training_agrees():
    params = LstmParams.glorot(np.random.default_rng(0), 3, 2, 20, 2)
    rows = np.random.default_rng(1).normal(size=(9, 2))
    cfg = TrainConfig()
    (pp, lp), (pc, lc) = both(lambda: lstm.train_online(params, cfg.new_adam(params), rows, cfg))
    assert lc == pytest.approx(lp, rel=1e-9)
    np.testing.assert_allclose(pc.theta, pp.theta, rtol=1e-8, atol=1e-12)


def test_step_agrees():
    params = LstmParams.glorot(np.random.default_rng(2), 3, 2, 6, 2)
    state = LstmState(np.full((3, 6), 0.1), np.full((3, 6), -0.2))
    (yp, sp), (yc, sc) = both(lambda: lstm.forward_step(params, state, np.array([0.3, -0.4])))
    np.testing.assert_allclose(yc, yp, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(sc.h, sp.h, rtol=1e-13, atol=1e-15)


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        lstm.use_backend("gpu")
