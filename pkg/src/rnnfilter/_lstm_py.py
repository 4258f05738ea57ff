"""Pure numpy LSTM kernels.

Fallback for the compiled ``_lstm_ext`` module; both expose the same four
functions and operate on a flat float64 parameter vector whose layout is
described in :mod:`rnnfilter.lstm`.
"""
import numpy as np


def layout(dims):
    """Return ``([(w_off, b_off, K), ...], c_off)`` for ``dims = (L, n_in, H, n_out)``."""
    n_layers, n_in, hidden, _ = dims
    offsets = []
    off = 0
    for layer in range(n_layers):
        k = (n_in if layer == 0 else hidden) + hidden
        offsets.append((off, off + 4 * hidden * k, k))
        off += 4 * hidden * k + 4 * hidden
    return offsets, off


def n_params(dims):
    _, c_off = layout(dims)
    return c_off + dims[3] * dims[2] + dims[3]


def _views(theta, dims):
    n_layers, n_in, hidden, n_out = dims
    offsets, c_off = layout(dims)
    layers = []
    for w_off, b_off, k in offsets:
        W = theta[w_off:b_off].reshape(4 * hidden, k)
        b = theta[b_off:b_off + 4 * hidden]
        layers.append((W, b))
    C = theta[c_off:c_off + n_out * hidden].reshape(n_out, hidden)
    b_y = theta[c_off + n_out * hidden:c_off + n_out * hidden + n_out]
    return layers, C, b_y


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _cell(W, b, u, h_prev, c_prev, hidden):
    xc = np.concatenate((u, h_prev))
    z = W @ xc + b
    gates = np.empty_like(z)
    gates[:hidden] = _sigmoid(z[:hidden])
    gates[hidden:2 * hidden] = np.tanh(z[hidden:2 * hidden])
    gates[2 * hidden:] = _sigmoid(z[2 * hidden:])
    i = gates[:hidden]
    j = gates[hidden:2 * hidden]
    f = gates[2 * hidden:3 * hidden]
    o = gates[3 * hidden:]
    c = c_prev * f + i * j
    tc = np.tanh(c)
    return xc, gates, c, tc, tc * o


def step(theta, dims, x, h, c):
    """Advance one row; ``h`` and ``c`` (L x H) are updated in place."""
    hidden = dims[2]
    layers, C, b_y = _views(theta, dims)
    u = np.asarray(x, dtype=np.float64)
    for l, (W, b) in enumerate(layers):
        _, _, c_new, _, h_new = _cell(W, b, u, h[l], c[l], hidden)
        c[l] = c_new
        h[l] = h_new
        u = h_new
    return C @ u + b_y


def forward(theta, dims, x):
    n_layers, _, hidden, n_out = dims
    h = np.zeros((n_layers, hidden))
    c = np.zeros((n_layers, hidden))
    y = np.empty((x.shape[0], n_out))
    for t in range(x.shape[0]):
        y[t] = step(theta, dims, x[t], h, c)
    return y


def loss_grad(theta, dims, x, target):
    """Mean-square-error loss and its full BPTT gradient."""
    n_layers, n_in, hidden, n_out = dims
    T = x.shape[0]
    layers, C, b_y = _views(theta, dims)
    grad = np.zeros_like(theta)
    g_layers, gC, gb_y = _views(grad, dims)

    zero = np.zeros(hidden)
    cache = [[None] * n_layers for _ in range(T)]
    h = [zero] * n_layers
    c = [zero] * n_layers
    y = np.empty((T, n_out))
    for t in range(T):
        u = x[t]
        for l, (W, b) in enumerate(layers):
            xc, gates, c_new, tc, h_new = _cell(W, b, u, h[l], c[l], hidden)
            cache[t][l] = (xc, gates, c[l], tc)
            c[l] = c_new
            h[l] = h_new
            u = h_new
        y[t] = C @ u + b_y
        cache[t].append(u)

    err = y - target
    loss = float(np.sum(err * err)) / (T * n_out)
    dy_all = err * (2.0 / (T * n_out))

    dh_next = [np.zeros(hidden) for _ in range(n_layers)]
    dc_next = [np.zeros(hidden) for _ in range(n_layers)]
    for t in range(T - 1, -1, -1):
        dy = dy_all[t]
        gC += np.outer(dy, cache[t][n_layers])
        gb_y += dy
        dh = C.T @ dy
        for l in range(n_layers - 1, -1, -1):
            W, _ = layers[l]
            gW, gb = g_layers[l]
            xc, gates, c_prev, tc = cache[t][l]
            i = gates[:hidden]
            j = gates[hidden:2 * hidden]
            f = gates[2 * hidden:3 * hidden]
            o = gates[3 * hidden:]
            dh = dh + dh_next[l]
            dc = dh * o * (1.0 - tc * tc) + dc_next[l]
            dz = np.concatenate((
                dc * j * i * (1.0 - i),
                dc * i * (1.0 - j * j),
                dc * c_prev * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
            ))
            dc_next[l] = dc * f
            gW += np.outer(dz, xc)
            gb += dz
            dxc = W.T @ dz
            k_in = xc.shape[0] - hidden
            dh_next[l] = dxc[k_in:]
            dh = dxc[:k_in]
    return loss, grad


def train(theta, m, v, t, dims, x, target, epochs, lr, beta1, beta2, eps):
    """Run ``epochs`` Adam steps in place; returns ``(losses, t)``.

    Stops after the first non-finite loss, which is kept as the last entry.
    """
    losses = np.empty(epochs)
    for e in range(epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, g = loss_grad(theta, dims, x, target)
        losses[e] = loss
        if not np.isfinite(loss):
            return losses[:e + 1], t
        t += 1
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return losses, t
