"""Compiled training kernels over flat parameter vectors.

These mirror the reference operations in :mod:`eventdsa.nn` and
:mod:`eventdsa.agents` step for step; they exist because a training run makes
hundreds of thousands of tiny updates. Randomness is never drawn here: callers
pass uniforms from their seeded generator.

Flat layout per layer: weight (fan_in x fan_out, row-major) then bias.
Hidden layers are ReLU, the last layer is linear.
"""

import numpy as np
from numba import njit
from numba.typed import List


@njit(cache=True)
def _views(theta, sizes, i):
    off = 0
    for j in range(i):
        off += sizes[j] * sizes[j + 1] + sizes[j + 1]
    n_in = sizes[i]
    n_out = sizes[i + 1]
    w = theta[off : off + n_in * n_out].reshape((n_in, n_out))
    b = theta[off + n_in * n_out : off + n_in * n_out + n_out]
    return w, b


@njit(cache=True)
def forward(theta, sizes, x):
    a = x
    n = sizes.shape[0] - 1
    for i in range(n):
        w, b = _views(theta, sizes, i)
        z = a @ w + b
        if i < n - 1:
            z = np.maximum(z, 0.0)
        a = z
    return a


@njit(cache=True)
def forward_trace(theta, sizes, x):
    trace = List()
    trace.append(x)
    a = x
    n = sizes.shape[0] - 1
    for i in range(n):
        w, b = _views(theta, sizes, i)
        z = a @ w + b
        if i < n - 1:
            z = np.maximum(z, 0.0)
        trace.append(z)
        a = z
    return trace


@njit(cache=True)
def backward(theta, sizes, trace, upstream, grad):
    """Write d(sum(upstream * output))/d(theta) into ``grad``; batch rows are summed."""
    n = sizes.shape[0] - 1
    g = upstream
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            g = g * (trace[i + 1] > 0.0)
        w, _ = _views(theta, sizes, i)
        gw, gb = _views(grad, sizes, i)
        gw[:, :] = trace[i].T @ g
        gb[:] = g.sum(axis=0)
        if i > 0:
            g = g @ w.T


@njit(cache=True)
def masked_softmax(z, mask):
    rows, cols = z.shape
    out = np.zeros_like(z)
    for r in range(rows):
        top = -np.inf
        for c in range(cols):
            if mask[r, c] and z[r, c] > top:
                top = z[r, c]
        total = 0.0
        for c in range(cols):
            if mask[r, c]:
                out[r, c] = np.exp(z[r, c] - top)
                total += out[r, c]
        for c in range(cols):
            out[r, c] /= total
    return out


@njit(cache=True)
def sample_rows(probs, u):
    """Per row: first index whose cumulative mass exceeds u * total (skips zero mass)."""
    rows, cols = probs.shape
    out = np.empty(rows, dtype=np.int64)
    for r in range(rows):
        total = 0.0
        for c in range(cols):
            total += probs[r, c]
        cut = u[r] * total
        acc = 0.0
        pick = cols - 1
        for c in range(cols):
            acc += probs[r, c]
            if acc > cut:
                pick = c
                break
        out[r] = pick
    return out


@njit(cache=True)
def masks_from_obs(obs, num_slots):
    rows, m = obs.shape
    out = np.zeros((rows, 1 + m * num_slots), dtype=np.int8)
    for r in range(rows):
        out[r, 0] = 1
        for j in range(m):
            for t in range(num_slots):
                out[r, 1 + j * num_slots + t] = obs[r, j]
    return out


@njit(cache=True)
def td_step(theta, sizes, x, action, reward, x_next, next_mask, gamma, lr, grad):
    """Single-sample Q-learning step, in place. Returns the pre-step squared error."""
    q_next = forward(theta, sizes, x_next.reshape((1, x_next.shape[0])))[0]
    best = -np.inf
    for i in range(q_next.shape[0]):
        if next_mask[i] and q_next[i] > best:
            best = q_next[i]
    target = reward + gamma * best
    trace = forward_trace(theta, sizes, x.reshape((1, x.shape[0])))
    out = trace[len(trace) - 1]
    err = out[0, action] - target
    upstream = np.zeros_like(out)
    upstream[0, action] = 2.0 * err
    backward(theta, sizes, trace, upstream, grad)
    theta -= lr * grad
    return err * err


@njit(cache=True)
def critic_inputs(obs, actions, action_sizes):
    """Rows of [all observations | one-hot action of every device]."""
    rows, n_obs = obs.shape
    k = actions.shape[1]
    width = n_obs
    for i in range(k):
        width += action_sizes[i]
    out = np.zeros((rows, width))
    for r in range(rows):
        for j in range(n_obs):
            out[r, j] = obs[r, j]
        off = n_obs
        for i in range(k):
            out[r, off + actions[r, i]] = 1.0
            off += action_sizes[i]
    return out


@njit(cache=True)
def critic_step(theta, target, sizes, x, x_next, rewards, gamma, lr, grad):
    """Mean squared TD error step on a minibatch, in place; returns the pre-step loss."""
    n = x.shape[0]
    q_next = forward(target, sizes, x_next)
    trace = forward_trace(theta, sizes, x)
    out = trace[len(trace) - 1]
    upstream = np.empty_like(out)
    loss = 0.0
    for s in range(n):
        err = out[s, 0] - (rewards[s] + gamma * q_next[s, 0])
        loss += err * err
        upstream[s, 0] = 2.0 * err / n
    backward(theta, sizes, trace, upstream, grad)
    theta -= lr * grad
    return loss / n


@njit(cache=True)
def actor_step(actor, actor_sizes, obs_k, mask_k, u, critic, critic_sizes, obs_all, actions, k, action_sizes, lr, grad):
    """Score-function step on device k's actor, in place; returns the gradient norm.

    Device k's action is redrawn with uniforms ``u``; other actions are kept.
    """
    n = obs_k.shape[0]
    trace = forward_trace(actor, actor_sizes, obs_k)
    probs = masked_softmax(trace[len(trace) - 1], mask_k)
    drawn = sample_rows(probs, u)
    joint = actions.copy()
    for s in range(n):
        joint[s, k] = drawn[s]
    q = forward(critic, critic_sizes, critic_inputs(obs_all, joint, action_sizes))
    upstream = -probs
    for s in range(n):
        upstream[s, drawn[s]] += 1.0
        for c in range(upstream.shape[1]):
            upstream[s, c] *= -q[s, 0] / n
    backward(actor, actor_sizes, trace, upstream, grad)
    actor -= lr * grad
    return np.sqrt(np.sum(grad * grad))
