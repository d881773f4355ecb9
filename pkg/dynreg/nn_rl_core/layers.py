"""Dense and GRU layers with hand-written backward passes.

Parameters live in a PolicyParams under a name prefix:
  MLP  prefix.w{i} (in, out), prefix.b{i} (out,)
  GRU  prefix.{Wz,Wr,Wn} (in, hidden), prefix.{Uz,Ur,Un} (hidden, hidden), prefix.{bz,br,bn} (hidden,)

Inputs are batched along the first axis; a 1-d input is treated as a batch of one
and the output is squeezed back.
"""

import numpy as np
from scipy.special import expit

from dynreg.exceptions import ShapeError

GRU_GATES = ("z", "r", "n")


def _activate(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "sigmoid":
        return expit(x)
    if name in (None, "linear"):
        return x
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name, out):
    """Derivative expressed through the activation output."""
    if name == "tanh":
        return 1.0 - out**2
    if name == "relu":
        return (out > 0.0).astype(float)
    if name == "sigmoid":
        return out * (1.0 - out)
    return np.ones_like(out)


def _batch(x, width, what):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != width:
        raise ShapeError(f"{what} expects input width {width}, got {x.shape[-1]}")
    return x, single


def orthogonal(rng, shape, gain=1.0):
    """Orthogonal-style init: QR of a Gaussian matrix, scaled by `gain`."""
    rows, cols = shape
    flat = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def mlp_shapes(sizes, prefix="mlp"):
    shapes = {}
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        shapes[f"{prefix}.w{i}"] = (fan_in, fan_out)
        shapes[f"{prefix}.b{i}"] = (fan_out,)
    return shapes


def mlp_init(params, sizes, rng, prefix="mlp", output_gain=0.01):
    layers = len(sizes) - 1
    for i in range(layers):
        gain = output_gain if i == layers - 1 else np.sqrt(2.0)
        params.view(f"{prefix}.w{i}")[...] = orthogonal(rng, (sizes[i], sizes[i + 1]), gain)
        params.view(f"{prefix}.b{i}")[...] = 0.0


def mlp_depth(params, prefix):
    return sum(1 for name in params.shapes if name.startswith(f"{prefix}.w"))


def mlp_forward(params, x, prefix="mlp", activation="tanh", output_activation=None):
    """Forward pass; returns (output, cache) where cache feeds mlp_backward."""
    depth = mlp_depth(params, prefix)
    x, single = _batch(x, params.shapes[f"{prefix}.w0"][0], f"MLP {prefix!r}")
    outputs = [x]
    for i in range(depth):
        act = output_activation if i == depth - 1 else activation
        z = outputs[-1] @ params.view(f"{prefix}.w{i}") + params.view(f"{prefix}.b{i}")
        outputs.append(_activate(act, z))
    out = outputs[-1][0] if single else outputs[-1]
    cache = {"params": params, "prefix": prefix, "outputs": outputs, "single": single,
             "activation": activation, "output_activation": output_activation}
    return out, cache


def mlp_backward(cache, grad_out):
    """Parameter gradients {name: array} and the gradient with respect to the input."""
    params, prefix, outputs = cache["params"], cache["prefix"], cache["outputs"]
    depth = len(outputs) - 1
    grad = np.atleast_2d(np.asarray(grad_out, dtype=float))
    grads = {}
    for i in reversed(range(depth)):
        act = cache["output_activation"] if i == depth - 1 else cache["activation"]
        grad = grad * _activation_grad(act, outputs[i + 1])
        grads[f"{prefix}.w{i}"] = outputs[i].T @ grad
        grads[f"{prefix}.b{i}"] = grad.sum(axis=0)
        grad = grad @ params.view(f"{prefix}.w{i}").T
    return grads, (grad[0] if cache["single"] else grad)


def gru_shapes(input_size, hidden_size, prefix="gru"):
    shapes = {}
    for gate in GRU_GATES:
        shapes[f"{prefix}.W{gate}"] = (input_size, hidden_size)
        shapes[f"{prefix}.U{gate}"] = (hidden_size, hidden_size)
        shapes[f"{prefix}.b{gate}"] = (hidden_size,)
    return shapes


def gru_init(params, input_size, hidden_size, rng, prefix="gru"):
    for gate in GRU_GATES:
        params.view(f"{prefix}.W{gate}")[...] = orthogonal(rng, (input_size, hidden_size))
        params.view(f"{prefix}.U{gate}")[...] = orthogonal(rng, (hidden_size, hidden_size))
        params.view(f"{prefix}.b{gate}")[...] = 0.0


def gru_step(params, hidden, x, prefix="gru"):
    """One GRU step.

    z = σ(x Wz + h Uz + bz), r = σ(x Wr + h Ur + br)
    n = tanh(x Wn + (r ∘ h) Un + bn)
    h' = (1 − z) ∘ h + z ∘ n
    """
    p = params.views(prefix)
    x, single = _batch(x, p["Wz"].shape[0], f"GRU {prefix!r}")
    h, _ = _batch(hidden, p["Uz"].shape[0], f"GRU {prefix!r} hidden state")
    if h.shape[0] != x.shape[0]:
        raise ShapeError(f"GRU batch mismatch: input {x.shape[0]}, hidden {h.shape[0]}")
    z = expit(x @ p["Wz"] + h @ p["Uz"] + p["bz"])
    r = expit(x @ p["Wr"] + h @ p["Ur"] + p["br"])
    n = np.tanh(x @ p["Wn"] + (r * h) @ p["Un"] + p["bn"])
    new = (1.0 - z) * h + z * n
    cache = {"params": params, "prefix": prefix, "x": x, "h": h, "z": z, "r": r, "n": n, "single": single}
    return (new[0] if single else new), cache


def gru_step_backward(cache, grad_new):
    """Gradients of one step: ({name: array}, d hidden, d input)."""
    p = cache["params"].views(cache["prefix"])
    prefix = cache["prefix"]
    x, h, z, r, n = cache["x"], cache["h"], cache["z"], cache["r"], cache["n"]
    g = np.atleast_2d(np.asarray(grad_new, dtype=float))

    dz = g * (n - h) * z * (1.0 - z)
    dn = g * z * (1.0 - n**2)
    drh = dn @ p["Un"].T
    dr = drh * h * r * (1.0 - r)

    grads = {
        f"{prefix}.Wz": x.T @ dz,
        f"{prefix}.Uz": h.T @ dz,
        f"{prefix}.bz": dz.sum(axis=0),
        f"{prefix}.Wr": x.T @ dr,
        f"{prefix}.Ur": h.T @ dr,
        f"{prefix}.br": dr.sum(axis=0),
        f"{prefix}.Wn": x.T @ dn,
        f"{prefix}.Un": (r * h).T @ dn,
        f"{prefix}.bn": dn.sum(axis=0),
    }
    dh = g * (1.0 - z) + dz @ p["Uz"].T + dr @ p["Ur"].T + drh * r
    dx = dz @ p["Wz"].T + dr @ p["Wr"].T + dn @ p["Wn"].T
    if cache["single"]:
        return grads, dh[0], dx[0]
    return grads, dh, dx


def gru_sequence(params, hidden, inputs, prefix="gru"):
    """Run the GRU over inputs of shape (T, in) or (T, N, in); returns (hiddens, caches)."""
    hiddens, caches = [], []
    for x in inputs:
        hidden, cache = gru_step(params, hidden, x, prefix)
        hiddens.append(hidden)
        caches.append(cache)
    return np.stack(hiddens), caches


def gru_bptt(caches, grad_hiddens, grad_final=None):
    """Backpropagation through time.

    grad_hiddens[t] is the loss gradient arriving at the hidden state produced at
    step t from outside the recurrence. Returns ({name: array}, d initial hidden, d inputs).
    """
    total = {}
    carry = None if grad_final is None else np.asarray(grad_final, dtype=float)
    grad_inputs = [None] * len(caches)
    for t in reversed(range(len(caches))):
        g = np.asarray(grad_hiddens[t], dtype=float)
        if carry is not None:
            g = g + carry
        grads, carry, grad_inputs[t] = gru_step_backward(caches[t], g)
        for name, value in grads.items():
            total[name] = total[name] + value if name in total else value
    return total, carry, np.stack(grad_inputs)
