import numpy as np

from dynreg.exceptions import ShapeError

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


def adam_step(params, grads, m, v, t, lr, betas=DEFAULT_BETAS, eps=DEFAULT_EPS):
    """One bias-corrected Adam step (t counts from 1) minimizing the loss whose gradient is `grads`.

    Returns (params, m, v) as new arrays.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if grads.shape != params.shape:
        raise ShapeError(f"gradient shape {grads.shape} does not match parameter shape {params.shape}")
    beta1, beta2 = betas
    m = beta1 * m + (1.0 - beta1) * grads
    v = beta2 * v + (1.0 - beta2) * grads**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Adam state for one PolicyParams; `step` updates params.flat in place."""

    def __init__(self, size, lr, betas=DEFAULT_BETAS, eps=DEFAULT_EPS, max_grad_norm=None):
        self.lr = float(lr)
        self.betas = tuple(betas)
        self.eps = float(eps)
        self.max_grad_norm = max_grad_norm
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grads):
        grads = np.asarray(grads, dtype=float)
        if self.max_grad_norm is not None:
            norm = np.linalg.norm(grads)
            if norm > self.max_grad_norm:
                grads = grads * (self.max_grad_norm / norm)
        self.t += 1
        params.flat[...], self.m, self.v = adam_step(
            params.flat, grads, self.m, self.v, self.t, self.lr, self.betas, self.eps
        )
        return params

    def state(self):
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t, "lr": self.lr}

    def load_state(self, state):
        m, v = np.asarray(state["m"], dtype=float), np.asarray(state["v"], dtype=float)
        if m.shape != self.m.shape or v.shape != self.v.shape:
            raise ShapeError(f"optimizer moments have shape {m.shape}, expected {self.m.shape}")
        self.m, self.v, self.t = m.copy(), v.copy(), int(state["t"])
