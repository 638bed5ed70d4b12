"""AdamW with decoupled weight decay.

The decay multiplies parameters by (1 - lr*wd) independently of the
adaptive step, so it never passes through the moment estimates.  Moments
are bias-corrected.  A step with any non-finite gradient is rejected as
a whole, before touching any parameter.
"""

import numpy as np


def adamw_step(param, grad, m, v, t, lr, weight_decay, beta1, beta2, eps):
    """Apply one update in place to param/m/v arrays; t is the 1-based step."""
    param -= lr * weight_decay * param
    m[...] = beta1 * m + (1.0 - beta1) * grad
    v[...] = beta2 * v + (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    def __init__(self, params, lr=5e-4, weight_decay=3e-6, betas=(0.9, 0.999), eps=1e-8):
        """params: dict of name -> Tensor with requires_grad set."""
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise ValueError(f"non-finite gradient for '{name}'; step rejected")
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            adamw_step(
                p.data, p.grad, self.m[name], self.v[name], self.t,
                self.lr, self.weight_decay, self.beta1, self.beta2, self.eps,
            )

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict:
        """Flat name -> array mapping, for the checkpoint writer."""
        out = {"opt/t": np.asarray(float(self.t), dtype=np.float32)}
        for name in self.params:
            out[f"opt/m/{name}"] = self.m[name]
            out[f"opt/v/{name}"] = self.v[name]
        return out

    def load_state_dict(self, state: dict):
        self.t = int(state["opt/t"])
        for name in self.params:
            self.m[name] = np.array(state[f"opt/m/{name}"], dtype=np.float32)
            self.v[name] = np.array(state[f"opt/v/{name}"], dtype=np.float32)
