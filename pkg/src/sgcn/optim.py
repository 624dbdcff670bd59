"""Adam with classic (gradient-side) L2 regularization."""
import numpy as np

from .errors import StateError


class Adam:
    """Adam with bias correction.

    ``weight_decay * theta`` is added to every gradient before the moment
    updates, i.e. plain L2 rather than decoupled decay.  ``m``, ``v`` and
    ``t`` form the optimizer state and are what gets saved on resume.
    """

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` (name -> ndarray, in place) from ``grads`` (name -> ndarray or None)."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, theta in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(theta)
            if g.shape != theta.shape:
                raise StateError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
            if self.weight_decay:
                g = g + self.weight_decay * theta
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(theta)
                self.v[name] = np.zeros_like(theta)
            v = self.v[name]
            if m.shape != theta.shape or v.shape != theta.shape:
                raise StateError(f"moment buffers for {name} have shape {m.shape}, parameter {theta.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            theta -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self):
        out = {}
        for name in self.m:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, t):
        self.m, self.v = {}, {}
        for key, arr in arrays.items():
            kind, _, name = key.partition(".")
            if kind == "m":
                self.m[name] = np.array(arr)
            elif kind == "v":
                self.v[name] = np.array(arr)
            else:
                raise StateError(f"unexpected optimizer entry {key!r}")
        if self.m.keys() != self.v.keys():
            raise StateError("first and second moment buffers name different parameters")
        self.t = int(t)


def adam_step(params, grads, state):
    """Functional spelling of :meth:`Adam.step`."""
    state.step(params, grads)
    return params, state
