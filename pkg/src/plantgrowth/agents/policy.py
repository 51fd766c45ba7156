"""Gaussian MLP policy with a shared value head, written in plain numpy."""
from __future__ import annotations

import json
import math

import numpy as np

from ..ingest import ENV_FIELDS

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)
OBS_DIM = 3 + len(ENV_FIELDS)
ACT_DIM = len(ENV_FIELDS)
POLICY_VERSION = 1


class MLP:
    """tanh trunk feeding a linear head of ``2 * act_dim + 1`` outputs.

    Output columns are ``[mean (act_dim) | log_std (act_dim) | value]``.
    """

    def __init__(self, sizes, params=None, seed=0):
        self.sizes = tuple(int(s) for s in sizes)
        self.shapes = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.shapes += [(a, b), (b,)]
        n = sum(int(np.prod(s)) for s in self.shapes)
        if params is None:
            params = self._init(seed)
        self.params = np.asarray(params, dtype=float)
        if self.params.size != n:
            raise ValueError(f"expected {n} parameters, got {self.params.size}")

    def _init(self, seed):
        rng = np.random.default_rng(seed)
        chunks = []
        n_layers = len(self.sizes) - 1
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = 0.01 if i == n_layers - 1 else 1.0
            chunks.append((rng.standard_normal((a, b)) * gain / math.sqrt(a)).ravel())
            chunks.append(np.zeros(b))
        return np.concatenate(chunks)

    def layers(self, params=None):
        params = self.params if params is None else params
        out, pos = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            out.append(params[pos:pos + size].reshape(shape))
            pos += size
        return [(out[i], out[i + 1]) for i in range(0, len(out), 2)]

    def forward(self, x, params=None):
        """Outputs and the per-layer inputs needed by :meth:`backward`."""
        acts = [x]
        h = x
        layers = self.layers(params)
        for i, (w, b) in enumerate(layers):
            h = h @ w + b
            if i < len(layers) - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out, params=None):
        """Gradient of ``sum(grad_out * output)`` w.r.t. the flat parameters."""
        layers = self.layers(params)
        grads = []
        g = grad_out
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            grads.append((acts[i].T @ g, g.sum(axis=0)))
            if i > 0:
                g = (g @ w.T) * (1.0 - acts[i] ** 2)
        flat = []
        for gw, gb in reversed(grads):
            flat += [gw.ravel(), gb.ravel()]
        return np.concatenate(flat)


def gaussian_logp(actions, mean, log_std):
    z = (actions - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


class Policy:
    """Stochastic policy over standardised environment setpoints.

    Observations are ``(day, cc, k, last_env...)`` standardised with
    ``obs_mean``/``obs_sd``. Actions are produced in units of the training
    environment's standard deviation around its mean and mapped back to raw
    setpoints with ``stats``.
    """

    def __init__(self, net: MLP, obs_mean, obs_sd, act_mean, act_scale):
        self.net = net
        self.obs_mean = np.asarray(obs_mean, dtype=float)
        self.obs_sd = np.asarray(obs_sd, dtype=float)
        self.act_mean = np.asarray(act_mean, dtype=float)
        self.act_scale = np.asarray(act_scale, dtype=float)

    @classmethod
    def create(cls, stats, horizon, k_scale, hidden=(32, 32), seed=0, log_std_init=-0.5):
        net = MLP((OBS_DIM, *hidden, 2 * ACT_DIM + 1), seed=seed)
        # start with a moderate exploration noise
        last_b = net.layers()[-1][1]
        last_b[ACT_DIM:2 * ACT_DIM] = log_std_init
        env_sd = np.where(stats.sd > 0, stats.sd, 1.0)
        obs_mean = np.concatenate([[horizon / 2.0, 0.5, k_scale / 2.0], stats.mean])
        obs_sd = np.concatenate([[horizon / 2.0, 0.5, k_scale / 2.0], env_sd])
        return cls(net, obs_mean, obs_sd, stats.mean, stats.sd)

    def observe(self, state) -> np.ndarray:
        raw = np.concatenate([[state.day, state.cc, state.k], state.last_env])
        return (raw - self.obs_mean) / self.obs_sd

    def heads(self, obs, params=None):
        out, acts = self.net.forward(np.atleast_2d(obs), params)
        mean = out[:, :ACT_DIM]
        log_std = np.clip(out[:, ACT_DIM:2 * ACT_DIM], LOG_STD_MIN, LOG_STD_MAX)
        value = out[:, -1]
        return mean, log_std, value, out, acts

    def to_setpoint(self, a) -> np.ndarray:
        return self.act_mean + self.act_scale * a

    def sample(self, obs, rng):
        """Draw a standardised action; returns ``(action, logp, value)``."""
        mean, log_std, value, _, _ = self.heads(obs)
        a = mean[0] + np.exp(log_std[0]) * rng.standard_normal(ACT_DIM)
        return a, float(gaussian_logp(a, mean[0], log_std[0])), float(value[0])

    def strategy(self, stats, deterministic=True):
        """State -> raw setpoint callable for the simulator."""
        def act(state, rng):
            obs = self.observe(state)
            if deterministic:
                a = self.heads(obs)[0][0]
            else:
                a = self.sample(obs, rng)[0]
            return stats.clamp(self.to_setpoint(a))
        act.name = "policy"
        return act

    def to_dict(self) -> dict:
        return {
            "version": POLICY_VERSION,
            "layer_sizes": list(self.net.sizes),
            "layer_shapes": [list(s) for s in self.net.shapes],
            "params": self.net.params.tolist(),
            "obs_mean": self.obs_mean.tolist(),
            "obs_sd": self.obs_sd.tolist(),
            "act_mean": self.act_mean.tolist(),
            "act_scale": self.act_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Policy":
        if obj.get("version") != POLICY_VERSION:
            raise ValueError(f"unsupported policy artifact version {obj.get('version')!r}")
        net = MLP(obj["layer_sizes"], params=obj["params"])
        return cls(net, obj["obs_mean"], obj["obs_sd"], obj["act_mean"], obj["act_scale"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Policy":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
