"""Audience-agent policy network.

A multilayer perceptron with three 128-unit tanh hidden layers and four
heads: continuous action mean, a state-independent continuous log-std,
discrete gesture logits, and a scalar value estimate. Forward and backward
passes are hand-rolled in float64 numpy, which keeps training bit-stable
and lets tests compare analytic gradients against finite differences.

Checkpoints use a flat binary layout (magic, version, named float32 arrays)
with a JSON sidecar carrying dimensions and training metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HIDDEN_WIDTHS = (128, 128, 128)
CONT_DIM = 2   # forward speed, turn rate
DISC_DIM = 4   # idle-gesture id
CHECKPOINT_MAGIC = b"SSIMPOL1"
CHECKPOINT_VERSION = 1

_LOG_2PI = float(np.log(2.0 * np.pi))


class PolicyError(Exception):
    pass


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == shape else vt
    return gain * q


@dataclass
class PolicyNetwork:
    obs_dim: int
    cont_dim: int = CONT_DIM
    disc_dim: int = DISC_DIM
    hidden: tuple[int, ...] = HIDDEN_WIDTHS
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, obs_dim: int, rng: np.random.Generator) -> "PolicyNetwork":
        net = cls(obs_dim)
        dims = (obs_dim, *net.hidden)
        p: dict[str, np.ndarray] = {}
        for i in range(len(net.hidden)):
            p[f"W{i}"] = _orthogonal(rng, (dims[i], dims[i + 1]), np.sqrt(2.0))
            p[f"b{i}"] = np.zeros(dims[i + 1])
        last = net.hidden[-1]
        p["W_mu"] = _orthogonal(rng, (last, net.cont_dim), 0.01)
        p["b_mu"] = np.zeros(net.cont_dim)
        p["log_std"] = np.zeros(net.cont_dim)
        p["W_logits"] = _orthogonal(rng, (last, net.disc_dim), 0.01)
        p["b_logits"] = np.zeros(net.disc_dim)
        p["W_v"] = _orthogonal(rng, (last, 1), 1.0)
        p["b_v"] = np.zeros(1)
        net.params = p
        return net

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(
            self.obs_dim,
            self.cont_dim,
            self.disc_dim,
            self.hidden,
            {k: v.copy() for k, v in self.params.items()},
        )

    # -- forward -----------------------------------------------------------

    def forward(self, obs: np.ndarray):
        """(mu, log_std, logits, value) for a (B, obs_dim) batch."""
        outs, _ = self._forward_cache(np.asarray(obs, dtype=np.float64))
        return outs

    def _forward_cache(self, obs: np.ndarray):
        x = obs if obs.ndim == 2 else obs[None, :]
        hs = [x]
        for i in range(len(self.hidden)):
            z = hs[-1] @ self.params[f"W{i}"] + self.params[f"b{i}"]
            hs.append(np.tanh(z))
        h = hs[-1]
        mu = h @ self.params["W_mu"] + self.params["b_mu"]
        logits = h @ self.params["W_logits"] + self.params["b_logits"]
        value = (h @ self.params["W_v"] + self.params["b_v"])[:, 0]
        log_std = np.broadcast_to(self.params["log_std"], mu.shape)
        return (mu, log_std, logits, value), hs

    def backward(
        self,
        hs: list[np.ndarray],
        d_mu: np.ndarray,
        d_log_std: np.ndarray,
        d_logits: np.ndarray,
        d_value: np.ndarray,
    ) -> dict[str, np.ndarray]:
        """Accumulate parameter gradients from upstream head gradients."""
        grads: dict[str, np.ndarray] = {}
        h = hs[-1]
        grads["W_mu"] = h.T @ d_mu
        grads["b_mu"] = d_mu.sum(axis=0)
        grads["log_std"] = d_log_std.sum(axis=0)
        grads["W_logits"] = h.T @ d_logits
        grads["b_logits"] = d_logits.sum(axis=0)
        dv = d_value[:, None]
        grads["W_v"] = h.T @ dv
        grads["b_v"] = dv.sum(axis=0)
        dh = (
            d_mu @ self.params["W_mu"].T
            + d_logits @ self.params["W_logits"].T
            + dv @ self.params["W_v"].T
        )
        for i in reversed(range(len(self.hidden))):
            dz = dh * (1.0 - hs[i + 1] ** 2)  # tanh'
            grads[f"W{i}"] = hs[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ self.params[f"W{i}"].T
        return grads

    # -- distributions -----------------------------------------------------

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample (cont_action, disc_action, logp, value) for a batch."""
        mu, log_std, logits, value = self.forward(obs)
        std = np.exp(log_std)
        cont = mu + std * rng.standard_normal(mu.shape)
        probs = _softmax(logits)
        u = rng.random(len(probs))
        disc = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
        disc = np.minimum(disc, self.disc_dim - 1)
        logp = self.log_prob(mu, log_std, logits, cont, disc)
        return cont, disc, logp, value

    def mean_action(self, obs: np.ndarray):
        """Greedy action: continuous mean and argmax gesture."""
        mu, _, logits, _ = self.forward(obs)
        return mu, logits.argmax(axis=1)

    @staticmethod
    def log_prob(mu, log_std, logits, cont, disc) -> np.ndarray:
        z = (cont - mu) / np.exp(log_std)
        logp_cont = (-0.5 * z**2 - log_std - 0.5 * _LOG_2PI).sum(axis=1)
        logp_disc = _log_softmax(logits)[np.arange(len(logits)), disc]
        return logp_cont + logp_disc

    @staticmethod
    def entropy(log_std, logits) -> np.ndarray:
        ent_cont = (log_std + 0.5 * (_LOG_2PI + 1.0)).sum(axis=1)
        logp = _log_softmax(logits)
        ent_disc = -(np.exp(logp) * logp).sum(axis=1)
        return ent_cont + ent_disc


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# checkpoint io


def save_policy(policy: PolicyNetwork, path: str | Path, meta: dict | None = None) -> None:
    """Write the flat binary checkpoint plus its JSON sidecar.

    Layout: magic, u32 version, u32 entry count, then per entry a u16
    name length, the utf-8 name, u8 ndim, u32 dims, and row-major float32
    data. The sidecar records dimensions and caller metadata.
    """
    path = Path(path)
    blob = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(policy.params))]
    for name in sorted(policy.params):
        arr = np.ascontiguousarray(policy.params[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        blob.append(struct.pack("<H", len(encoded)))
        blob.append(encoded)
        blob.append(struct.pack("<B", arr.ndim))
        blob.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blob.append(arr.tobytes())
    path.write_bytes(b"".join(blob))
    sidecar = {
        "obs_dim": policy.obs_dim,
        "cont_dim": policy.cont_dim,
        "disc_dim": policy.disc_dim,
        "hidden": list(policy.hidden),
        "meta": meta or {},
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_policy(path: str | Path) -> PolicyNetwork:
    path = Path(path)
    data = path.read_bytes()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise PolicyError(f"{path} is not a policy checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, count = struct.unpack_from("<II", data, off)
    if version != CHECKPOINT_VERSION:
        raise PolicyError(f"unsupported checkpoint version {version}")
    off += 8
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        params[name] = arr.astype(np.float64)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    net = PolicyNetwork(
        int(sidecar["obs_dim"]),
        int(sidecar["cont_dim"]),
        int(sidecar["disc_dim"]),
        tuple(sidecar["hidden"]),
        params,
    )
    return net
