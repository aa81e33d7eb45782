"""Policy/value network with hand-written backprop, plus RMSProp.

Layout: six 3x3 conv layers (NHWC) -> flatten ++ u -> three FC layers ->
LSTM -> {value head (1), policy head (4 logits)}, with the trunk shared by both
heads. Activations are ReLU by default; the desk preset uses tanh and puts a
layer norm in front of every FC layer and of the LSTM. Pixels are centred
around zero before the first convolution.

Everything is plain numpy; convolutions go through an im2col matmul.
"""
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import OBS_SIZE, U_DIM

N_ACTIONS = 4
CHECKPOINT_MAGIC = b"RTRGCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    conv_channels: tuple = (6, 16, 16, 32, 32, 64, 64)
    conv_strides: tuple = (1, 2, 1, 2, 1, 2)
    fc_sizes: tuple = (256, 256, 256)
    lstm_size: int = 128
    conv_activation: str = "relu"
    fc_activation: str = "relu"
    layer_norm: bool = False
    input_size: int = OBS_SIZE
    u_dim: int = U_DIM
    n_actions: int = N_ACTIONS

    def __post_init__(self):
        if len(self.conv_channels) != len(self.conv_strides) + 1:
            raise ValueError("conv_channels needs one more entry than conv_strides")
        for act in (self.conv_activation, self.fc_activation):
            if act not in ("relu", "tanh"):
                raise ValueError(f"activation must be relu or tanh, got {act!r}")

    @property
    def conv_spatial(self):
        s = self.input_size
        for stride in self.conv_strides:
            s = (s + 2 - 3) // stride + 1
        return s

    @property
    def trunk_dim(self):
        return self.conv_spatial ** 2 * self.conv_channels[-1]

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("conv_channels", "conv_strides", "fc_sizes"):
            d[k] = tuple(d[k])
        return cls(**d)


# desk scale: 5x5x64 = 1,600-dim trunk output. tanh units with layer norm at
# every FC input: with ReLU, RMSProp's sign-like steps push all fan-in weights
# of a unit the same way, activations grow batch over batch and the LSTM
# saturates into one image-independent policy.
DESK = NetConfig(conv_activation="tanh", fc_activation="tanh", layer_norm=True)
# paper scale: the last conv layer is 16x wider, giving 5x5x1024 = 25,600
PAPER = NetConfig(conv_channels=(6, 16, 16, 32, 32, 64, 1024),
                  fc_sizes=(1024, 1024, 1024), lstm_size=1024)
PRESETS = {"desk": DESK, "paper": PAPER}


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def entropy(p):
    """Natural-log entropy of the last axis; 0 log 0 is taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logp, axis=-1)


# -- layers ---------------------------------------------------------------------


def conv_forward(x, w, b, stride):
    """3x3 conv, padding 1. x: (N, H, W, C), w: (O, C, 3, 3)."""
    n, h, wd, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ho = (h + 2 - 3) // stride + 1
    wo = (wd + 2 - 3) // stride + 1
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    cols = win[:, :ho, :wo].reshape(n * ho * wo, c * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(n, ho, wo, w.shape[0]), cols


def conv_backward(dout, cols, x_shape, w, stride):
    n, h, wd, c = x_shape
    _, ho, wo, o = dout.shape
    dflat = dout.reshape(-1, o)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(o, -1)).reshape(n, ho, wo, c, 3, 3)
    dxp = np.zeros((n, h + 2, wd + 2, c), dtype=dout.dtype)
    for ki in range(3):
        for kj in range(3):
            dxp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride, :] += dcols[..., ki, kj]
    return dxp[:, 1:-1, 1:-1, :], dw, db


@dataclass
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, batch, size, dtype=np.float32):
        return cls(np.zeros((batch, size), dtype), np.zeros((batch, size), dtype))

    def take(self, idx):
        return LstmState(self.hidden[idx], self.cell[idx])


def lstm_step(x, h, c, wx, wh, b):
    z = x @ wx + h @ wh + b
    n = h.shape[1]
    i = sigmoid(z[:, :n])
    f = sigmoid(z[:, n:2 * n])
    g = np.tanh(z[:, 2 * n:3 * n])
    o = sigmoid(z[:, 3 * n:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, g, o, tc)


def lstm_step_backward(dh, dc, cache, wx, wh):
    x, h, c, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                         dg * (1 - g * g), do * o * (1 - o)], axis=1)
    return dz @ wx.T, dz @ wh.T, dc * f, x.T @ dz, h.T @ dz, dz.sum(axis=0)


# -- network --------------------------------------------------------------------


@dataclass
class Forward:
    """Sequence forward pass results plus what backprop needs."""
    logits: np.ndarray          # (T, N, 4)
    values: np.ndarray          # (T, N)
    state: LstmState
    cache: dict = field(default=None, repr=False)

    @property
    def policy(self):
        return softmax(self.logits)


def layer_norm(x, eps=1e-5):
    """Parameter-free normalisation over the last axis. Returns (y, inv_std)."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    return xc * inv, inv


def layer_norm_backward(dy, y, inv):
    return inv * (dy - dy.mean(axis=-1, keepdims=True)
                  - y * (dy * y).mean(axis=-1, keepdims=True))


class PolicyValueNet:

    def __init__(self, config=DESK, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params = self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        cfg = self.config
        dt = self.dtype
        p = {}

        def uniform(shape, fan_in, gain=np.sqrt(6.0)):
            lim = gain / np.sqrt(fan_in)
            return rng.uniform(-lim, lim, size=shape).astype(dt)

        # He-uniform ahead of ReLU, LeCun-uniform ahead of tanh
        gain = {"relu": np.sqrt(6.0), "tanh": np.sqrt(3.0)}
        ch = cfg.conv_channels
        for k in range(len(cfg.conv_strides)):
            p[f"conv{k}.w"] = uniform((ch[k + 1], ch[k], 3, 3), ch[k] * 9,
                                     gain[cfg.conv_activation])
            p[f"conv{k}.b"] = np.zeros(ch[k + 1], dt)
        prev = cfg.trunk_dim + cfg.u_dim
        for k, size in enumerate(cfg.fc_sizes):
            p[f"fc{k}.w"] = uniform((prev, size), prev, gain[cfg.fc_activation])
            p[f"fc{k}.b"] = np.zeros(size, dt)
            prev = size
        n = cfg.lstm_size
        p["lstm.wx"] = uniform((prev, 4 * n), n, gain=1.0)
        p["lstm.wh"] = uniform((n, 4 * n), n, gain=1.0)
        b = np.zeros(4 * n, dt)
        b[n:2 * n] = 1.0  # forget gate
        p["lstm.b"] = b
        p["value.w"] = uniform((n, 1), n, gain=1.0)
        p["value.b"] = np.zeros(1, dt)
        p["policy.w"] = uniform((n, cfg.n_actions), n, gain=0.01)
        p["policy.b"] = np.zeros(cfg.n_actions, dt)
        return p

    def initial_state(self, batch):
        return LstmState.zeros(batch, self.config.lstm_size, self.dtype)

    def n_params(self):
        return sum(v.size for v in self.params.values())

    # forward ---------------------------------------------------------------

    @staticmethod
    def _act(y, kind):
        """Activation and its derivative (as a multiplier for backprop)."""
        if kind == "tanh":
            a = np.tanh(y)
            return a, 1 - a * a
        return np.maximum(y, 0), (y > 0).astype(y.dtype)

    def _trunk(self, pixels, u, keep):
        p = self.params
        cfg = self.config
        x = pixels.astype(self.dtype, copy=False) - self.dtype.type(0.5)
        convs = []
        for k, stride in enumerate(cfg.conv_strides):
            y, cols = conv_forward(x, p[f"conv{k}.w"], p[f"conv{k}.b"], stride)
            a, d = self._act(y, cfg.conv_activation)
            if keep:
                convs.append((x.shape, cols, d))
            x = a
        x = x.reshape(len(x), -1)
        u = u.astype(self.dtype, copy=False)
        fcs = []
        for k in range(len(cfg.fc_sizes)):
            norm = None
            if cfg.layer_norm:
                x, inv = layer_norm(x)
                norm = (x, inv)
            if k == 0:
                x = np.concatenate([x, u], axis=1)
            y = x @ p[f"fc{k}.w"] + p[f"fc{k}.b"]
            a, d = self._act(y, cfg.fc_activation)
            if keep:
                fcs.append((x, d, norm))
            x = a
        norm = None
        if cfg.layer_norm:
            x, inv = layer_norm(x)
            norm = (x, inv)
        return x, convs, (fcs, norm)

    def forward_sequence(self, pixels, u, state=None, keep_cache=False):
        """pixels (T, N, 40, 40, 6), u (T, N, 20) -> :class:`Forward`."""
        t_len, n = pixels.shape[:2]
        p = self.params
        feats, convs, fcs = self._trunk(pixels.reshape((t_len * n,) + pixels.shape[2:]),
                                        u.reshape(t_len * n, -1), keep_cache)
        feats = feats.reshape(t_len, n, -1)
        if state is None:
            state = self.initial_state(n)
        h, c = state.hidden, state.cell
        hs, steps = [], []
        for t in range(t_len):
            h, c, cache = lstm_step(feats[t], h, c, p["lstm.wx"], p["lstm.wh"], p["lstm.b"])
            hs.append(h)
            if keep_cache:
                steps.append(cache)
        hs = np.stack(hs)
        values = (hs @ p["value.w"] + p["value.b"])[..., 0]
        logits = hs @ p["policy.w"] + p["policy.b"]
        cache = None
        if keep_cache:
            cache = {"convs": convs, "fcs": fcs, "lstm": steps, "hs": hs}
        return Forward(logits, values, LstmState(h, c), cache)

    def forward(self, pixels, u, state):
        """One step for a batch: returns (policy (N, 4), value (N,), next state)."""
        out = self.forward_sequence(pixels[None], u[None], state)
        return out.policy[0], out.values[0], out.state

    def forward_obs(self, obs, state):
        """Single :class:`Observation` convenience wrapper."""
        pol, val, nxt = self.forward(obs.pixels[None], obs.u[None], state)
        return pol[0], val[0], nxt

    # loss / backward ---------------------------------------------------------

    def loss_and_grads(self, pixels, u, actions, returns, weights, beta, state=None):
        """Weighted actor-critic loss over trajectories and its gradient.

        Per step: w * (-log pi(a) * (R - V) - beta * H(pi) + (R - V)^2 / 2),
        with the advantage held constant inside the policy term. Returns
        ``(stats, grads)``.
        """
        fwd = self.forward_sequence(pixels, u, state, keep_cache=True)
        p = self.params
        cfg = self.config
        dt = self.dtype
        returns = np.asarray(returns, dtype=dt)
        weights = np.asarray(weights, dtype=dt)
        actions = np.asarray(actions)
        t_len, n = actions.shape

        logp = log_softmax(fwd.logits)
        prob = np.exp(logp)
        ent = -np.sum(prob * logp, axis=-1)
        values = fwd.values
        adv = returns - values
        logp_a = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
        loss_pi = np.sum(weights * (-logp_a * adv - beta * ent), dtype=np.float64)
        loss_v = np.sum(weights * 0.5 * adv * adv, dtype=np.float64)
        if not (np.isfinite(loss_pi) and np.isfinite(loss_v)):
            raise FloatingPointError("non-finite loss")

        onehot = np.eye(cfg.n_actions, dtype=dt)[actions]
        dlogits = weights[..., None] * (-adv[..., None] * (onehot - prob)
                                        + beta * prob * (logp + ent[..., None]))
        dvalues = weights * (values - returns)

        g = {k: np.zeros_like(v) for k, v in self.params.items()}
        hs = fwd.cache["hs"]
        g["policy.w"] = np.einsum("tnh,tna->ha", hs, dlogits)
        g["policy.b"] = dlogits.sum(axis=(0, 1))
        g["value.w"] = np.einsum("tnh,tn->h", hs, dvalues)[:, None]
        g["value.b"] = np.array([dvalues.sum()], dtype=dt)
        dh_all = dlogits @ p["policy.w"].T + dvalues[..., None] * p["value.w"][:, 0]

        dfeats = np.empty((t_len, n, p["lstm.wx"].shape[0]), dtype=dt)
        dh_next = np.zeros((n, cfg.lstm_size), dt)
        dc_next = np.zeros((n, cfg.lstm_size), dt)
        for t in range(t_len - 1, -1, -1):
            dx, dh_next, dc_next, dwx, dwh, db = lstm_step_backward(
                dh_all[t] + dh_next, dc_next, fwd.cache["lstm"][t], p["lstm.wx"], p["lstm.wh"])
            dfeats[t] = dx
            g["lstm.wx"] += dwx
            g["lstm.wh"] += dwh
            g["lstm.b"] += db

        dx = dfeats.reshape(t_len * n, -1)
        fcs, norm = fwd.cache["fcs"]
        if norm is not None:
            dx = layer_norm_backward(dx, *norm)
        for k in range(len(cfg.fc_sizes) - 1, -1, -1):
            x_in, deriv, norm = fcs[k]
            dy = dx * deriv
            g[f"fc{k}.w"] = x_in.T @ dy
            g[f"fc{k}.b"] = dy.sum(axis=0)
            dx = dy @ p[f"fc{k}.w"].T
            if k == 0:
                dx = dx[:, :cfg.trunk_dim]
            if norm is not None:
                dx = layer_norm_backward(dx, *norm)
        s = cfg.conv_spatial
        dx = dx.reshape(t_len * n, s, s, cfg.conv_channels[-1])
        for k in range(len(cfg.conv_strides) - 1, -1, -1):
            x_shape, cols, deriv = fwd.cache["convs"][k]
            dx, dw, db = conv_backward(dx * deriv, cols, x_shape, p[f"conv{k}.w"],
                                       cfg.conv_strides[k])
            g[f"conv{k}.w"] = dw
            g[f"conv{k}.b"] = db

        stats = {
            "loss_pi": float(loss_pi),
            "loss_v": float(loss_v),
            "mean_entropy": float(np.mean(ent)),
        }
        return stats, g

    def loss(self, pixels, u, actions, returns, weights, beta, state=None, advantage=None):
        """Scalar loss only (float64 accumulation); used by the gradient check.

        ``advantage`` freezes R - V inside the policy term, which is what
        :meth:`loss_and_grads` differentiates; without it the policy term
        also depends on V through the advantage.
        """
        fwd = self.forward_sequence(pixels, u, state)
        logp = log_softmax(fwd.logits).astype(np.float64)
        ent = -np.sum(np.exp(logp) * logp, axis=-1)
        err = np.asarray(returns, np.float64) - fwd.values
        adv = err if advantage is None else np.asarray(advantage, np.float64)
        logp_a = np.take_along_axis(logp, np.asarray(actions)[..., None], axis=-1)[..., 0]
        w = np.asarray(weights, np.float64)
        return float(np.sum(w * (-logp_a * adv - beta * ent + 0.5 * err * err)))

    def advantage(self, pixels, u, returns, state=None):
        return np.asarray(returns, np.float64) - self.forward_sequence(pixels, u, state).values


class RMSProp:
    """m <- decay m + (1 - decay) g^2;  p <- p - lr g / (sqrt(m) + eps)."""

    def __init__(self, params, lr=7e-4, decay=0.99, eps=1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.moments = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        for k, g in grads.items():
            m = self.moments[k]
            m *= self.decay
            m += (1 - self.decay) * g * g
            params[k] -= self.lr * g / (np.sqrt(m) + self.eps)


def rmsprop_update(params, grads, moments, lr, decay, eps):
    """Functional form of one RMSProp step; returns new (params, moments)."""
    new_p, new_m = {}, {}
    for k, p in params.items():
        g = grads[k]
        m = decay * moments[k] + (1 - decay) * g * g
        new_m[k] = m
        new_p[k] = p - lr * g / (np.sqrt(m) + eps)
    return new_p, new_m


# -- checkpoints ------------------------------------------------------------------
#
# Layout (all integers little-endian):
#   8 bytes  magic  b"RTRGCKPT"
#   u32      format version
#   u32      header length L
#   L bytes  UTF-8 JSON header: {"config", "dtype", "meta", "tensors": [
#              {"name", "group": "param"|"rmsprop", "shape", "offset", "nbytes"}]}
#   ...      raw little-endian tensor buffers at the listed offsets (relative
#            to the end of the header)


def save_checkpoint(path, net, optimizer=None, meta=None):
    dt = net.dtype.newbyteorder("<")
    tensors, blobs, offset = [], [], 0
    groups = [("param", net.params)]
    if optimizer is not None:
        groups.append(("rmsprop", optimizer.moments))
    for group, arrays in groups:
        for name in sorted(arrays):
            buf = np.ascontiguousarray(arrays[name], dtype=dt).tobytes()
            tensors.append({"name": name, "group": group, "shape": list(arrays[name].shape),
                            "offset": offset, "nbytes": len(buf)})
            blobs.append(buf)
            offset += len(buf)
    header = {
        "config": asdict(net.config),
        "dtype": dt.str,
        "meta": meta or {},
        "tensors": tensors,
    }
    if optimizer is not None:
        header["rmsprop"] = {"lr": optimizer.lr, "decay": optimizer.decay, "eps": optimizer.eps}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)))
        f.write(hbytes)
        for buf in blobs:
            f.write(buf)


def load_checkpoint(path):
    """Returns ``(net, optimizer_or_None, meta)``."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    body = memoryview(data)[16 + hlen:]
    dt = np.dtype(header["dtype"])
    net = PolicyValueNet.__new__(PolicyValueNet)
    net.config = NetConfig.from_dict(header["config"])
    net.dtype = np.dtype(dt.name)
    arrays = {"param": {}, "rmsprop": {}}
    for t in header["tensors"]:
        raw = body[t["offset"]:t["offset"] + t["nbytes"]]
        arr = np.frombuffer(raw, dtype=dt).reshape(t["shape"]).astype(net.dtype)
        arrays[t["group"]][t["name"]] = arr
    net.params = arrays["param"]
    opt = None
    if "rmsprop" in header:
        h = header["rmsprop"]
        opt = RMSProp(net.params, lr=h["lr"], decay=h["decay"], eps=h["eps"])
        opt.moments.update(arrays["rmsprop"])
    return net, opt, header["meta"]
