"""Heteroscedastic residual MLP on z = log(1 + delta_E).

Pure numpy, float64, hand-written reverse mode. The network embeds the
normalized features (Linear -> SiLU -> dropout), applies post-norm residual
FFN blocks, and reads a mean and a clamped log-variance from two linear
heads. Training minimizes Gaussian NLL with AdamW and keeps the epoch with
the lowest validation NLL.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FEATURE_NAMES, NormalizationStats

CHECKPOINT_MAGIC = b"SKYRESERVE-CKPT\n"
CHECKPOINT_VERSION = 1
LN_EPS = 1e-5


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 13
    hidden_dim: int = 128
    n_blocks: int = 4
    ffn_inner_dim: int = 256
    dropout: float = 0.05
    logvar_min: float = -8.0
    logvar_max: float = 3.0

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.n_blocks, self.ffn_inner_dim) < 1:
            raise ValueError("network dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.logvar_min < self.logvar_max:
            raise ValueError("log-variance clamp must satisfy min < max")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    grad_clip: float = 1.0
    epochs: int = 300
    patience: int | None = 50
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class GaussianPrediction:
    mu_z: float
    sigma_z2: float


# -- parameters -------------------------------------------------------------

def param_shapes(cfg: NetConfig) -> dict:
    d, d0, inner = cfg.hidden_dim, cfg.input_dim, cfg.ffn_inner_dim
    shapes = {"embed.W": (d, d0), "embed.b": (d,)}
    for k in range(cfg.n_blocks):
        shapes.update({
            f"block{k}.W1": (inner, d), f"block{k}.b1": (inner,),
            f"block{k}.W2": (d, inner), f"block{k}.b2": (d,),
            f"block{k}.ln_g": (d,), f"block{k}.ln_b": (d,),
        })
    shapes.update({"head_mu.w": (d,), "head_mu.b": (), "head_logvar.w": (d,), "head_logvar.b": ()})
    return shapes


def decays(name: str) -> bool:
    """Weight decay applies to weight matrices and head weights only."""
    return name.endswith((".W", ".W1", ".W2", ".w"))


def init_params(cfg: NetConfig, rng) -> dict:
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith((".W", ".W1", ".W2")):
            fan_out, fan_in = shape
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-lim, lim, shape)
        elif name.endswith(".ln_g"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    params["head_logvar.b"] = np.array(-2.0)
    return params


def zero_params(cfg: NetConfig) -> dict:
    return {name: np.zeros(shape) for name, shape in param_shapes(cfg).items()}


# -- forward / backward ----------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _silu(x):
    return x * _sigmoid(x)


def _silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _dropout_mask(rng, shape, p):
    if p <= 0.0 or rng is None:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def forward(params: dict, cfg: NetConfig, x, training: bool = False, rng=None, cache: bool = False):
    """Return ``(mu_z, log_var)`` for a batch, plus the cache if requested.

    Dropout is active only when ``training`` and an ``rng`` is given.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != cfg.input_dim:
        raise ValueError(f"expected {cfg.input_dim} features, got {x.shape[1]}")
    drop_rng = rng if training else None
    c = {"x": x, "blocks": []}
    a0 = x @ params["embed.W"].T + params["embed.b"]
    h = _silu(a0)
    m0 = _dropout_mask(drop_rng, h.shape, cfg.dropout)
    if m0 is not None:
        h = h * m0
    c["a0"], c["m0"] = a0, m0
    for k in range(cfg.n_blocks):
        u = h @ params[f"block{k}.W1"].T + params[f"block{k}.b1"]
        s = _silu(u)
        f = s @ params[f"block{k}.W2"].T + params[f"block{k}.b2"]
        m = _dropout_mask(drop_rng, f.shape, cfg.dropout)
        if m is not None:
            f = f * m
        r = h + f
        mean = r.mean(axis=1, keepdims=True)
        var = r.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LN_EPS)
        xhat = (r - mean) * inv_std
        c["blocks"].append({"h_in": h, "u": u, "s": s, "m": m, "xhat": xhat, "inv_std": inv_std})
        h = xhat * params[f"block{k}.ln_g"] + params[f"block{k}.ln_b"]
    mu = h @ params["head_mu.w"] + params["head_mu.b"]
    raw = h @ params["head_logvar.w"] + params["head_logvar.b"]
    log_var = np.clip(raw, cfg.logvar_min, cfg.logvar_max)
    c["h_last"], c["raw"] = h, raw
    if single:
        mu, log_var = mu[0], log_var[0]
    if cache:
        return mu, log_var, c
    return mu, log_var


def nll_loss(mu, log_var, z) -> float:
    """Mean of 0.5 * (log sigma^2 + (z - mu)^2 / sigma^2); the log(2 pi) term is dropped."""
    mu, log_var, z = (np.asarray(a, dtype=float) for a in (mu, log_var, z))
    if mu.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(0.5 * (log_var + (z - mu) ** 2 * np.exp(-log_var))))


def backward(params: dict, cfg: NetConfig, cache: dict, mu, log_var, z) -> dict:
    """Gradients of ``nll_loss`` with respect to every parameter."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    inv_var = np.exp(-log_var)
    resid = z - mu
    d_mu = -resid * inv_var / n
    d_lv = 0.5 * (1.0 - resid ** 2 * inv_var) / n
    raw = cache["raw"]
    d_raw = d_lv * ((raw > cfg.logvar_min) & (raw < cfg.logvar_max))

    g = {}
    h = cache["h_last"]
    g["head_mu.w"] = h.T @ d_mu
    g["head_mu.b"] = np.array(d_mu.sum())
    g["head_logvar.w"] = h.T @ d_raw
    g["head_logvar.b"] = np.array(d_raw.sum())
    dh = np.outer(d_mu, params["head_mu.w"]) + np.outer(d_raw, params["head_logvar.w"])

    for k in reversed(range(cfg.n_blocks)):
        b = cache["blocks"][k]
        xhat = b["xhat"]
        g[f"block{k}.ln_g"] = (dh * xhat).sum(axis=0)
        g[f"block{k}.ln_b"] = dh.sum(axis=0)
        dxhat = dh * params[f"block{k}.ln_g"]
        dr = b["inv_std"] * (dxhat - dxhat.mean(axis=1, keepdims=True)
                             - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        df = dr if b["m"] is None else dr * b["m"]
        g[f"block{k}.b2"] = df.sum(axis=0)
        g[f"block{k}.W2"] = df.T @ b["s"]
        du = (df @ params[f"block{k}.W2"]) * _silu_grad(b["u"])
        g[f"block{k}.b1"] = du.sum(axis=0)
        g[f"block{k}.W1"] = du.T @ b["h_in"]
        dh = dr + du @ params[f"block{k}.W1"]

    if cache["m0"] is not None:
        dh = dh * cache["m0"]
    da0 = dh * _silu_grad(cache["a0"])
    g["embed.W"] = da0.T @ cache["x"]
    g["embed.b"] = da0.sum(axis=0)
    return g


def loss_and_grad(params, cfg, x, z, training=False, rng=None):
    mu, lv, cache = forward(params, cfg, x, training, rng, cache=True)
    return nll_loss(mu, lv, z), backward(params, cfg, cache, mu, lv, z)


# -- optimizer --------------------------------------------------------------

def clip_grad_norm(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(gv * gv)) for gv in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


class AdamW:
    """Adam with decoupled weight decay on the names selected by ``decays``."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in params:
            gk = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * gk
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * gk * gk
            if decays(k):
                params[k] = params[k] * (1.0 - c.lr * c.weight_decay)
            params[k] = params[k] - c.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


# -- training ---------------------------------------------------------------

def to_z(delta_e):
    return np.log1p(np.asarray(delta_e, dtype=float))


def from_z(z):
    return np.expm1(np.asarray(z, dtype=float))


def split_indices(n: int, val_fraction: float, seed: int):
    perm = np.random.default_rng([seed, 1]).permutation(n)
    n_val = int(round(val_fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def data_digest(x, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class Checkpoint:
    netcfg: NetConfig
    traincfg: TrainConfig
    params: dict
    stats: NormalizationStats
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_nll: float = float("nan")
    n_rows: int = 0
    digest: str = ""

    def predict_z(self, x_raw):
        """``(mu_z, sigma_z2)`` arrays for raw (un-normalized) feature rows."""
        xn = self.stats.apply(np.atleast_2d(np.asarray(x_raw, dtype=float)))
        mu, lv = forward(self.params, self.netcfg, xn)
        return mu, np.exp(lv)

    def predict(self, x_raw) -> GaussianPrediction:
        mu, s2 = self.predict_z(x_raw)
        return GaussianPrediction(float(mu[0]), float(s2[0]))

    def validation_rows(self, n: int):
        _, val = split_indices(n, self.traincfg.val_fraction, self.traincfg.seed)
        return val


def _val_nll(params, cfg, x, z, chunk=4096):
    total = 0.0
    for s in range(0, x.shape[0], chunk):
        mu, lv = forward(params, cfg, x[s:s + chunk])
        total += float(np.sum(0.5 * (lv + (z[s:s + chunk] - mu) ** 2 * np.exp(-lv))))
    return total / x.shape[0]


def train(x_raw, delta_e, netcfg: NetConfig | None = None, traincfg: TrainConfig | None = None,
          progress=None) -> Checkpoint:
    """Fit the network on raw feature rows and observed overheads.

    ``netcfg.input_dim`` is overwritten with the number of features that
    survive normalization. ``progress`` is called as ``progress(epoch, train_nll, val_nll)``.
    """
    traincfg = traincfg or TrainConfig()
    netcfg = netcfg or NetConfig()
    x_raw = np.asarray(x_raw, dtype=float)
    y = np.asarray(delta_e, dtype=float)
    if x_raw.shape[0] != y.shape[0]:
        raise ValueError("feature and label counts differ")
    if x_raw.shape[0] < 1000:
        import warnings
        warnings.warn(f"training on only {x_raw.shape[0]} records", stacklevel=2)
    z = to_z(y)
    tr, va = split_indices(x_raw.shape[0], traincfg.val_fraction, traincfg.seed)
    stats = NormalizationStats.fit(x_raw[tr])
    netcfg = NetConfig(**{**asdict(netcfg), "input_dim": stats.dim})
    xt, zt = stats.apply(x_raw[tr]), z[tr]
    xv, zv = stats.apply(x_raw[va]), z[va]

    params = init_params(netcfg, np.random.default_rng([traincfg.seed, 2]))
    rng = np.random.default_rng([traincfg.seed, 3])
    opt = AdamW(params, traincfg)

    best = {k: v.copy() for k, v in params.items()}
    best_nll = _val_nll(params, netcfg, xv, zv)
    best_epoch = 0
    log = [{"epoch": 0, "train_nll": float("nan"), "val_nll": best_nll}]
    for epoch in range(1, traincfg.epochs + 1):
        order = rng.permutation(xt.shape[0])
        tot, cnt = 0.0, 0
        for s in range(0, order.size, traincfg.batch_size):
            b = order[s:s + traincfg.batch_size]
            loss, grads = loss_and_grad(params, netcfg, xt[b], zt[b], training=True, rng=rng)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch offset {s}: {loss}")
            clip_grad_norm(grads, traincfg.grad_clip)
            opt.step(params, grads)
            tot += loss * b.size
            cnt += b.size
        vnll = _val_nll(params, netcfg, xv, zv)
        if not math.isfinite(vnll):
            raise TrainingError(f"non-finite validation NLL at epoch {epoch}")
        log.append({"epoch": epoch, "train_nll": tot / cnt, "val_nll": vnll})
        if progress is not None:
            progress(epoch, tot / cnt, vnll)
        if vnll < best_nll:
            best_nll, best_epoch = vnll, epoch
            best = {k: v.copy() for k, v in params.items()}
        elif traincfg.patience is not None and epoch - best_epoch >= traincfg.patience:
            break
    return Checkpoint(netcfg, traincfg, best, stats, log, best_epoch, best_nll,
                      x_raw.shape[0], data_digest(x_raw, y))


# -- inference --------------------------------------------------------------

# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def norm_ppf(q: float) -> float:
    """Standard normal quantile; rational start refined by one Halley step."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    if q < _P_LOW:
        r = math.sqrt(-2.0 * math.log(q))
        x = (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    elif q <= 1.0 - _P_LOW:
        r = q - 0.5
        s = r * r
        x = (((((_A[0] * s + _A[1]) * s + _A[2]) * s + _A[3]) * s + _A[4]) * s + _A[5]) * r / \
            (((((_B[0] * s + _B[1]) * s + _B[2]) * s + _B[3]) * s + _B[4]) * s + 1.0)
    else:
        r = math.sqrt(-2.0 * math.log1p(-q))
        x = -(((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / \
            ((((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0)
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - q
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def predict_mean(mu_z, sigma_z2):
    """Mean overhead under the shifted log-normal."""
    return np.expm1(np.asarray(mu_z, dtype=float) + 0.5 * np.asarray(sigma_z2, dtype=float))


def predict_quantile(mu_z, sigma_z2, q: float):
    return np.expm1(np.asarray(mu_z, dtype=float) + np.sqrt(np.asarray(sigma_z2, dtype=float)) * norm_ppf(q))


@dataclass
class Metrics:
    n: int
    mae: float
    rmse: float
    r2: float
    pearson: float
    coverage_80: float
    coverage_90: float
    width_80: float
    width_90: float
    z_resid_mean: float
    z_resid_std: float
    nll: float


def evaluate_predictions(mu, sigma2, delta_obs) -> tuple[Metrics, dict]:
    mu, sigma2, obs = (np.asarray(a, dtype=float) for a in (mu, sigma2, delta_obs))
    if obs.size == 0:
        raise ValueError("no validation rows")
    mean = predict_mean(mu, sigma2)
    err = mean - obs
    sst = float(np.sum((obs - obs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err ** 2)) / sst if sst > 0 else float("nan")
    pearson = float(np.corrcoef(mean, obs)[0, 1]) if obs.size > 1 and mean.std() > 0 and obs.std() > 0 else float("nan")
    cov, wid = {}, {}
    for c in (0.8, 0.9):
        lo = predict_quantile(mu, sigma2, (1.0 - c) / 2.0)
        hi = predict_quantile(mu, sigma2, (1.0 + c) / 2.0)
        cov[c] = float(np.mean((obs >= lo) & (obs <= hi)))
        wid[c] = float(np.mean(hi - lo))
    zr = (to_z(obs) - mu) / np.sqrt(sigma2)
    nll = nll_loss(mu, np.log(sigma2), to_z(obs))
    m = Metrics(int(obs.size), float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2))), r2, pearson,
                cov[0.8], cov[0.9], wid[0.8], wid[0.9], float(zr.mean()), float(zr.std()), nll)
    per_sample = {
        "delta_e_obs": obs, "delta_e_mean": mean,
        **{f"q{int(round(q * 100)):02d}": predict_quantile(mu, sigma2, q) for q in (0.05, 0.10, 0.50, 0.90, 0.95)},
    }
    return m, per_sample


def evaluate(ckpt: Checkpoint, x_raw, delta_e, validation_only: bool = True):
    """Metrics on the checkpoint's validation split when the data matches the
    training set, otherwise on every row given."""
    x_raw = np.asarray(x_raw, dtype=float)
    y = np.asarray(delta_e, dtype=float)
    rows = np.arange(x_raw.shape[0])
    if validation_only and x_raw.shape[0] == ckpt.n_rows and data_digest(x_raw, y) == ckpt.digest:
        rows = ckpt.validation_rows(x_raw.shape[0])
    mu, s2 = ckpt.predict_z(x_raw[rows])
    m, per = evaluate_predictions(mu, s2, y[rows])
    return m, per, rows


# -- checkpoint file ----------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write a self-describing file: magic, u64 header length, JSON header,
    then little-endian float64 tensors at the offsets named in the header."""
    tensors, blobs, offset = [], [], 0
    for name in param_shapes(ckpt.netcfg):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format": "skyreserve-checkpoint",
        "version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "netcfg": asdict(ckpt.netcfg),
        "traincfg": asdict(ckpt.traincfg),
        "normalization": ckpt.stats.to_dict(),
        "feature_names": list(FEATURE_NAMES),
        "log": ckpt.log,
        "best_epoch": ckpt.best_epoch,
        "best_val_nll": ckpt.best_val_nll,
        "n_rows": ckpt.n_rows,
        "digest": ckpt.digest,
        "tensors": tensors,
    }
    raw = json.dumps(header, sort_keys=True, allow_nan=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a skyreserve checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    params = {}
    for t in header["tensors"]:
        start = pos + t["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=t["count"], offset=start)
        params[t["name"]] = arr.reshape(t["shape"]).astype(float)
    return Checkpoint(
        NetConfig(**header["netcfg"]), TrainConfig(**header["traincfg"]), params,
        NormalizationStats.from_dict(header["normalization"]), header["log"],
        header["best_epoch"], header["best_val_nll"], header["n_rows"], header["digest"],
    )
