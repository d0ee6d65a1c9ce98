"""Deterministic reference kernels for the conditioning and loss math.

These are the numerics a training stack would wrap in autograd: the onset
binary cross-entropy, attentive pooling over frame features (with analytic
gradients for verification), the global-token convolution, causal context
expansion, text/video condition concatenation, forward diffusion noising,
the denoising MSE, and classifier-free guidance. All functions are pure;
randomness is always passed in by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import OnsetLabels

BCE_EPS = 1e-7


def onset_bce(labels: OnsetLabels, predictions: np.ndarray) -> float:
    """Mean binary cross-entropy between onset labels and predicted probabilities.

    -(1/T) sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)], with predictions
    clamped to [1e-7, 1 - 1e-7] so saturated values stay finite.
    """
    y = labels.labels.astype(np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if p.ndim != 1 or p.size != y.size:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass(frozen=True)
class AttentivePoolParams:
    """Attentive-pooling weights: a scored relu path plus a cosine cross path.

    v_proj (H x D) / v_score (H) produce the per-frame local potential;
    w_query / w_key (P x D) produce the cross potential as summed cosine
    similarities between projected frames; alpha_local / alpha_cross
    calibrate the two before the softmax.
    """

    v_proj: np.ndarray
    v_score: np.ndarray
    w_query: np.ndarray
    w_key: np.ndarray
    alpha_local: float
    alpha_cross: float

    def __post_init__(self):
        for name in ("v_proj", "v_score", "w_query", "w_key"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        if self.v_proj.ndim != 2 or self.v_score.ndim != 1:
            raise ValueError("v_proj must be H x D and v_score length H")
        if self.v_proj.shape[0] != self.v_score.size:
            raise ValueError("v_proj rows must match v_score length")
        if self.w_query.shape != self.w_key.shape or self.w_query.ndim != 2:
            raise ValueError("w_query and w_key must be matrices of equal shape")
        if self.w_query.shape[1] != self.v_proj.shape[1]:
            raise ValueError("w_query/w_key and v_proj must share the feature dimension")
        if not (np.isfinite(self.alpha_local) and np.isfinite(self.alpha_cross)):
            raise ValueError("alphas must be finite")

    @property
    def dim(self) -> int:
        return int(self.v_proj.shape[1])


def _check_features(features: np.ndarray, params: AttentivePoolParams) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1:
        raise ValueError("features must be an L x D matrix with L >= 1")
    if not np.all(np.isfinite(f)):
        raise ValueError("features must be finite")
    if f.shape[1] != params.dim:
        raise ValueError(f"feature dim {f.shape[1]} does not match params dim {params.dim}")
    return f


def _normalize_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # zero rows normalize to zero rows so cosine terms vanish instead of dividing by 0
    norms = np.linalg.norm(m, axis=1)
    out = np.zeros_like(m)
    nz = norms > 0.0
    out[nz] = m[nz] / norms[nz, None]
    return out, norms


def _pool_internals(features: np.ndarray, params: AttentivePoolParams):
    pre = features @ params.v_proj.T            # L x H
    act = np.maximum(pre, 0.0)
    theta_local = act @ params.v_score          # L
    q = features @ params.w_query.T             # L x P
    k = features @ params.w_key.T               # L x P
    q_hat, q_norm = _normalize_rows(q)
    k_hat, k_norm = _normalize_rows(k)
    key_sum = k_hat.sum(axis=0)                 # P
    theta_cross = q_hat @ key_sum               # L
    scores = params.alpha_local * theta_local + params.alpha_cross * theta_cross
    shifted = scores - scores.max()
    weights = np.exp(shifted)
    weights /= weights.sum()
    pooled = features.T @ weights
    return pooled, weights, pre, act, theta_local, theta_cross, q_hat, q_norm, k_hat, k_norm, key_sum


def attentive_pool(
    features: np.ndarray, params: AttentivePoolParams
) -> tuple[np.ndarray, np.ndarray]:
    """Softmax-weighted convex combination of the feature rows.

    Row u is scored by alpha_local * v_score . relu(v_proj @ f_u) plus
    alpha_cross * sum_i cos(w_query @ f_u, w_key @ f_i); the softmax of the
    scores weights the rows. Returns (pooled D-vector, weights over rows).
    """
    f = _check_features(features, params)
    pooled, weights, *_ = _pool_internals(f, params)
    return pooled, weights


def attentive_pool_grad(features: np.ndarray, params: AttentivePoolParams) -> dict:
    """Analytic gradients of ||pooled||^2 with respect to every parameter.

    Returns a dict keyed by the AttentivePoolParams field names. Serves as
    the verification target for the finite-difference checks.
    """
    f = _check_features(features, params)
    (pooled, weights, pre, act, theta_local, theta_cross,
     q_hat, q_norm, k_hat, k_norm, key_sum) = _pool_internals(f, params)

    d_weights = 2.0 * (f @ pooled)                                  # L
    d_scores = weights * (d_weights - float(weights @ d_weights))   # softmax backward

    d_alpha_local = float(d_scores @ theta_local)
    d_alpha_cross = float(d_scores @ theta_cross)

    mask = (pre > 0.0).astype(np.float64)                           # L x H
    d_v_score = params.alpha_local * (act.T @ d_scores)
    d_v_proj = params.alpha_local * (
        (mask * (d_scores[:, None] * params.v_score[None, :])).T @ f
    )

    # cosine-normalized query rows: d(q_hat)/dq = (I - q_hat q_hat^T) / |q|
    d_w_query = np.zeros_like(params.w_query)
    coeff = params.alpha_cross * d_scores
    for u in range(f.shape[0]):
        if q_norm[u] == 0.0:
            continue
        dq = (key_sum - q_hat[u] * float(q_hat[u] @ key_sum)) / q_norm[u]
        d_w_query += coeff[u] * np.outer(dq, f[u])

    query_sum = (coeff[:, None] * q_hat).sum(axis=0)                # P
    d_w_key = np.zeros_like(params.w_key)
    for i in range(f.shape[0]):
        if k_norm[i] == 0.0:
            continue
        dk = (query_sum - k_hat[i] * float(k_hat[i] @ query_sum)) / k_norm[i]
        d_w_key += np.outer(dk, f[i])

    return {
        "v_proj": d_v_proj,
        "v_score": d_v_score,
        "w_query": d_w_query,
        "w_key": d_w_key,
        "alpha_local": d_alpha_local,
        "alpha_cross": d_alpha_cross,
    }


def project_global(pooled: np.ndarray, banks: np.ndarray) -> np.ndarray:
    """Expand one pooled D-vector into K global tokens via K 3-tap filter banks.

    Token k is the zero-padded stride-1 cross-correlation of the pooled
    vector with bank k, so the output is K x D. A center-tap-only bank
    reproduces the pooled vector.
    """
    x = np.asarray(pooled, dtype=np.float64)
    w = np.asarray(banks, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("pooled must be a 1-D vector")
    if w.ndim != 2:
        raise ValueError("banks must be K x kernel_size")
    k_tokens, width = w.shape
    if width > x.size:
        raise ValueError(f"kernel width {width} exceeds feature dimension {x.size}")
    if width % 2 != 1:
        raise ValueError("kernel width must be odd")
    half = width // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(half)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, width)
    return (windows @ w.T).T


def expand_context(aligned: np.ndarray, windows: tuple[int, ...] = (1, 2, 4, 8)) -> np.ndarray:
    """Concatenate causal moving averages at several window sizes.

    For each window w the value at frame t is the mean of frames
    max(0, t - w + 1) .. t, so early frames average what exists. Output is
    T x (len(windows) * D), window order preserved.
    """
    x = np.asarray(aligned, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("aligned features must be a T x D matrix with T >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    cum = np.cumsum(x, axis=0)
    t = x.shape[0]
    parts = []
    for w in windows:
        if w < 1:
            raise ValueError("window sizes must be >= 1")
        sums = cum.copy()
        if w < t:
            sums[w:] = cum[w:] - cum[:-w]
        counts = np.minimum(np.arange(1, t + 1), w).astype(np.float64)
        parts.append(sums / counts[:, None])
    return np.concatenate(parts, axis=1)


def concat_condition(text: np.ndarray, global_video: np.ndarray) -> np.ndarray:
    """Stack text tokens above global video tokens along the token axis.

    Rows 0 .. K0-1 are the text tokens unmodified, rows K0 .. K0+K-1 the
    video tokens; no projection or mixing. The null-text case is the same
    call with an all-zero text matrix.
    """
    t = np.asarray(text, dtype=np.float64)
    v = np.asarray(global_video, dtype=np.float64)
    if t.ndim != 2 or v.ndim != 2:
        raise ValueError("text and global_video must be 2-D token matrices")
    if t.shape[1] != v.shape[1]:
        raise ValueError(f"feature dim mismatch: text {t.shape[1]} vs video {v.shape[1]}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise ValueError("condition tokens must be finite")
    return np.concatenate([t, v], axis=0)


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-diffusion schedule: betas in (0, 1) and their cumulative alpha products."""

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        alpha_bars = np.asarray(self.alpha_bars, dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        if betas.ndim != 1 or betas.size < 1 or betas.shape != alpha_bars.shape:
            raise ValueError("betas and alpha_bars must be equal-length 1-D arrays")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie strictly in (0, 1)")
        if np.any(alpha_bars <= 0.0) or np.any(alpha_bars > 1.0):
            raise ValueError("alpha_bars must lie in (0, 1]")
        if np.any(np.diff(alpha_bars) >= 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")

    @property
    def t_steps(self) -> int:
        return int(self.betas.size)

    @classmethod
    def linear(cls, t_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2):
        """Standard linearly spaced betas (the usual DDPM default)."""
        if t_steps < 1:
            raise ValueError("t_steps must be >= 1")
        betas = np.linspace(beta_start, beta_end, t_steps)
        return cls(betas, np.cumprod(1.0 - betas))


def forward_noise(
    z0: np.ndarray, t: int, schedule: NoiseSchedule, eps: np.ndarray
) -> np.ndarray:
    """Closed-form forward noising: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps.

    `t` is 1-indexed into the schedule. The mixing coefficients satisfy
    sqrt(abar)^2 + sqrt(1-abar)^2 = 1, so unit-variance inputs stay unit
    variance at every step.
    """
    z = np.asarray(z0, dtype=np.float64)
    e = np.asarray(eps, dtype=np.float64)
    if not 1 <= t <= schedule.t_steps:
        raise ValueError(f"step {t} outside 1..{schedule.t_steps}")
    if z.shape != e.shape:
        raise ValueError(f"shape mismatch: z0 {z.shape} vs eps {e.shape}")
    abar = schedule.alpha_bars[t - 1]
    return np.sqrt(abar) * z + np.sqrt(1.0 - abar) * e


def diffusion_loss(eps: np.ndarray, eps_hat: np.ndarray) -> float:
    """Elementwise mean squared error between true and predicted noise."""
    a = np.asarray(eps, dtype=np.float64)
    b = np.asarray(eps_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def cfg_combine(cond_eps: np.ndarray, uncond_eps: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free guidance: w * cond + (1 - w) * uncond.

    w = 1 returns the conditional prediction unchanged; w > 1 extrapolates
    away from the unconditional one.
    """
    c = np.asarray(cond_eps, dtype=np.float64)
    u = np.asarray(uncond_eps, dtype=np.float64)
    if c.shape != u.shape:
        raise ValueError(f"shape mismatch: {c.shape} vs {u.shape}")
    if not np.isfinite(w):
        raise ValueError("guidance scale must be finite")
    return w * c + (1.0 - w) * u
