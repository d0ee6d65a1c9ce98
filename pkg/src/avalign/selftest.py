"""Built-in verification of every kernel against independent re-evaluation.

Each check recomputes the expected result by a separate route (scalar loops,
finite differences, closed-form constants) and reports its worst deviation.
The CLI `selftest` subcommand serializes the report as JSON lines.
"""

from __future__ import annotations

import math

import numpy as np

from .audio import OnsetLabels
from .kernels import (
    AttentivePoolParams,
    NoiseSchedule,
    attentive_pool,
    attentive_pool_grad,
    cfg_combine,
    concat_condition,
    diffusion_loss,
    expand_context,
    forward_noise,
    onset_bce,
    project_global,
)

GRAD_TOL = 1e-4
POOL_ORACLE_TOL = 1e-10
WEIGHT_TOL = 1e-9


def pool_oracle(features, params):
    """Straight-line scalar re-evaluation of the pooling equations."""
    L, D = features.shape
    H = params.v_score.size
    P = params.w_query.shape[0]
    theta_l = []
    for u in range(L):
        acc = 0.0
        for h in range(H):
            pre = 0.0
            for d in range(D):
                pre += params.v_proj[h][d] * features[u][d]
            acc += params.v_score[h] * max(pre, 0.0)
        theta_l.append(acc)

    def project(mat, row):
        vec = [sum(mat[p][d] * row[d] for d in range(D)) for p in range(P)]
        norm = math.sqrt(sum(x * x for x in vec))
        if norm == 0.0:
            return [0.0] * P
        return [x / norm for x in vec]

    queries = [project(params.w_query, features[u]) for u in range(L)]
    keys = [project(params.w_key, features[i]) for i in range(L)]
    theta_c = []
    for u in range(L):
        acc = 0.0
        for i in range(L):
            acc += sum(queries[u][p] * keys[i][p] for p in range(P))
        theta_c.append(acc)

    scores = [params.alpha_local * theta_l[u] + params.alpha_cross * theta_c[u] for u in range(L)]
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    weights = [e / total for e in exps]
    pooled = [sum(weights[u] * features[u][d] for u in range(L)) for d in range(D)]
    return np.asarray(pooled), np.asarray(weights)


def _random_pool_case(rng):
    L = int(rng.integers(1, 7))
    D = int(rng.integers(1, 7))
    H = int(rng.integers(1, 5))
    P = int(rng.integers(1, 5))
    features = rng.normal(size=(L, D))
    params = AttentivePoolParams(
        v_proj=rng.normal(size=(H, D)),
        v_score=rng.normal(size=H),
        w_query=rng.normal(size=(P, D)),
        w_key=rng.normal(size=(P, D)),
        alpha_local=float(rng.normal()),
        alpha_cross=float(rng.normal()),
    )
    return features, params


def _fd_gradient_error(features, params, h=1e-5):
    """Worst relative error of the analytic gradients vs central differences."""

    def loss_at(p):
        pooled, _ = attentive_pool(features, p)
        return float(pooled @ pooled)

    analytic = attentive_pool_grad(features, params)
    worst = 0.0
    fields = {
        "v_proj": params.v_proj,
        "v_score": params.v_score,
        "w_query": params.w_query,
        "w_key": params.w_key,
        "alpha_local": np.asarray(params.alpha_local),
        "alpha_cross": np.asarray(params.alpha_cross),
    }
    for name, value in fields.items():
        grad = np.atleast_1d(np.asarray(analytic[name], dtype=np.float64))
        flat = np.atleast_1d(value.astype(np.float64)).ravel()
        for idx in range(flat.size):
            def perturbed(delta):
                bumped = flat.copy()
                bumped[idx] += delta
                kwargs = {
                    "v_proj": params.v_proj,
                    "v_score": params.v_score,
                    "w_query": params.w_query,
                    "w_key": params.w_key,
                    "alpha_local": params.alpha_local,
                    "alpha_cross": params.alpha_cross,
                }
                if name in ("alpha_local", "alpha_cross"):
                    kwargs[name] = float(bumped[0])
                else:
                    kwargs[name] = bumped.reshape(value.shape)
                return AttentivePoolParams(**kwargs)

            fd = (loss_at(perturbed(h)) - loss_at(perturbed(-h))) / (2.0 * h)
            a = grad.ravel()[idx]
            # unit floor keeps near-zero components from amplifying FD noise
            rel = abs(a - fd) / max(1.0, abs(a), abs(fd))
            worst = max(worst, rel)
    return worst


def _check(kernel, name, max_error, tol):
    return {
        "kernel": kernel,
        "check": name,
        "max_error": float(max_error),
        "pass": bool(max_error <= tol),
    }


def _bce_checks(rng):
    y = OnsetLabels(rng.integers(0, 2, size=64), frame_rate=25.0)
    half = onset_bce(y, np.full(64, 0.5))
    yield _check("onset_bce", "half_probability_ln2", abs(half - math.log(2.0)), 1e-9)

    exact = onset_bce(y, y.labels.astype(float))
    yield _check("onset_bce", "perfect_prediction", exact, 1e-6)

    labels = OnsetLabels(np.array([1, 0]), frame_rate=25.0)
    got = onset_bce(labels, np.array([0.9, 0.2]))
    want = -(math.log(0.9) + math.log(0.8)) / 2.0
    yield _check("onset_bce", "scalar_example", abs(got - want), 1e-12)


def _pool_checks(rng, break_gradient):
    dist_err = 0.0
    oracle_err = 0.0
    for _ in range(100):
        features, params = _random_pool_case(rng)
        pooled, weights = attentive_pool(features, params)
        dist_err = max(dist_err, abs(float(weights.sum()) - 1.0), max(0.0, -float(weights.min())))
        ref_pooled, ref_weights = pool_oracle(features, params)
        oracle_err = max(
            oracle_err,
            float(np.max(np.abs(pooled - ref_pooled))),
            float(np.max(np.abs(weights - ref_weights))),
        )
    yield _check("attentive_pool", "weights_distribution", dist_err, WEIGHT_TOL)
    yield _check("attentive_pool", "pool_oracle", oracle_err, POOL_ORACLE_TOL)

    grad_err = 0.0
    for _ in range(100):
        features, params = _random_pool_case(rng)
        grad_err = max(grad_err, _fd_gradient_error(features, params))
    if break_gradient:
        grad_err += 1.0  # injected fault so harness failure paths stay testable
    yield _check("attentive_pool", "gradient_fd", grad_err, GRAD_TOL)


def _projection_checks(rng):
    pooled = rng.normal(size=8)
    identity = np.zeros((1, 3))
    identity[0, 1] = 1.0
    yield _check(
        "project_global",
        "identity_kernel",
        float(np.max(np.abs(project_global(pooled, identity)[0] - pooled))),
        0.0,
    )

    banks = rng.normal(size=(4, 3))
    got = project_global(pooled, banks)
    want = np.zeros((4, 8))
    padded = np.concatenate([[0.0], pooled, [0.0]])
    for k in range(4):
        for d in range(8):
            want[k, d] = sum(banks[k, j] * padded[d + j] for j in range(3))
    yield _check("project_global", "conv_oracle", float(np.max(np.abs(got - want))), 1e-12)


def _context_checks(rng):
    row = rng.normal(size=5)
    constant = np.tile(row, (12, 1))
    out = expand_context(constant)
    want = np.tile(row, (12, 4))
    yield _check("expand_context", "constant_rows", float(np.max(np.abs(out - want))), 1e-12)

    x = np.zeros((16, 3))
    x[6] = rng.normal(size=3)
    got = expand_context(x)
    want = np.zeros((16, 12))
    for wi, w in enumerate((1, 2, 4, 8)):
        for t in range(16):
            lo = max(0, t - w + 1)
            want[t, wi * 3:(wi + 1) * 3] = x[lo:t + 1].mean(axis=0)
    yield _check("expand_context", "impulse_window", float(np.max(np.abs(got - want))), 1e-12)


def _concat_checks(rng):
    text = rng.normal(size=(77, 16))
    video = rng.normal(size=(4, 16))
    cond = concat_condition(text, video)
    layout_ok = (
        cond.shape == (81, 16)
        and np.array_equal(cond[:77], text)
        and np.array_equal(cond[77:], video)
    )
    yield _check("concat_condition", "token_layout", 0.0 if layout_ok else 1.0, 0.0)


def _noise_checks(rng):
    schedule = NoiseSchedule.linear()
    coeffs = np.sqrt(schedule.alpha_bars) ** 2 + np.sqrt(1.0 - schedule.alpha_bars) ** 2
    yield _check("forward_noise", "mixing_identity", float(np.max(np.abs(coeffs - 1.0))), 1e-12)

    z0 = rng.normal(size=(4, 4))
    zt = forward_noise(z0, 500, schedule, np.zeros_like(z0))
    want = np.sqrt(schedule.alpha_bars[499]) * z0
    yield _check("forward_noise", "zero_noise_branch", float(np.max(np.abs(zt - want))), 0.0)

    n = 100_000
    z0 = rng.standard_normal(n)
    eps = rng.standard_normal(n)
    worst = 0.0
    for start in range(0, schedule.t_steps, 100):
        abar = schedule.alpha_bars[start:start + 100]
        zt = np.sqrt(abar)[:, None] * z0[None, :] + np.sqrt(1.0 - abar)[:, None] * eps[None, :]
        worst = max(worst, float(np.max(np.abs(zt.var(axis=1) - 1.0))))
    yield _check("forward_noise", "variance_contract", worst, 0.02)


def _loss_checks(rng):
    eps = rng.normal(size=(4, 4))
    yield _check("diffusion_loss", "perfect_denoiser", diffusion_loss(eps, eps), 0.0)
    yield _check("diffusion_loss", "unit_offset", abs(diffusion_loss(eps, eps + 1.0) - 1.0), 1e-12)

    eps_hat = rng.normal(size=(4, 4))
    acc = 0.0
    for i in range(4):
        for j in range(4):
            acc += (eps[i, j] - eps_hat[i, j]) ** 2
    want = acc / 16.0
    yield _check("diffusion_loss", "loop_oracle", abs(diffusion_loss(eps, eps_hat) - want), 1e-12)


def _cfg_checks(rng):
    cond = rng.normal(size=(4, 4))
    uncond = rng.normal(size=(4, 4))
    got = cfg_combine(cond, uncond, 1.0)
    yield _check("cfg_combine", "identity_scale", float(np.max(np.abs(got - cond))), 0.0)

    same = cfg_combine(cond, cond, -2.5)
    yield _check("cfg_combine", "degenerate_equal", float(np.max(np.abs(same - cond))), 1e-12)

    got = cfg_combine(cond, uncond, 3.0)
    want = np.empty_like(cond)
    for i in range(4):
        for j in range(4):
            want[i, j] = 3.0 * cond[i, j] + (1.0 - 3.0) * uncond[i, j]
    yield _check("cfg_combine", "paper_scale", float(np.max(np.abs(got - want))), 1e-12)

    scalar = cfg_combine(np.full((2, 2), 2.0), np.full((2, 2), 1.0), 3.0)
    yield _check("cfg_combine", "scalar_example", float(np.max(np.abs(scalar - 4.0))), 0.0)


def run_selftest(seed: int = 0, break_gradient: bool = False) -> list[dict]:
    """Run every kernel check; returns one report dict per check."""
    rng = np.random.default_rng(seed)
    report = []
    report.extend(_bce_checks(rng))
    report.extend(_pool_checks(rng, break_gradient))
    report.extend(_projection_checks(rng))
    report.extend(_context_checks(rng))
    report.extend(_concat_checks(rng))
    report.extend(_noise_checks(rng))
    report.extend(_loss_checks(rng))
    report.extend(_cfg_checks(rng))
    return report


def report_lines(report: list[dict]) -> list[str]:
    """One JSON object per check: {kernel, check, max_error, pass}."""
    lines = []
    for row in report:
        lines.append(
            f'{{"kernel": "{row["kernel"]}", "check": "{row["check"]}", '
            f'"max_error": {row["max_error"]:.6e}, "pass": {"true" if row["pass"] else "false"}}}'
        )
    return lines
