"""QML estimation of the mixture model: multi-start EM plus quasi-Newton.

EM is used for its global stability (monotone likelihood ascent from rough
starts), then the best start is polished by BFGS on the unconstrained
parameterization with the analytic score, sharpening the first-order
condition that the sandwich covariance relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize

from .dgp import RegimeOutcome, Sample, seed_key
from .errors import EstimationError, ValidationError
from .mixture import (MixtureParams, ModelSpec, _sorted_logsumexp_rows,
                      _weighted_logdensity_matrix, decode, encode, quasi_loglik,
                      score)

_COLLAPSE_FRACTION = 1e-8  # of effective sample size, per component


@dataclass
class EstimatorConfig:
    """Optimizer settings; seed drives the randomized starts."""

    n_starts: int = 8
    em_max_iter: int = 500
    em_tol: float = 1e-9  # absolute increase of the average log-likelihood
    qn_max_iter: int = 200
    qn_grad_tol: float = 1e-6  # max-norm of the score at convergence
    sigma_floor: float = 1e-6
    seed: int = 0

    def validate(self) -> None:
        out = []
        if self.n_starts < 1:
            out.append(f"n_starts must be >= 1, got {self.n_starts}")
        for name in ("em_tol", "qn_grad_tol", "sigma_floor"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.em_max_iter < 1 or self.qn_max_iter < 0:
            out.append("iteration limits must be positive")
        if out:
            raise ValidationError(out)

    def to_json(self) -> dict:
        return {"n_starts": self.n_starts, "em_max_iter": self.em_max_iter,
                "em_tol": self.em_tol, "qn_max_iter": self.qn_max_iter,
                "qn_grad_tol": self.qn_grad_tol, "sigma_floor": self.sigma_floor,
                "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "EstimatorConfig":
        kwargs = {k: obj[k] for k in cls().to_json() if k in obj}
        return cls(**kwargs)


@dataclass
class EstimationResult:
    """Outcome of one qml_estimate call; components sorted by mu ascending."""

    theta_hat: MixtureParams
    loglik: float
    converged: bool
    n_iterations: dict
    start_index: int
    covariance: Optional[np.ndarray] = None
    std_errors: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_json(),
            "loglik": self.loglik,
            "converged": self.converged,
            "n_iterations": dict(self.n_iterations),
            "start_index": self.start_index,
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "std_errors": None if self.std_errors is None else self.std_errors.tolist(),
            "notes": list(self.notes),
        }


@dataclass
class _EmRun:
    params: MixtureParams
    loglik: float
    trace: list
    n_iter: int
    degenerate: bool
    notes: list


def _pooled_ols(y: np.ndarray, x: np.ndarray):
    """Intercept, slope, residuals of the pooled regression of y on (1, x)."""
    xm = x.mean()
    ym = y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = ((x - xm) * (y - ym)).sum() / sxx if sxx > 0 else 0.0
    intercept = ym - slope * xm
    resid = y - intercept - slope * x
    return intercept, slope, resid


def _random_init(y: np.ndarray, x: np.ndarray, spec: ModelSpec,
                 rng: np.random.Generator, sigma_floor: float) -> MixtureParams:
    """Randomized starting point built from pooled-regression summaries."""
    d = spec.d
    intercept, slope, resid = _pooled_ols(y, x)
    scale = max(float(resid.std()), sigma_floor)
    # spread the intercepts across residual quantiles, then jitter
    qs = (np.arange(d) + 0.5) / d
    mu = intercept + np.quantile(resid, qs) + 0.25 * scale * rng.standard_normal(d)
    slope_scale = scale / max(float(x.std()), 1e-8)
    if spec.form == "hmm":
        gamma = slope + 0.3 * slope_scale * rng.standard_normal(d)
    else:
        gamma = np.full(d, slope + 0.1 * rng.standard_normal())
    sigma = np.maximum(scale * np.exp(0.3 * rng.standard_normal(d)), sigma_floor)
    weights = rng.uniform(0.8, 1.2, d)
    weights /= weights.sum()
    comps = [RegimeOutcome(mu=float(mu[s]), gamma=float(gamma[s]),
                           sigma=float(sigma[s])) for s in range(d)]
    return MixtureParams(components=comps, weights=weights)


def _m_step(resp: np.ndarray, y: np.ndarray, x: np.ndarray, spec: ModelSpec,
            params: MixtureParams, sigma_floor: float):
    """Exact M-step; returns (new params, floor_hit flag) or None when singular."""
    d = spec.d
    weights = resp.mean(axis=0)
    if spec.form == "hmm":
        mu = np.empty(d)
        gamma = np.empty(d)
        sigma = np.empty(d)
        floor_hit = False
        for s in range(d):
            r = resp[:, s]
            a = r.sum()
            b = (r * x).sum()
            c = (r * x * x).sum()
            dd = (r * y).sum()
            e = (r * x * y).sum()
            det = a * c - b * b
            if not (math.isfinite(det) and det > 0):
                return None
            mu[s] = (c * dd - b * e) / det
            gamma[s] = (a * e - b * dd) / det
            msr = (r * (y - mu[s] - gamma[s] * x) ** 2).sum() / a
            sig = math.sqrt(max(msr, 0.0))
            if sig < sigma_floor:
                sig = sigma_floor
                floor_hit = True
            sigma[s] = sig
    else:
        # shared slope: stack the per-component weighted normal equations,
        # precision-weighting by the current sigmas
        inv_var = 1.0 / params.sigma_vec ** 2
        v = resp * inv_var[None, :]
        a_s = v.sum(axis=0)
        b_s = (v * x[:, None]).sum(axis=0)
        c_s = (v * (x * x)[:, None]).sum(axis=0)
        d_s = (v * y[:, None]).sum(axis=0)
        e_s = (v * (x * y)[:, None]).sum(axis=0)
        if (a_s <= 0).any():
            return None
        denom = c_s.sum() - (b_s * b_s / a_s).sum()
        if not (math.isfinite(denom) and denom > 0):
            return None
        phi = (e_s.sum() - (b_s * d_s / a_s).sum()) / denom
        mu = (d_s - phi * b_s) / a_s
        gamma = np.full(d, phi)
        totals = resp.sum(axis=0)
        sq = (resp * (y[:, None] - mu[None, :] - phi * x[:, None]) ** 2).sum(axis=0)
        sigma = np.sqrt(np.maximum(sq / totals, 0.0))
        floor_hit = bool((sigma < sigma_floor).any())
        sigma = np.maximum(sigma, sigma_floor)
    comps = [RegimeOutcome(mu=float(mu[s]), gamma=float(gamma[s]),
                           sigma=float(sigma[s])) for s in range(d)]
    return MixtureParams(components=comps, weights=weights), floor_hit


def _em_run(y: np.ndarray, x: np.ndarray, spec: ModelSpec, init: MixtureParams,
            cfg: EstimatorConfig, rng: Optional[np.random.Generator]) -> _EmRun:
    params = init
    notes = []
    trace = []
    reseeded = False
    n_eff = len(y)
    ll_prev = -np.inf
    n_iter = 0
    degenerate = False

    for _ in range(cfg.em_max_iter):
        a = _weighted_logdensity_matrix(params, y, x)
        lse = _sorted_logsumexp_rows(a)
        ll_cur = float(lse.mean())
        trace.append(ll_cur)
        if ll_cur < ll_prev - 1e-10:
            notes.append(f"em loglik decreased by {ll_prev - ll_cur:.3e}")
        if ll_cur - ll_prev < cfg.em_tol and np.isfinite(ll_prev):
            break
        resp = np.exp(a - lse[:, None])

        totals = resp.sum(axis=0)
        collapsed = np.flatnonzero(totals < _COLLAPSE_FRACTION * n_eff)
        if collapsed.size:
            if reseeded or rng is None:
                notes.append(f"component(s) {collapsed.tolist()} collapsed; "
                             "fit abandoned")
                degenerate = True
                break
            notes.append(f"component(s) {collapsed.tolist()} collapsed; reseeded")
            params = _reseed_components(params, collapsed, y, x, spec, rng,
                                        cfg.sigma_floor)
            reseeded = True
            ll_prev = -np.inf
            n_iter += 1
            continue

        stepped = _m_step(resp, y, x, spec, params, cfg.sigma_floor)
        if stepped is None:
            notes.append("singular weighted normal equations; fit abandoned")
            degenerate = True
            break
        params, floor_hit = stepped
        if floor_hit and "sigma floor reached" not in notes:
            notes.append("sigma floor reached")
        ll_prev = ll_cur
        n_iter += 1

    a = _weighted_logdensity_matrix(params, y, x)
    ll_final = float(_sorted_logsumexp_rows(a).mean())
    trace.append(ll_final)
    return _EmRun(params=params, loglik=ll_final, trace=trace, n_iter=n_iter,
                  degenerate=degenerate, notes=notes)


def _reseed_components(params: MixtureParams, which: np.ndarray, y: np.ndarray,
                       x: np.ndarray, spec: ModelSpec,
                       rng: np.random.Generator,
                       sigma_floor: float) -> MixtureParams:
    fresh = _random_init(y, x, spec, rng, sigma_floor)
    comps = list(params.components)
    for s in which:
        comps[s] = fresh.components[s]
    weights = np.full(params.d, 1.0 / params.d)
    if spec.form == "msar":
        # keep the slope shared after the swap
        phi = comps[0].gamma
        comps = [RegimeOutcome(mu=c.mu, gamma=phi, sigma=c.sigma) for c in comps]
    return MixtureParams(components=comps, weights=weights)


def em_fit(sample: Sample, spec: ModelSpec, init: MixtureParams,
           cfg: EstimatorConfig) -> MixtureParams:
    """Run EM from `init` until the likelihood gain drops below em_tol."""
    cfg.validate()
    init.validate()
    y, x = spec.regression_frame(sample)
    _check_sample_size(len(y), spec)
    rng = np.random.default_rng(seed_key(cfg.seed) + (982451653,))
    run = _em_run(y, x, spec, init, cfg, rng)
    if run.degenerate:
        raise EstimationError("EM fit degenerate", diagnostics=run.notes)
    return run.params


def _check_sample_size(n_eff: int, spec: ModelSpec) -> None:
    per_regime = 3 if spec.form == "hmm" else 2  # regime-specific coefficients
    needed = spec.d * per_regime
    if n_eff < needed:
        raise ValidationError(f"need at least {needed} usable observations "
                              f"for d = {spec.d}, got {n_eff}")


def qml_estimate(sample: Sample, spec: ModelSpec,
                 cfg: Optional[EstimatorConfig] = None) -> EstimationResult:
    """Approximate maximizer of the quasi-log-likelihood.

    Runs cfg.n_starts EM fits from randomized initializations, refines the
    best one by BFGS on the FreeVector with the analytic score, and keeps
    whichever of the two has the higher likelihood.  `converged` reports
    whether the max-norm of the score fell below cfg.qn_grad_tol.
    Components of the returned estimate are sorted by mu ascending.
    """
    if cfg is None:
        cfg = EstimatorConfig()
    cfg.validate()
    y, x = spec.regression_frame(sample)
    _check_sample_size(len(y), spec)

    runs = []
    for start in range(cfg.n_starts):
        rng = np.random.default_rng(seed_key(cfg.seed) + (start,))
        init = _random_init(y, x, spec, rng, cfg.sigma_floor)
        runs.append(_em_run(y, x, spec, init, cfg, rng))

    usable = [(i, r) for i, r in enumerate(runs) if not r.degenerate]
    if not usable:
        raise EstimationError(
            "all EM starts degenerate",
            diagnostics=[f"start {i}: {'; '.join(r.notes)}" for i, r in enumerate(runs)])
    best_index, best = usable[0]
    for i, r in usable[1:]:
        if r.loglik > best.loglik:
            best_index, best = i, r

    free0 = encode(best.params, spec)
    fit_sample = _frame_sample(y, x, spec)

    def neg(v):
        return -quasi_loglik(decode(v, spec), fit_sample, spec)

    def neg_grad(v):
        return -score(v, fit_sample, spec)

    res = minimize(neg, free0, jac=neg_grad, method="BFGS",
                   options={"maxiter": cfg.qn_max_iter, "gtol": cfg.qn_grad_tol})
    notes = [f"start {i}: {note}" for i, r in enumerate(runs) for note in r.notes]
    ll_qn = -float(res.fun)
    if ll_qn >= best.loglik:
        theta_free = np.asarray(res.x, dtype=float)
        loglik = ll_qn
    else:
        theta_free = free0
        loglik = best.loglik
        notes.append("quasi-Newton refinement discarded (no improvement)")
    grad = score(theta_free, fit_sample, spec)
    converged = bool(np.max(np.abs(grad)) <= cfg.qn_grad_tol)

    theta_hat = decode(theta_free, spec).sorted_by_mu()
    return EstimationResult(
        theta_hat=theta_hat,
        loglik=loglik,
        converged=converged,
        n_iterations={"em": best.n_iter, "qn": int(res.nit)},
        start_index=best_index,
        notes=notes,
    )


def _frame_sample(y: np.ndarray, x: np.ndarray, spec: ModelSpec) -> Sample:
    if spec.form == "hmm":
        return Sample(y=y, w=x)
    # the autoregressive frame re-lags internally, so rebuild the raw series
    return Sample(y=np.concatenate([x[:1], y]), w=np.zeros(len(y) + 1))


def align_permutation(theta_hat: MixtureParams,
                      reference: MixtureParams) -> MixtureParams:
    """Relabel theta_hat's components to best match `reference`.

    Minimizes the summed squared distance of stacked (mu, gamma, sigma)
    blocks over all label permutations (weights tag along but do not enter
    the distance).
    """
    if theta_hat.d != reference.d:
        raise ValidationError(f"component counts differ: {theta_hat.d} vs "
                              f"{reference.d}")
    d = theta_hat.d
    blocks_hat = np.column_stack([theta_hat.mu_vec, theta_hat.gamma_vec,
                                  theta_hat.sigma_vec])
    blocks_ref = np.column_stack([reference.mu_vec, reference.gamma_vec,
                                  reference.sigma_vec])
    cost = ((blocks_hat[:, None, :] - blocks_ref[None, :, :]) ** 2).sum(axis=2)
    row_ind, col_ind = linear_sum_assignment(cost)
    perm = np.empty(d, dtype=int)
    perm[col_ind] = row_ind
    return theta_hat.permuted(perm.tolist())
