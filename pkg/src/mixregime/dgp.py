"""Simulation of two-layer regime-switching data generating processes.

The observable triple (Y_t, Z_t, W_t) is driven by a latent regime chain
S_t whose one-step transition probabilities depend on the lagged value of
Z.  Z and W follow stationary Gaussian AR(1) laws, and the three
contemporaneous innovations may be correlated: corr(U1, U2) = rho ties the
outcome noise to the Z innovations, corr(U1, U3) = omega ties it to the W
innovations (W exogeneity fails when omega != 0).

Two outcome recursions are supported:

* regime regression:  Y_t = mu(S_t) + gamma(S_t) W_t + sigma(S_t) U1_t
* switching AR:       Y_t = mu(S_t) + phi Y_{t-1}   + sigma(S_t) U1_t

All simulators are pure functions of (params, T, burn_in, seed) and return
bit-identical output for identical inputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError, ParseError, ValidationError

# Sub-stream labels: one independent RNG stream per noise consumer, so that
# extending T never reshuffles earlier draws.
_STREAM_OUTCOME = 0
_STREAM_Z = 1
_STREAM_W = 2
_STREAM_REGIME = 3
_STREAM_INIT = 4

DEFAULT_BURN_IN = 500


def seed_key(seed) -> tuple:
    """Normalize a seed (int or sequence of ints) to a tuple of ints."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def stream_rng(seed, label: int) -> np.random.Generator:
    """Independent generator for sub-stream `label` of `seed`."""
    return np.random.default_rng(seed_key(seed) + (label,))


@dataclass
class RegimeOutcome:
    """Outcome-equation coefficients for a single regime."""

    mu: float
    gamma: float
    sigma: float

    def violations(self) -> list:
        out = []
        if not np.isfinite([self.mu, self.gamma, self.sigma]).all():
            out.append("RegimeOutcome fields must be finite")
        if not self.sigma > 0:
            out.append(f"sigma must be > 0, got {self.sigma}")
        return out

    def to_json(self) -> dict:
        return {"mu": self.mu, "gamma": self.gamma, "sigma": self.sigma}

    @classmethod
    def from_json(cls, obj: dict) -> "RegimeOutcome":
        return cls(mu=float(obj["mu"]), gamma=float(obj["gamma"]),
                   sigma=float(obj["sigma"]))


@dataclass
class TransitionSpec:
    """Covariate-dependent transition kernel of the regime chain.

    Row probabilities follow a multinomial logit over destination regimes:
    given source s' and covariate value z, the logit of destination s is
    alpha[s', s] + beta[s', s] * z.  For d = 2 with off-diagonal
    coefficients fixed at zero this reduces to a logistic stay/leave rule
    with stay probability 1 / (1 + exp(-(alpha_s + beta_s z))).
    """

    d: int
    alpha: np.ndarray
    beta: np.ndarray
    link: str = "logistic"

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)

    @classmethod
    def two_state(cls, stay_intercepts: Sequence[float],
                  stay_slopes: Sequence[float]) -> "TransitionSpec":
        """Two-regime kernel from per-regime stay coefficients."""
        a1, a2 = stay_intercepts
        b1, b2 = stay_slopes
        return cls(d=2, alpha=np.array([[a1, 0.0], [0.0, a2]]),
                   beta=np.array([[b1, 0.0], [0.0, b2]]))

    def violations(self) -> list:
        out = []
        if self.d < 2:
            out.append(f"transition must have d >= 2 regimes, got {self.d}")
        if self.link != "logistic":
            out.append(f"unsupported link {self.link!r}")
        for name, mat in (("alpha", self.alpha), ("beta", self.beta)):
            if mat.shape != (self.d, self.d):
                out.append(f"transition {name} must be {self.d}x{self.d}, "
                           f"got {mat.shape}")
            elif not np.isfinite(mat).all():
                out.append(f"transition {name} must be finite")
        return out

    def to_json(self) -> dict:
        return {"d": self.d, "alpha": self.alpha.tolist(),
                "beta": self.beta.tolist(), "link": self.link}

    @classmethod
    def from_json(cls, obj: dict) -> "TransitionSpec":
        return cls(d=int(obj["d"]), alpha=obj["alpha"], beta=obj["beta"],
                   link=obj.get("link", "logistic"))


@dataclass
class ArLaw:
    """Stationary Gaussian AR(1): x_t = intercept + slope x_{t-1} + sd e_t."""

    intercept: float
    slope: float
    noise_sd: float

    @property
    def stationary_mean(self) -> float:
        return self.intercept / (1.0 - self.slope)

    @property
    def stationary_sd(self) -> float:
        return self.noise_sd / math.sqrt(1.0 - self.slope ** 2)

    def violations(self) -> list:
        out = []
        if not np.isfinite([self.intercept, self.slope, self.noise_sd]).all():
            out.append("ArLaw fields must be finite")
            return out
        if not abs(self.slope) < 1:
            out.append(f"|slope| must be < 1 for stationarity, got {self.slope}")
        if not self.noise_sd > 0:
            out.append(f"noise_sd must be > 0, got {self.noise_sd}")
        return out

    def to_json(self) -> dict:
        return {"intercept": self.intercept, "slope": self.slope,
                "noise_sd": self.noise_sd}

    @classmethod
    def from_json(cls, obj: dict) -> "ArLaw":
        return cls(intercept=float(obj["intercept"]), slope=float(obj["slope"]),
                   noise_sd=float(obj["noise_sd"]))


@dataclass
class NoiseCorrelation:
    """Correlation of the outcome noise U1 with the Z and W innovations."""

    rho: float = 0.0
    omega: float = 0.0

    def matrix(self) -> np.ndarray:
        return np.array([[1.0, self.rho, self.omega],
                         [self.rho, 1.0, 0.0],
                         [self.omega, 0.0, 1.0]])

    def violations(self) -> list:
        out = []
        if not np.isfinite([self.rho, self.omega]).all():
            out.append("correlations must be finite")
            return out
        # positive definiteness of the 3x3 matrix <=> rho^2 + omega^2 < 1
        if self.rho ** 2 + self.omega ** 2 >= 1.0:
            out.append("noise correlation matrix must be positive definite "
                       f"(rho^2 + omega^2 = {self.rho ** 2 + self.omega ** 2:.6g} >= 1)")
        return out

    def to_json(self) -> dict:
        return {"rho": self.rho, "omega": self.omega}

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseCorrelation":
        return cls(rho=float(obj["rho"]), omega=float(obj["omega"]))


@dataclass
class HmmDgpParams:
    """Full truth for one simulated design."""

    outcomes: list  # list[RegimeOutcome], one per regime
    transition: TransitionSpec
    z_law: ArLaw
    w_law: ArLaw
    noise: NoiseCorrelation = field(default_factory=NoiseCorrelation)
    ar_coefficient: Optional[float] = None  # phi of the switching AR variant

    @property
    def d(self) -> int:
        return self.transition.d

    def violations(self) -> list:
        out = []
        for i, oc in enumerate(self.outcomes):
            out.extend(f"outcomes[{i}]: {v}" for v in oc.violations())
        out.extend(self.transition.violations())
        out.extend(f"z_law: {v}" for v in self.z_law.violations())
        out.extend(f"w_law: {v}" for v in self.w_law.violations())
        out.extend(self.noise.violations())
        if len(self.outcomes) != self.transition.d:
            out.append(f"need one outcome per regime: got {len(self.outcomes)} "
                       f"outcomes for d = {self.transition.d}")
        if self.ar_coefficient is not None and not math.isfinite(self.ar_coefficient):
            out.append("ar_coefficient must be finite when present")
        return out

    def validate(self) -> None:
        violations = self.violations()
        if violations:
            raise ValidationError(violations)

    def params_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:12]

    def to_json(self) -> dict:
        return {
            "outcomes": [oc.to_json() for oc in self.outcomes],
            "transition": self.transition.to_json(),
            "z_law": self.z_law.to_json(),
            "w_law": self.w_law.to_json(),
            "noise": self.noise.to_json(),
            "ar_coefficient": self.ar_coefficient,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HmmDgpParams":
        phi = obj.get("ar_coefficient")
        return cls(
            outcomes=[RegimeOutcome.from_json(o) for o in obj["outcomes"]],
            transition=TransitionSpec.from_json(obj["transition"]),
            z_law=ArLaw.from_json(obj["z_law"]),
            w_law=ArLaw.from_json(obj["w_law"]),
            noise=NoiseCorrelation.from_json(obj["noise"]),
            ar_coefficient=None if phi is None else float(phi),
        )


@dataclass
class Sample:
    """One observed dataset; regime path s (1-based labels) kept if simulated."""

    y: np.ndarray
    w: np.ndarray
    z: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    noise: Optional[dict] = None  # raw (U1, U2, U3) draws, debug only

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float)
        if self.s is not None:
            self.s = np.asarray(self.s, dtype=int)

    @property
    def T(self) -> int:
        return len(self.y)

    def validate(self) -> None:
        out = []
        if self.T < 1:
            out.append("sample must contain at least one observation")
        for name in ("w", "z", "s"):
            vec = getattr(self, name)
            if vec is not None and len(vec) != self.T:
                out.append(f"{name} has length {len(vec)}, expected {self.T}")
        if self.s is not None and self.s.size and self.s.min() < 1:
            out.append("regime labels must be >= 1")
        if out:
            raise ValidationError(out)


def transition_row(spec: TransitionSpec, z: float, from_regime: int) -> np.ndarray:
    """Transition probabilities out of `from_regime` (1-based) at covariate z.

    Returns a strictly positive length-d probability vector over destination
    regimes, summing to one within 1e-12.
    """
    if not (isinstance(from_regime, (int, np.integer)) and 1 <= from_regime <= spec.d):
        raise ValidationError(f"from_regime must lie in 1..{spec.d}, got {from_regime}")
    if not np.isfinite(z):
        raise ValidationError(f"covariate z must be finite, got {z}")
    logits = spec.alpha[from_regime - 1] + spec.beta[from_regime - 1] * z
    logits = logits - logits.max()
    probs = np.exp(logits)
    return probs / probs.sum()


def _simulate_regime_path(spec: TransitionSpec, z_prev: np.ndarray, s0: int,
                          uniforms: np.ndarray) -> np.ndarray:
    """Regime chain driven by lagged z; s0 and the result are 0-based."""
    n = len(z_prev)
    d = spec.d
    s = np.empty(n, dtype=np.int64)
    if d == 2:
        # stay/leave shortcut: P(dest = 0 | src) via the two-point softmax
        l0 = spec.alpha[:, 0][:, None] + spec.beta[:, 0][:, None] * z_prev[None, :]
        l1 = spec.alpha[:, 1][:, None] + spec.beta[:, 1][:, None] * z_prev[None, :]
        p_first = 1.0 / (1.0 + np.exp(l1 - l0))  # shape (2, n)
        p0 = p_first[0].tolist()
        p1 = p_first[1].tolist()
        u = uniforms.tolist()
        out = s.tolist()
        cur = s0
        for t in range(n):
            cur = (1 if u[t] >= p0[t] else 0) if cur == 0 else (1 if u[t] >= p1[t] else 0)
            out[t] = cur
        return np.asarray(out, dtype=np.int64)
    # general d: per-source logits, inverse-CDF draw per step
    logits = spec.alpha[:, None, :] + spec.beta[:, None, :] * z_prev[None, :, None]
    logits -= logits.max(axis=2, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=2, keepdims=True)
    cum = np.cumsum(probs, axis=2)  # (src, t, dest)
    cur = s0
    for t in range(n):
        cur = int(np.searchsorted(cum[cur, t], uniforms[t], side="right"))
        cur = min(cur, d - 1)  # guard u == 1.0 roundoff
        s[t] = cur
    return s


def _ar1_path(law: ArLaw, x0: float, shocks: np.ndarray) -> np.ndarray:
    driven = law.intercept + law.noise_sd * shocks
    out, _ = lfilter([1.0], [1.0, -law.slope], driven, zi=[law.slope * x0])
    return out


def _simulate(params: HmmDgpParams, T: int, burn_in: int, seed, msar: bool,
              debug: bool) -> Sample:
    params.validate()
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    if burn_in < 0:
        raise ValidationError(f"burn_in must be >= 0, got {burn_in}")
    if msar and params.ar_coefficient is None:
        raise ConfigurationError(
            "switching-AR simulation requires ar_coefficient to be set")

    d = params.d
    n = burn_in + T
    eps = np.column_stack([
        stream_rng(seed, _STREAM_OUTCOME).standard_normal(n),
        stream_rng(seed, _STREAM_Z).standard_normal(n),
        stream_rng(seed, _STREAM_W).standard_normal(n),
    ])
    chol = np.linalg.cholesky(params.noise.matrix())
    u = eps @ chol.T  # columns: U1 (outcome), U2 (z), U3 (w)
    uniforms = stream_rng(seed, _STREAM_REGIME).random(n)

    init = stream_rng(seed, _STREAM_INIT)
    z0 = params.z_law.stationary_mean + params.z_law.stationary_sd * init.standard_normal()
    w0 = params.w_law.stationary_mean + params.w_law.stationary_sd * init.standard_normal()
    s0 = int(init.integers(d))

    z = _ar1_path(params.z_law, z0, u[:, 1])
    w = _ar1_path(params.w_law, w0, u[:, 2])
    z_prev = np.concatenate(([z0], z[:-1]))
    s = _simulate_regime_path(params.transition, z_prev, s0, uniforms)

    mu = np.array([oc.mu for oc in params.outcomes])
    gamma = np.array([oc.gamma for oc in params.outcomes])
    sigma = np.array([oc.sigma for oc in params.outcomes])
    if msar:
        driven = mu[s] + sigma[s] * u[:, 0]
        y, _ = lfilter([1.0], [1.0, -params.ar_coefficient], driven, zi=[0.0])
    else:
        y = mu[s] + gamma[s] * w + sigma[s] * u[:, 0]

    sl = slice(burn_in, None)
    meta = {
        "origin": "simulated",
        "variant": "msar" if msar else "hmm",
        "seed": list(seed_key(seed)),
        "params_hash": params.params_hash(),
        "T": T,
        "burn_in": burn_in,
    }
    sample = Sample(y=y[sl], w=w[sl], z=z[sl], s=s[sl] + 1, meta=meta)
    if debug:
        sample.noise = {"u1": u[sl, 0].copy(), "u2": u[sl, 1].copy(),
                        "u3": u[sl, 2].copy()}
    return sample


def simulate_hmm(params: HmmDgpParams, T: int, burn_in: int = DEFAULT_BURN_IN,
                 seed=0, debug: bool = False) -> Sample:
    """Simulate the regime-regression process for T steps after burn_in.

    Per time step: the Z and W AR(1) laws advance on their (correlated)
    innovations, the regime S_t is drawn from the transition row at
    (Z_{t-1}, S_{t-1}), and Y_t = mu(S_t) + gamma(S_t) W_t + sigma(S_t) U1_t.
    `debug=True` retains the raw correlated noise draws on the sample.
    """
    return _simulate(params, T, burn_in, seed, msar=False, debug=debug)


def simulate_msar(params: HmmDgpParams, T: int, burn_in: int = DEFAULT_BURN_IN,
                  seed=0, debug: bool = False) -> Sample:
    """Simulate the switching autoregression Y_t = mu(S_t) + phi Y_{t-1} + sigma(S_t) U1_t.

    Requires params.ar_coefficient; the W path is generated and returned even
    though the outcome equation ignores it.
    """
    return _simulate(params, T, burn_in, seed, msar=True, debug=debug)


_CSV_COLUMNS = ("y", "w", "z", "s")


def save_sample(sample: Sample, path) -> None:
    """Write a sample as CSV with header y,w[,z][,s] at full precision."""
    sample.validate()
    cols = ["y", "w"]
    if sample.z is not None:
        cols.append("z")
    if sample.s is not None:
        cols.append("s")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for t in range(sample.T):
            row = [format(sample.y[t], ".17g"), format(sample.w[t], ".17g")]
            if sample.z is not None:
                row.append(format(sample.z[t], ".17g"))
            if sample.s is not None:
                row.append(str(int(sample.s[t])))
            writer.writerow(row)


def load_sample(path) -> Sample:
    """Read a CSV sample; columns y,w required, z and s optional.

    Raises ParseError (with the 1-based offending line number) on missing
    columns, unknown columns, ragged rows, or non-finite cells.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in _CSV_COLUMNS]
        if unknown:
            raise ParseError(f"unknown column(s) {unknown}", line=1)
        if header[:2] != ["y", "w"]:
            raise ParseError(f"header must start with y,w; got {header}", line=1)
        if header != [c for c in _CSV_COLUMNS if c in header]:
            raise ParseError(f"columns must appear in order y,w,z,s; got {header}",
                             line=1)
        has_z = "z" in header
        has_s = "s" in header
        rows = {c: [] for c in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", line=lineno)
            for col, cell in zip(header, row):
                cell = cell.strip()
                if col == "s":
                    try:
                        val = int(float(cell))
                    except ValueError:
                        raise ParseError(f"non-integer regime label {cell!r}",
                                         line=lineno) from None
                    if float(cell) != val or val < 1:
                        raise ParseError(f"regime label must be a positive "
                                         f"integer, got {cell!r}", line=lineno)
                else:
                    try:
                        val = float(cell)
                    except ValueError:
                        raise ParseError(f"non-numeric value {cell!r} in column "
                                         f"{col}", line=lineno) from None
                    if not math.isfinite(val):
                        raise ParseError(f"non-finite value {cell!r} in column "
                                         f"{col}", line=lineno)
                rows[col].append(val)
    if not rows["y"]:
        raise ParseError("no data rows", line=2)
    sample = Sample(
        y=np.array(rows["y"]),
        w=np.array(rows["w"]),
        z=np.array(rows["z"]) if has_z else None,
        s=np.array(rows["s"], dtype=int) if has_s else None,
        meta={"origin": "file", "path": str(path)},
    )
    sample.validate()
    return sample
