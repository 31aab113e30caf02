"""Simulation scenarios with distributional mediators, truth oracles and replication campaigns.

Scenario I has distributional mediator and outcome; Scenario II has a
distributional mediator with scalar exposure and outcome.  A true
distribution ``M_i`` is only observed through ``m`` draws, and so is a
distributional outcome.

Parameter conventions:

* ``N(a, s)`` takes a standard deviation ``s``;
* ``Laplace(mu, 1)`` has location ``mu`` and scale 1;
* ``IG(h1, h2)`` has shape ``h1`` and scale ``h2`` (mean ``h2 / (h1 - 1)``);
* ``<M, N(a, s)>`` is the L2[0, 1] inner product of the two quantile
  functions on the midpoint grid of size ``m``, using the true quantiles of
  ``M``.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import special, stats

from .errors import ConfigError, RomaError
from .estimator import fit, nde_coords, nie_coords, with_regularization
from .inference import infer
from .kernels import gaussian, linear
from .object_spaces import MetricKind, PointCloud, midpoint_grid
from .tuning import select

SCENARIO_I = ("I.1", "I.2", "I.3", "I.4")
SCENARIO_II = tuple(f"II.{k}" for k in range(1, 9))
SETTINGS = SCENARIO_I + SCENARIO_II
LINEAR_SETTINGS = ("II.1", "II.2", "II.3", "II.4")
ORACLE_CHUNK = 20_000


# --------------------------------------------------------------------------
# Specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """A simulation setting.

    ``direct_scale`` and ``indirect_scale`` only apply to ``I.1``: the direct
    term ``h(X)`` becomes ``1 + direct_scale * (h(X) - 1)`` and the mediator
    location ``g(X)`` becomes ``g(0) + indirect_scale * (g(X) - g(0))``.
    Zero switches off the corresponding effect; scaling the exposure-mediator
    path leaves the outcome noise nearly unchanged, unlike scaling the
    mediator term of the outcome spread.
    """

    id: str
    n: int = 100
    m: int = 100
    seed: int = 0
    kernel_mode: Optional[str] = None
    direct_scale: float = 1.0
    indirect_scale: float = 1.0

    def __post_init__(self):
        if self.id not in SETTINGS:
            raise ConfigError(f"unknown setting {self.id!r}; expected one of {', '.join(SETTINGS)}")
        if self.n < 10:
            raise ConfigError("n must be >= 10")
        if self.m < 10:
            raise ConfigError("m must be >= 10")
        mode = self.kernel_mode or ("linear" if self.id in LINEAR_SETTINGS else "nonlinear")
        if mode not in ("linear", "nonlinear"):
            raise ConfigError(f"kernel_mode must be 'linear' or 'nonlinear', got {mode!r}")
        object.__setattr__(self, "kernel_mode", mode)
        if self.id != "I.1" and (self.direct_scale != 1.0 or self.indirect_scale != 1.0):
            raise ConfigError("effect scales are only defined for setting I.1")

    @property
    def scenario(self) -> str:
        return "I" if self.id in SCENARIO_I else "II"

    @property
    def levels(self) -> np.ndarray:
        return midpoint_grid(self.m)

    def kernels(self):
        """Kernel families; Gaussian bandwidths are placeholders replaced by tuning."""
        if self.kernel_mode == "linear":
            return linear(MetricKind.EUCLIDEAN), linear(MetricKind.WASSERSTEIN)
        return gaussian(MetricKind.EUCLIDEAN, 1.0), gaussian(MetricKind.WASSERSTEIN, 1.0)


# --------------------------------------------------------------------------
# Structural equations
# --------------------------------------------------------------------------


def g_one(x):
    return np.e / (1.0 + np.exp(-(x**2)))


def h_one(x):
    return -np.exp(-(x**2)) + 2.0


def g_two(x):
    return 2.0 * np.sin(np.pi * x) + np.exp(-(x**2))


def h_two(x):
    return 0.5 * np.sin(x) + np.exp(-(x**2)) + np.e / (1.0 + np.exp(-(x**2)))


def reference_inner(mu, sd, a, s, m: int):
    """``<N(mu, sd), N(a, s)>`` on the midpoint grid of size ``m``."""
    z = special.ndtri(midpoint_grid(m))
    return mu * a + np.asarray(sd) * s * np.mean(z**2) + (np.asarray(mu) * s + a * np.asarray(sd)) * np.mean(z)


@dataclass
class _Noise:
    """Exogenous draws, shared across exposures so that oracles use common numbers."""

    u: np.ndarray  # mediator-location noise
    sd_m: np.ndarray  # mediator spread (Scenario II) or unused
    eps: np.ndarray  # outcome noise
    spread: np.ndarray  # inverse-gamma spread factor (I.3) or unused
    zm: Optional[np.ndarray] = None  # standard normal draws for observing M
    zy: Optional[np.ndarray] = None  # standard normal draws for observing Y


def _draw_noise(spec: ScenarioSpec, rng: np.random.Generator, size: int, observe_m: bool, observe_y: bool) -> _Noise:
    sid = spec.id
    if spec.scenario == "I":
        u = rng.uniform(-1.0, 1.0, size)
        sd_m = np.full(size, 0.5)
        eps = rng.normal(0.0, 0.1, size)
        spread = stats.invgamma.rvs(16.0, scale=15.0, size=size, random_state=rng) if sid == "I.3" else np.ones(size)
    else:
        if sid in ("II.4", "II.8"):
            u = rng.normal(0.0, 0.2, size)
        else:
            u = rng.laplace(0.0, 1.0, size)
        sd_m = 0.5 * stats.invgamma.rvs(4.0, scale=3.0, size=size, random_state=rng)
        sd = {"II.1": 0.1, "II.5": 0.1, "II.6": 1.0}.get(sid, 0.5)
        eps = rng.normal(0.0, sd, size)
        spread = np.ones(size)
    zm = rng.standard_normal((size, spec.m)) if observe_m else None
    zy = rng.standard_normal((size, spec.m)) if observe_y and spec.scenario == "I" else None
    return _Noise(u, sd_m, eps, spread, zm, zy)


def _mediator_location(spec: ScenarioSpec, x, u):
    sid = spec.id
    if sid == "I.1":
        return g_one(0.0) + spec.indirect_scale * (g_one(x) - g_one(0.0)) + u
    if sid in ("I.2", "I.3"):
        return g_one(x) + u
    if sid == "I.4" or sid in ("II.4", "II.8"):
        return u + 0.0 * x
    if sid == "II.1":
        return 2.0 * x + u
    if sid in ("II.2", "II.3"):
        return x + u
    if sid in ("II.5", "II.7"):
        return h_two(x) + u
    return np.e / (1.0 + np.exp(-(x**2))) + u  # II.6


def _outcome(spec: ScenarioSpec, x, mu_m, sd_m, nz: _Noise):
    """Scenario I: ``(mean, sd)`` of the outcome law.  Scenario II: scalar outcome."""
    sid, m = spec.id, spec.m
    ip_a = reference_inner(mu_m, sd_m, 0.7, 0.5, m)
    if sid == "I.1":
        hx = 1.0 + spec.direct_scale * (h_one(x) - 1.0)
        return hx + nz.eps, hx + ip_a
    if sid == "I.2":
        ip = reference_inner(mu_m, sd_m, 0.25, 1.0, m)
        return -ip + nz.eps, ip
    if sid == "I.3":
        return h_one(x) + nz.eps, h_one(x) * nz.spread
    if sid == "I.4":
        return ip_a + nz.eps, h_one(x)
    ip_b = reference_inner(mu_m, sd_m, 1.0, 1.0, m)
    if sid in ("II.1", "II.4"):
        return -2.0 * x + ip_a + 1.0 + nz.eps
    if sid in ("II.2", "II.6"):
        return ip_b + nz.eps
    if sid == "II.3":
        return -x + nz.eps
    if sid in ("II.5", "II.8"):
        return g_two(x) + ip_a + nz.eps
    return g_two(x) + nz.eps  # II.7


def _sorted_draws(loc, sd, z):
    return np.sort(loc[:, None] + sd[:, None] * z, axis=1)


# --------------------------------------------------------------------------
# Data generation
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Simulated sample: scalar exposures, mediator draws, outcomes.

    ``y`` is ``(n,)`` for scalar outcomes and ``(n, m)`` sorted draws for
    distributional outcomes.
    """

    spec: ScenarioSpec
    x: np.ndarray
    m_draws: np.ndarray
    y: np.ndarray

    @property
    def mediators(self) -> PointCloud:
        return PointCloud.distributions(self.m_draws, self.spec.levels)

    @property
    def outcomes(self):
        if self.y.ndim == 1:
            return self.y
        return PointCloud.distributions(self.y, self.spec.levels)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def generate(spec: ScenarioSpec, seed=None) -> Dataset:
    """Draw one dataset; ``seed`` (int or SeedSequence) defaults to ``spec.seed``."""
    rng = _rng(spec.seed if seed is None else seed)
    n = spec.n
    x = rng.standard_normal(n)
    nz = _draw_noise(spec, rng, n, observe_m=True, observe_y=True)
    mu_m = _mediator_location(spec, x, nz.u)
    m_draws = _sorted_draws(mu_m, nz.sd_m, nz.zm)
    out = _outcome(spec, x, mu_m, nz.sd_m, nz)
    if spec.scenario == "I":
        y = _sorted_draws(out[0], out[1], nz.zy)
    else:
        y = out
    return Dataset(spec, x, m_draws, y)


# --------------------------------------------------------------------------
# Truth oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrueEffects:
    nde: np.ndarray
    nie: np.ndarray
    te: np.ndarray
    se: dict
    contrast: tuple
    size: int


def _potential_outcome_coords(spec: ScenarioSpec, x_out: float, x_med: float, nz: _Noise) -> np.ndarray:
    """Embedded ``V(x_out, M(x_med))`` for each noise draw (rows)."""
    size = nz.u.shape[0]
    mu_m = _mediator_location(spec, np.full(size, x_med), nz.u)
    out = _outcome(spec, np.full(size, x_out), mu_m, nz.sd_m, nz)
    if spec.scenario == "II":
        return np.asarray(out)[:, None]
    # distributional outcome: observed through m draws, embedded by weighted quantiles
    return _sorted_draws(out[0], out[1], nz.zy) / np.sqrt(spec.m)


def true_effects(spec: ScenarioSpec, x: float = 1.0, x_star: float = 0.0, size: int = 100_000, seed: int = 12345) -> TrueEffects:
    """Monte Carlo effects on the same observation pipeline as the estimator.

    The four potential outcomes are evaluated with common random numbers, so
    exactly-zero effects come out exactly zero.  ``se`` holds Monte Carlo
    standard errors of the squared-norm-free coordinates (max over the grid).
    """
    if size < 2:
        raise ConfigError("oracle size must be >= 2")
    rng = _rng(seed)
    sums = {k: 0.0 for k in ("nde", "nie", "te")}
    sq = {k: 0.0 for k in sums}
    done = 0
    while done < size:
        k = min(ORACLE_CHUNK, size - done)
        nz = _draw_noise(spec, rng, k, observe_m=False, observe_y=True)
        v_xx = _potential_outcome_coords(spec, x, x, nz)
        v_xs = _potential_outcome_coords(spec, x, x_star, nz)
        v_ss = _potential_outcome_coords(spec, x_star, x_star, nz)
        parts = {"nde": v_xs - v_ss, "nie": v_xx - v_xs, "te": v_xx - v_ss}
        for key, val in parts.items():
            sums[key] = sums[key] + val.sum(axis=0)
            sq[key] = sq[key] + (val**2).sum(axis=0)
        done += k
    mean = {k: sums[k] / size for k in sums}
    se = {k: float(np.max(np.sqrt(np.maximum(sq[k] / size - mean[k] ** 2, 0.0) / size))) for k in sums}
    return TrueEffects(mean["nde"], mean["nie"], mean["te"], se, (x, x_star), size)


# --------------------------------------------------------------------------
# Campaigns
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    contrast: tuple = (1.0, 0.0)
    q: float = 0.05
    l: Optional[int] = None
    tune: bool = True
    eps: Optional[float] = None
    eps_tilde: Optional[float] = None
    bandwidth_x: Optional[float] = None
    bandwidth_m: Optional[float] = None
    inference: bool = True
    inference_shrink: float = 0.1
    strategy: str = "split"
    workers: Optional[int] = None


@dataclass
class ReplicationReport:
    spec: ScenarioSpec
    reps: int
    n_ok: int
    failures: list
    mse: dict
    coverage: dict
    rejection: dict
    truth: TrueEffects
    records: list = field(repr=False, default_factory=list)
    runtime: float = 0.0

    def to_dict(self) -> dict:
        return {
            "setting": self.spec.id,
            "n": self.spec.n,
            "m": self.spec.m,
            "seed": self.spec.seed,
            "kernel_mode": self.spec.kernel_mode,
            "reps": self.reps,
            "n_ok": self.n_ok,
            "n_failed": len(self.failures),
            "failures": self.failures,
            "mse": {k: {"mean": v[0], "se": v[1]} for k, v in self.mse.items()},
            "coverage": self.coverage,
            "rejection": self.rejection,
            "runtime_seconds": self.runtime,
        }


def _fit_replicate(spec: ScenarioSpec, data: Dataset, cfg: CampaignConfig):
    kx, km = spec.kernels()
    mcloud = data.mediators
    y = data.outcomes
    if cfg.tune:
        bx = None if cfg.bandwidth_x is None else [cfg.bandwidth_x]
        bm = None if cfg.bandwidth_m is None else [cfg.bandwidth_m]
        sel = select(data.x, mcloud, y, kx, km, bandwidths_x=bx, bandwidths_m=bm,
                     strategy=cfg.strategy)
        return fit(data.x, mcloud, y, **sel.fit_kwargs())
    if cfg.eps is None or cfg.eps_tilde is None:
        raise ConfigError("fixed-hyperparameter mode needs eps and eps_tilde")
    if kx.kind == "gaussian":
        if cfg.bandwidth_x is None or cfg.bandwidth_m is None:
            raise ConfigError("fixed-hyperparameter mode needs both bandwidths")
        kx, km = kx.with_bandwidth(cfg.bandwidth_x), km.with_bandwidth(cfg.bandwidth_m)
    return fit(data.x, mcloud, y, kx, km, cfg.eps, cfg.eps_tilde)


def run_replicate(spec: ScenarioSpec, seed, truth: TrueEffects, cfg: CampaignConfig) -> dict:
    """One generate-tune-fit-estimate-infer cycle; errors are returned, not raised."""
    try:
        data = generate(spec, seed)
        f = _fit_replicate(spec, data, cfg)
        x, xs = cfg.contrast
        nde = nde_coords(f, x, xs)
        nie = nie_coords(f, x, xs)
        rec = {
            "sq_err": {
                "NDE": float(np.sum((nde - truth.nde) ** 2)),
                "NIE": float(np.sum((nie - truth.nie) ** 2)),
                "TE": float(np.sum((nde + nie - truth.te) ** 2)),
            },
            "eps": f.eps,
            "eps_tilde": f.eps_tilde,
        }
        if cfg.inference:
            fi = f if cfg.inference_shrink == 1.0 else with_regularization(
                f, f.eps * cfg.inference_shrink, f.eps_tilde * cfg.inference_shrink)
            res = infer(fi, x, xs, q=cfg.q, l=cfg.l)
            rec["coverage"] = {
                "NDE": float(np.mean(res["NDE"].ci.covers(truth.nde))),
                "NIE": float(np.mean(res["NIE"].ci.covers(truth.nie))),
            }
            rec["p_value"] = {k: res[k].p_value for k in ("NDE", "NIE")}
        return rec
    except (RomaError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


def _mean_se(vals) -> tuple:
    a = np.asarray(vals, dtype=float)
    if a.size == 0:
        return (float("nan"), float("nan"))
    se = float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
    return (float(a.mean()), se)


def _workers(cfg: CampaignConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    return max(1, int(os.environ.get("ROMA_THREADS", "1")))


def run_campaign(spec: ScenarioSpec, reps: int, cfg: CampaignConfig | None = None,
                 truth: TrueEffects | None = None, oracle_size: int = 100_000) -> ReplicationReport:
    """Replicate ``reps`` times with seeds spawned from ``spec.seed``.

    Replicate ``r`` always uses the ``r``-th spawned seed, so serial and
    parallel runs give identical reports.
    """
    if reps < 2:
        raise ConfigError("reps must be >= 2")
    cfg = CampaignConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    if truth is None:
        truth = true_effects(spec, *cfg.contrast, size=oracle_size)
    seeds = np.random.SeedSequence(spec.seed).spawn(reps)
    workers = _workers(cfg)
    if workers == 1:
        records = [run_replicate(spec, s, truth, cfg) for s in seeds]
    else:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(run_replicate, [spec] * reps, seeds, [truth] * reps, [cfg] * reps))
    ok = [r for r in records if "error" not in r]
    failures = [{"replicate": i, "error": r["error"]} for i, r in enumerate(records) if "error" in r]
    mse = {k: _mean_se([r["sq_err"][k] for r in ok]) for k in ("TE", "NDE", "NIE")}
    coverage, rejection = {}, {}
    if cfg.inference and ok:
        for k in ("NDE", "NIE"):
            coverage[k] = float(np.mean([r["coverage"][k] for r in ok]))
            rejection[k] = float(np.mean([r["p_value"][k] < cfg.q for r in ok]))
    return ReplicationReport(spec, reps, len(ok), failures, mse, coverage, rejection, truth, records,
                             time.perf_counter() - t0)


def with_scales(spec: ScenarioSpec, direct: float, indirect: float) -> ScenarioSpec:
    return replace(spec, direct_scale=direct, indirect_scale=indirect)
