"""Seeded generators for the single-response and two multi-response simulation designs.

The coefficient truth of each scenario is fixed by a documented layout; the
random streams for the training, validation and test sets are spawned from
one ``SeedSequence`` so every split is a deterministic function of the seed.

Layouts (0-based indices)
-------------------------
single
    β = (2, −2, 2, 2, 0, ...); θ[0, 2] = 2, θ[2, 0] = 2, θ[3, 1] = −2.
multi1 (D=6, K=4)
    Responses come in pairs (0,1), (2,3), (4,5).  Pair q shares covariates
    5q..5q+2 and response d owns covariates 15+2d, 16+2d, so each response
    has five main effects of size ±2.  The first four covariates of response
    d interact with Z_0..Z_3 (one modifier each), coefficients ±2.
multi2 (D=24, K=4)
    Four top clusters of six responses, each split into two sub-clusters of
    three.  Cluster c shares covariates b·c..b·c+4 (inside correlated block c)
    with β = 1; sub-cluster s of cluster c adds covariates starting at
    4b + b(2c+s), three of them, with β = 1.  The first two shared
    covariates of cluster c interact with tissue indicator Z_c (θ = 1.5).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .model import CoefficientSet, DesignData, DimensionError, predict


class Scenario(str, Enum):
    SINGLE = "single"
    MULTI1 = "multi1"
    MULTI2 = "multi2"


_DEFAULTS = {
    Scenario.SINGLE: dict(N=100, p=10, K=3, D=1, noise_scale=0.5),
    Scenario.MULTI1: dict(N=100, p=500, K=4, D=6, noise_scale=1.0),
    Scenario.MULTI2: dict(N=100, p=150, K=4, D=24, noise_scale=1.0),
}


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario = Scenario.SINGLE
    N: int | None = None
    p: int | None = None
    K: int | None = None
    D: int | None = None
    noise_scale: float | None = None
    seed: int = 0
    sigma: float = 0.4
    block: int = 10
    test_N: int = 500
    val_N: int = 0

    def __post_init__(self):
        sc = Scenario(self.scenario)
        object.__setattr__(self, "scenario", sc)
        for key, val in _DEFAULTS[sc].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, val)
        self._check()

    def _check(self):
        sc = self.scenario
        if self.N < 1 or self.test_N < 0 or self.val_N < 0:
            raise DimensionError("sample sizes must be positive", "config")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if sc is Scenario.SINGLE:
            if self.p < 4:
                raise DimensionError(f"single scenario needs p >= 4, got {self.p}", "X")
            if self.K < 3:
                raise DimensionError(f"single scenario needs K >= 3, got {self.K}", "Z")
            if self.D != 1:
                raise DimensionError("single scenario has exactly one response", "Y")
        elif sc is Scenario.MULTI1:
            if self.D != 6 or self.K != 4:
                raise DimensionError("multi1 is fixed at D=6, K=4", "Y")
            if self.p < 27:
                raise DimensionError(f"multi1 layout needs p >= 27, got {self.p}", "X")
        else:
            if self.D != 24 or self.K != 4:
                raise DimensionError("multi2 is fixed at D=24, K=4", "Y")
            if not 0 <= self.sigma < 1:
                raise ValueError("block correlation sigma must lie in [0, 1)")
            if self.block < 5:
                raise ValueError("block size must be at least 5")
            if self.p < 12 * self.block:
                raise DimensionError(f"multi2 layout needs p >= {12 * self.block}, got {self.p}", "X")


def truth_single(p: int, K: int) -> CoefficientSet:
    B = np.zeros((p, K + 1, 1))
    B[:4, 0, 0] = [2.0, -2.0, 2.0, 2.0]
    B[0, 1 + 2, 0] = 2.0
    B[2, 1 + 0, 0] = 2.0
    B[3, 1 + 1, 0] = -2.0
    return CoefficientSet(np.zeros(1), np.zeros((K, 1)), B)


def truth_multi1(p: int, K: int = 4, D: int = 6) -> CoefficientSet:
    B = np.zeros((p, K + 1, D))
    for d in range(D):
        q = d // 2
        cov = [5 * q, 5 * q + 1, 5 * q + 2, 15 + 2 * d, 16 + 2 * d]
        sgn = np.array([1, -1, 1, -1, 1]) * (-1) ** q
        B[cov, 0, d] = 2.0 * sgn
        for k, j in enumerate(cov[:4]):
            B[j, 1 + k, d] = 2.0 * (-1) ** (j + k)
    return CoefficientSet(np.zeros(D), np.zeros((K, D)), B)


def truth_multi2(p: int, K: int = 4, D: int = 24, block: int = 10) -> CoefficientSet:
    B = np.zeros((p, K + 1, D))
    for c in range(4):
        shared = np.arange(block * c, block * c + 5)
        for s in range(2):
            sub = 4 * block + block * (2 * c + s) + np.arange(3)
            for d in range(6 * c + 3 * s, 6 * c + 3 * s + 3):
                B[shared, 0, d] = 1.0
                B[sub, 0, d] = 1.0
                B[shared[:2], 1 + c, d] = 1.5
    return CoefficientSet(np.zeros(D), np.zeros((K, D)), B)


def block_normal(rng: np.random.Generator, n: int, p: int, sigma: float, block: int) -> np.ndarray:
    """Rows with unit variances and correlation ``sigma`` inside consecutive blocks.

    A trailing block shorter than ``block`` keeps the same correlation.
    Uses the one-factor representation √σ·f_block + √(1−σ)·e.
    """
    nb = -(-p // block)
    f = rng.standard_normal((n, nb))
    e = rng.standard_normal((n, p))
    return np.sqrt(sigma) * np.repeat(f, block, axis=1)[:, :p] + np.sqrt(1 - sigma) * e


def _truth(cfg: SimConfig) -> CoefficientSet:
    if cfg.scenario is Scenario.SINGLE:
        return truth_single(cfg.p, cfg.K)
    if cfg.scenario is Scenario.MULTI1:
        return truth_multi1(cfg.p, cfg.K, cfg.D)
    return truth_multi2(cfg.p, cfg.K, cfg.D, cfg.block)


def _draw(cfg: SimConfig, truth: CoefficientSet, n: int, seq: np.random.SeedSequence) -> DesignData:
    rng = np.random.default_rng(seq)
    if cfg.scenario is Scenario.MULTI2:
        X = block_normal(rng, n, cfg.p, cfg.sigma, cfg.block)
        Z = (rng.random((n, cfg.K)) < 1.0 / cfg.K).astype(np.float64)
    else:
        X = rng.standard_normal((n, cfg.p))
        Z = rng.standard_normal((n, cfg.K))
    noise = rng.standard_normal((n, cfg.D))
    clean = DesignData(X, Z, np.zeros((n, cfg.D)))
    Y = predict(clean, truth) + cfg.noise_scale * noise
    return DesignData(X, Z, Y)


@dataclass
class SimData:
    config: SimConfig
    truth: CoefficientSet
    train: DesignData
    test: DesignData | None
    validation: DesignData | None = None


def simulate(cfg: SimConfig) -> SimData:
    """Truth plus training, optional validation and test sets for one seed."""
    truth = _truth(cfg)
    s_train, s_val, s_test = np.random.SeedSequence(cfg.seed).spawn(3)
    train = _draw(cfg, truth, cfg.N, s_train)
    val = _draw(cfg, truth, cfg.val_N, s_val) if cfg.val_N else None
    test = _draw(cfg, truth, cfg.test_N, s_test) if cfg.test_N else None
    return SimData(cfg, truth, train, test, val)


def gen_single(cfg: SimConfig | None = None, **kw) -> tuple[DesignData, CoefficientSet]:
    cfg = replace(cfg, **kw) if cfg is not None else SimConfig(Scenario.SINGLE, **kw)
    if cfg.scenario is not Scenario.SINGLE:
        raise ValueError("gen_single needs the single scenario")
    sim = simulate(cfg)
    return sim.train, sim.truth


def gen_multi1(cfg: SimConfig | None = None, **kw) -> tuple[DesignData, CoefficientSet]:
    cfg = replace(cfg, **kw) if cfg is not None else SimConfig(Scenario.MULTI1, **kw)
    if cfg.scenario is not Scenario.MULTI1:
        raise ValueError("gen_multi1 needs the multi1 scenario")
    sim = simulate(cfg)
    return sim.train, sim.truth


def gen_multi2(cfg: SimConfig | None = None, **kw) -> tuple[DesignData, CoefficientSet]:
    cfg = replace(cfg, **kw) if cfg is not None else SimConfig(Scenario.MULTI2, **kw)
    if cfg.scenario is not Scenario.MULTI2:
        raise ValueError("gen_multi2 needs the multi2 scenario")
    sim = simulate(cfg)
    return sim.train, sim.truth
