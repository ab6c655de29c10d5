"""Deterministic Monte Carlo sweeps over the (V, p) grid.

Seeding contract: draw r of cell (v_idx, p_idx) uses the stream derived from
SeedSequence(master_seed, spawn_key=(v_idx, p_idx, 0, r)); the auxiliary
stream for the cutoff search of that cell uses spawn_key (v_idx, p_idx, 1).
Any draw is therefore reproducible in isolation, and results are identical
for any worker count or scheduling order.  All requested mechanisms are
evaluated on the same cost draws, so mechanism comparisons are paired.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .core import Params
from .dist import CostDistribution
from .mech_c import CutoffSolution, select_cutoff

MECHANISMS = ("C", "S", "M", "L")

_PROTO_CODES = {"S": _kernels.PROTO_S, "M": _kernels.PROTO_M, "L": _kernels.PROTO_L}
_DOMAIN_DRAW = 0
_DOMAIN_AUX = 1
_EMPTY_2D = np.empty((0, 0))


@dataclass(frozen=True)
class SweepConfig:
    """Full description of one sweep; sufficient to reproduce it exactly."""

    v_grid: tuple[float, ...]
    p_grid: tuple[float, ...]
    n_mc: int = 1_000
    master_seed: int = 0
    dist_spec: str = "uniform:1,5"
    n: int = 50
    x: float = 10.5
    b0: float = 0.0
    tau: float = 0.0
    mechanisms: tuple[str, ...] = ("C", "S", "M")
    pi: float = 1.0
    enforce_provider_profit: bool = False
    cutoff_grid: int = 40
    cutoff_mode: str = "closed_form"
    b_mc: int = 10_000
    diagnostics: bool = False
    record_contributions: bool = False
    min_common: int = 30

    def __post_init__(self) -> None:
        object.__setattr__(self, "v_grid", tuple(float(v) for v in self.v_grid))
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "mechanisms",
                           tuple(str(m) for m in self.mechanisms))
        for name, grid in (("v_grid", self.v_grid), ("p_grid", self.p_grid)):
            if len(grid) == 0:
                raise ValueError(f"{name} must be non-empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if self.n_mc < 1:
            raise ValueError(f"n_mc must be >= 1, got {self.n_mc}")
        if self.tau < 0.0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        unknown = set(self.mechanisms) - set(MECHANISMS)
        if unknown:
            raise ValueError(f"unknown mechanisms {sorted(unknown)}")
        if len(set(self.mechanisms)) != len(self.mechanisms):
            raise ValueError("duplicate mechanisms requested")
        # Validate the game constants and the distribution spec eagerly.
        Params(n=self.n, x=self.x, v=self.v_grid[-1], p=self.p_grid[-1],
               pi=self.pi,
               enforce_provider_profit=self.enforce_provider_profit)
        CostDistribution.from_spec(self.dist_spec)

    def dist(self) -> CostDistribution:
        return CostDistribution.from_spec(self.dist_spec)

    def params_at(self, v: float, p: float) -> Params:
        return Params(n=self.n, x=self.x, v=v, p=p, pi=self.pi,
                      enforce_provider_profit=self.enforce_provider_profit)


@dataclass(frozen=True)
class MechCellStats:
    """Estimators for one mechanism at one grid point."""

    mechanism: str
    success_prob: float
    se: float
    ci95_half: float
    welfare_mean: float
    welfare_se: float
    mean_subsidy: float
    mean_privacy_cost: float
    n_mc: int
    fail_with_contrib: int
    pool_hist: tuple[int, ...]  # bucket j counts pool size j-1 (j=0 is "no pool")


@dataclass(frozen=True)
class PairedDiff:
    """Paired comparison of two mechanisms on identical draws."""

    pair: tuple[str, str]
    success_diff: float
    success_se: float
    welfare_diff: float
    welfare_se: float
    n_first_only: int
    n_second_only: int


@dataclass(frozen=True)
class MaskedCostEfficiency:
    """Multi-backstopper success probabilities and the conditional cost gap."""

    prob_s_multi: float
    prob_m_multi: float
    gap: float | None
    n_common: int


@dataclass(frozen=True)
class ParetoDiagnostics:
    """Pointwise payoff comparison of two mechanisms on shared draws."""

    frac_no_worse: float
    mean_share_worse: float
    mean_compensation: float


@dataclass
class DrawRecords:
    """Per-draw arrays retained when diagnostics are enabled."""

    success: dict[str, np.ndarray] = field(default_factory=dict)
    welfare: dict[str, np.ndarray] = field(default_factory=dict)
    subsidy: dict[str, np.ndarray] = field(default_factory=dict)
    privacy: dict[str, np.ndarray] = field(default_factory=dict)
    pool_size: np.ndarray | None = None
    contributions: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class CellStats:
    v_idx: int
    p_idx: int
    v: float
    p: float
    mech: dict[str, MechCellStats]
    paired: dict[tuple[str, str], PairedDiff]
    cost_efficiency: MaskedCostEfficiency | None = None
    pareto: ParetoDiagnostics | None = None
    records: DrawRecords | None = None


def apply_noise(costs_true: np.ndarray, tau: float,
                rng: np.random.Generator) -> np.ndarray:
    """Lognormal observation noise: c_hat = c * exp(eta), eta ~ N(0, tau^2)."""
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    c = np.asarray(costs_true, dtype=np.float64)
    if tau == 0.0:
        return c
    return c * np.exp(tau * rng.standard_normal(c.shape))


def draw_rng(master_seed: int, v_idx: int, p_idx: int,
             r: int) -> np.random.Generator:
    """The stream owning draw r of cell (v_idx, p_idx)."""
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(v_idx, p_idx, _DOMAIN_DRAW, r))
    return np.random.default_rng(ss)


def aux_rng(master_seed: int, v_idx: int, p_idx: int) -> np.random.Generator:
    """The auxiliary stream of a cell (cutoff-search Monte Carlo mode)."""
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(v_idx, p_idx, _DOMAIN_AUX))
    return np.random.default_rng(ss)


def cell_cost_draws(cfg: SweepConfig, v_idx: int,
                    p_idx: int) -> tuple[np.ndarray, np.ndarray | None]:
    """All cost draws of one cell, plus noisy observations when tau > 0."""
    dist = cfg.dist()
    u = np.empty((cfg.n_mc, cfg.n))
    z = np.empty((cfg.n_mc, cfg.n)) if cfg.tau > 0.0 else None
    for r in range(cfg.n_mc):
        rng = draw_rng(cfg.master_seed, v_idx, p_idx, r)
        u[r] = rng.random(cfg.n)
        if z is not None:
            z[r] = rng.standard_normal(cfg.n)
    costs = dist.transform_uniforms(u)
    obs = costs * np.exp(cfg.tau * z) if z is not None else None
    return costs, obs


def _bernoulli_se(prob: float, n: int) -> float:
    return float(np.sqrt(prob * (1.0 - prob) / n))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(x))
    if x.size < 2:
        return m, 0.0
    return m, float(np.std(x, ddof=1) / np.sqrt(x.size))


def masked_cost_efficiency(success_s: np.ndarray, success_m: np.ndarray,
                           pool_size: np.ndarray, privacy_s: np.ndarray,
                           privacy_m: np.ndarray,
                           min_common: int = 30) -> MaskedCostEfficiency:
    """Multi-backstopper success rates and the privacy-cost gap on the
    common-success set; the gap is undefined below ``min_common`` samples."""
    multi = pool_size >= 2
    prob_s = float(np.mean((success_s == 1) & multi))
    prob_m = float(np.mean((success_m == 1) & multi))
    common = (success_s == 1) & (success_m == 1)
    n_common = int(np.count_nonzero(common))
    if n_common < min_common:
        return MaskedCostEfficiency(prob_s, prob_m, None, n_common)
    gap = float(np.mean(privacy_m[common] - privacy_s[common]))
    return MaskedCostEfficiency(prob_s, prob_m, gap, n_common)


def pareto_diagnostics(payoffs_base: np.ndarray,
                       payoffs_alt: np.ndarray) -> ParetoDiagnostics:
    """Compare per-user payoffs of an alternative mechanism against a base.

    Reports the fraction of draws where no user is worse off under the
    alternative, the average share of worse-off users, and the average
    per-user compensation closing every individual loss.
    """
    if payoffs_base.shape != payoffs_alt.shape or payoffs_base.ndim != 2:
        raise ValueError("payoff matrices must share a (n_draws, n) shape")
    loss = payoffs_base - payoffs_alt
    worse = loss > 0.0
    frac_no_worse = float(np.mean(~np.any(worse, axis=1)))
    mean_share_worse = float(np.mean(np.mean(worse, axis=1)))
    mean_compensation = float(np.mean(np.mean(np.maximum(loss, 0.0), axis=1)))
    return ParetoDiagnostics(frac_no_worse, mean_share_worse, mean_compensation)


def _pool_hist(ks: np.ndarray, n: int) -> tuple[int, ...]:
    hist = np.zeros(n + 2, dtype=np.int64)
    np.add.at(hist, ks + 1, 1)
    return tuple(int(h) for h in hist)


def run_cell(cfg: SweepConfig, v_idx: int, p_idx: int) -> CellStats:
    """Evaluate every requested mechanism on the shared draws of one cell."""
    v = cfg.v_grid[v_idx]
    p = cfg.p_grid[p_idx]
    params = cfg.params_at(v, p)
    dist = cfg.dist()
    costs, obs = cell_cost_draws(cfg, v_idx, p_idx)
    n_mc = cfg.n_mc

    keep_payoffs = cfg.diagnostics and {"C", "M"} <= set(cfg.mechanisms)
    record = cfg.diagnostics

    mech_stats: dict[str, MechCellStats] = {}
    success: dict[str, np.ndarray] = {}
    welfare: dict[str, np.ndarray] = {}
    subs_arr: dict[str, np.ndarray] = {}
    priv_arr: dict[str, np.ndarray] = {}
    payoffs: dict[str, np.ndarray] = {}
    contribs: dict[str, np.ndarray] = {}
    pool_size: np.ndarray | None = None

    for mech in (m for m in MECHANISMS if m in cfg.mechanisms):
        succ = np.zeros(n_mc, dtype=np.uint8)
        welf = np.zeros(n_mc)
        subs = np.zeros(n_mc)
        priv = np.zeros(n_mc)
        failc = np.zeros(n_mc, dtype=np.uint8)
        e_rec = np.empty((n_mc, cfg.n)) if cfg.record_contributions else _EMPTY_2D
        pay = np.empty((n_mc, cfg.n)) if (keep_payoffs and mech in ("C", "M")) \
            else _EMPTY_2D
        ks = np.full(n_mc, -1, dtype=np.int64)
        if mech == "C":
            cutoff = select_cutoff(
                params, dist, cfg.b0, grid=cfg.cutoff_grid,
                mode=cfg.cutoff_mode, b_mc=cfg.b_mc,
                rng=aux_rng(cfg.master_seed, v_idx, p_idx),
            )
            has = cutoff is not None
            _kernels._eval_cell_c(
                costs, cfg.x, p, v,
                cutoff.a_star if has else 0.0,
                cutoff.g_tilde if has else 0.0,
                has, succ, welf, subs, priv, failc, e_rec, pay,
            )
            ks[:] = 0
        else:
            noisy = cfg.tau > 0.0
            _kernels._eval_cell_withdrawal(
                costs, obs if noisy else costs, cfg.x, p, v, cfg.pi,
                cfg.enforce_provider_profit, _PROTO_CODES[mech], noisy,
                succ, ks, welf, subs, priv, failc, e_rec, pay,
            )
            if pool_size is None:
                pool_size = ks
        prob = float(np.mean(succ))
        se = _bernoulli_se(prob, n_mc)
        wmean, wse = _mean_se(welf)
        mech_stats[mech] = MechCellStats(
            mechanism=mech,
            success_prob=prob,
            se=se,
            ci95_half=1.96 * se,
            welfare_mean=wmean,
            welfare_se=wse,
            mean_subsidy=float(np.mean(subs)),
            mean_privacy_cost=float(np.mean(priv)),
            n_mc=n_mc,
            fail_with_contrib=int(np.sum(failc)),
            pool_hist=_pool_hist(ks, cfg.n),
        )
        success[mech] = succ
        welfare[mech] = welf
        subs_arr[mech] = subs
        priv_arr[mech] = priv
        if pay.size:
            payoffs[mech] = pay
        if e_rec.size:
            contribs[mech] = e_rec

    paired: dict[tuple[str, str], PairedDiff] = {}
    requested = [m for m in MECHANISMS if m in cfg.mechanisms]
    for i, a in enumerate(requested):
        for b in requested[i + 1:]:
            d = success[a].astype(np.float64) - success[b].astype(np.float64)
            dm, dse = _mean_se(d)
            wd = welfare[a] - welfare[b]
            wdm, wdse = _mean_se(wd)
            paired[(a, b)] = PairedDiff(
                pair=(a, b), success_diff=dm, success_se=dse,
                welfare_diff=wdm, welfare_se=wdse,
                n_first_only=int(np.sum((success[a] == 1) & (success[b] == 0))),
                n_second_only=int(np.sum((success[b] == 1) & (success[a] == 0))),
            )

    cost_eff = None
    pareto = None
    if cfg.diagnostics and {"S", "M"} <= set(cfg.mechanisms) \
            and pool_size is not None:
        cost_eff = masked_cost_efficiency(
            success["S"], success["M"], pool_size,
            priv_arr["S"], priv_arr["M"], cfg.min_common,
        )
    if keep_payoffs:
        pareto = pareto_diagnostics(payoffs["C"], payoffs["M"])

    records = None
    if record:
        records = DrawRecords(
            success=success, welfare=welfare, subsidy=subs_arr,
            privacy=priv_arr, pool_size=pool_size, contributions=contribs,
        )
    return CellStats(v_idx=v_idx, p_idx=p_idx, v=v, p=p, mech=mech_stats,
                     paired=paired, cost_efficiency=cost_eff, pareto=pareto,
                     records=records)


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list[CellStats]  # row-major: v outer, p inner

    def cell(self, v_idx: int, p_idx: int) -> CellStats:
        return self.cells[v_idx * len(self.config.p_grid) + p_idx]

    def surface(self, mech: str, attr: str = "success_prob") -> np.ndarray:
        """(len(v_grid), len(p_grid)) array of one per-mechanism statistic."""
        nv, npp = len(self.config.v_grid), len(self.config.p_grid)
        out = np.empty((nv, npp))
        for c in self.cells:
            out[c.v_idx, c.p_idx] = getattr(c.mech[mech], attr)
        return out


def default_threads() -> int:
    env = os.environ.get("THRESHOLD_MECH_THREADS", "").strip()
    if env:
        t = int(env)
        if t < 1:
            raise ValueError(f"THRESHOLD_MECH_THREADS must be >= 1, got {t}")
        return t
    return 1


def sweep(cfg: SweepConfig, threads: int | None = None) -> SweepResult:
    """Evaluate every cell of the grid; cells are independent and the merge
    order is canonical, so the result does not depend on the worker count."""
    if threads is None:
        threads = default_threads()
    indices = [(vi, pi) for vi in range(len(cfg.v_grid))
               for pi in range(len(cfg.p_grid))]
    if threads <= 1:
        cells = [run_cell(cfg, vi, pi) for vi, pi in indices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(lambda ix: run_cell(cfg, ix[0], ix[1]),
                                  indices))
    return SweepResult(config=cfg, cells=cells)
