"""Command-line front end: presets, CSV emission, and run manifests.

A run executes one or more sweep jobs and writes, per job, one CSV per
mechanism (plus diagnostics CSVs when enabled) and a single manifest.json
capturing the resolved configuration, enough to reproduce the run exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import Params
from .engine import SweepConfig, SweepResult, sweep
from .primitives import gamma_star
from .protocols import m_outcome, plan_targets_s, s_outcome
from .assign import build_pool

CSV_COLUMNS = ("v", "p", "mechanism", "success_prob", "se", "welfare_mean",
               "welfare_se", "mean_subsidy", "mean_privacy_cost", "n_mc")


class ConfigError(ValueError):
    """Invalid flag combination or field value; exits with status 2."""


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def parse_grid(text: str, field: str) -> tuple[float, ...]:
    """Parse lo:hi:count with inclusive endpoints."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{field}: expected lo:hi:count, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"{field}: malformed number in {text!r}") from exc
    if count < 1 or hi <= lo:
        raise ConfigError(f"{field}: need hi > lo and count >= 1 in {text!r}")
    if count == 1:
        return (lo,)
    return tuple(np.linspace(lo, hi, count).tolist())


def parse_mechs(text: str) -> tuple[str, ...]:
    mechs = tuple(tok.strip().upper() for tok in text.split(",") if tok.strip())
    if not mechs:
        raise ConfigError("mech: no mechanisms given")
    return mechs


@dataclasses.dataclass(frozen=True)
class Job:
    label: str
    config: SweepConfig


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="threshold-mech",
        description="Monte Carlo sweeps of threshold data-contribution mechanisms",
    )
    ap.add_argument("--preset", choices=[
        "fig1", "fig2", "fig3", "robust-beta", "robust-noise",
        "diag-cost", "diag-pareto", "appc-example",
    ], help="experiment preset; individual flags override its fields")
    ap.add_argument("--grid-v", help="value grid as lo:hi:count (default 0:5:20)")
    ap.add_argument("--grid-p", help="subsidy grid as lo:hi:count (default 0:0.65:20)")
    ap.add_argument("--n", type=int, help="number of users (default 50)")
    ap.add_argument("--x", type=float, help="provision threshold (default 10.5)")
    ap.add_argument("--subsidy-max", type=float,
                    help="upper end of the default subsidy grid")
    ap.add_argument("--draws", type=int, help="Monte Carlo draws per cell (default 1000)")
    ap.add_argument("--dist", help="cost law, e.g. uniform:1,5 or beta:2,5:1,5")
    ap.add_argument("--b0", type=float, help="equilibrium-selection belief for C")
    ap.add_argument("--tau", type=float, help="cost-observation noise level")
    ap.add_argument("--pi", type=float, help="provider value share (default 1)")
    ap.add_argument("--enforce-provider-profit", action="store_true",
                    help="null assignments that fail the profitability screen")
    ap.add_argument("--mech", help="comma-separated mechanisms from C,S,M,L")
    ap.add_argument("--seed", type=int, help="master seed (default 0)")
    ap.add_argument("--out", help="output directory (required unless appc-example)")
    ap.add_argument("--threads", type=int,
                    help="worker threads (default: THRESHOLD_MECH_THREADS or 1)")
    ap.add_argument("--manifest", help="re-run a previously written manifest.json")
    return ap


_DEFAULTS = dict(
    v_grid=parse_grid("0:5:20", "grid-v"),
    p_grid=parse_grid("0:0.65:20", "grid-p"),
    n_mc=1_000,
    master_seed=0,
    dist_spec="uniform:1,5",
    n=50,
    x=10.5,
)


def _base_kwargs(args: argparse.Namespace) -> dict:
    kw = dict(_DEFAULTS)
    if args.grid_v:
        kw["v_grid"] = parse_grid(args.grid_v, "grid-v")
    if args.grid_p:
        kw["p_grid"] = parse_grid(args.grid_p, "grid-p")
    elif args.subsidy_max is not None:
        if args.subsidy_max <= 0:
            raise ConfigError("subsidy-max: must be > 0")
        kw["p_grid"] = parse_grid(f"0:{args.subsidy_max}:20", "grid-p")
    if args.draws is not None:
        if args.draws < 1:
            raise ConfigError("draws: must be >= 1")
        kw["n_mc"] = args.draws
    if args.dist:
        kw["dist_spec"] = args.dist
    if args.n is not None:
        kw["n"] = args.n
    if args.x is not None:
        kw["x"] = args.x
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.pi is not None:
        kw["pi"] = args.pi
    if args.enforce_provider_profit:
        kw["enforce_provider_profit"] = True
    return kw


def resolve_jobs(args: argparse.Namespace) -> list[Job]:
    """Expand the preset (or bare flags) into concrete sweep jobs."""
    kw = _base_kwargs(args)
    preset = args.preset

    def cfg(**over) -> SweepConfig:
        merged = dict(kw)
        merged.update(over)
        try:
            return SweepConfig(**merged)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    if preset == "fig1":
        levels = (args.b0,) if args.b0 is not None else (0.0, 0.15, 0.3)
        mechs = parse_mechs(args.mech) if args.mech else ("C",)
        return [Job(f"b0_{b:g}", cfg(mechanisms=mechs, b0=b)) for b in levels]
    if preset in ("fig2", "fig3"):
        mechs = parse_mechs(args.mech) if args.mech else ("C", "S", "M")
        b0 = args.b0 if args.b0 is not None else 0.15
        return [Job("", cfg(mechanisms=mechs, b0=b0,
                            tau=args.tau if args.tau is not None else 0.0))]
    if preset == "robust-beta":
        mechs = parse_mechs(args.mech) if args.mech else ("C", "S", "M")
        b0 = args.b0 if args.b0 is not None else 0.15
        return [
            Job("left_skew", cfg(mechanisms=mechs, b0=b0,
                                 dist_spec="beta:2,5:1,5")),
            Job("right_skew", cfg(mechanisms=mechs, b0=b0,
                                  dist_spec="beta:5,2:1,5")),
        ]
    if preset == "robust-noise":
        mechs = parse_mechs(args.mech) if args.mech else ("S", "M")
        levels = (args.tau,) if args.tau is not None else (0.0, 0.2, 0.5)
        return [Job(f"tau_{t:g}", cfg(mechanisms=mechs, tau=t)) for t in levels]
    if preset == "diag-cost":
        mechs = parse_mechs(args.mech) if args.mech else ("S", "M")
        return [Job("", cfg(mechanisms=mechs, diagnostics=True,
                            tau=args.tau if args.tau is not None else 0.0))]
    if preset == "diag-pareto":
        mechs = parse_mechs(args.mech) if args.mech else ("C", "M")
        b0 = args.b0 if args.b0 is not None else 0.15
        return [Job("", cfg(mechanisms=mechs, b0=b0, diagnostics=True))]
    # bare flags
    mechs = parse_mechs(args.mech) if args.mech else ("C", "S", "M")
    return [Job("", cfg(
        mechanisms=mechs,
        b0=args.b0 if args.b0 is not None else 0.0,
        tau=args.tau if args.tau is not None else 0.0,
    ))]


def write_mech_csv(path: Path, result: SweepResult, mech: str) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for cell in result.cells:
        st = cell.mech[mech]
        lines.append(",".join((
            _fmt(cell.v), _fmt(cell.p), mech,
            _fmt(st.success_prob), _fmt(st.se),
            _fmt(st.welfare_mean), _fmt(st.welfare_se),
            _fmt(st.mean_subsidy), _fmt(st.mean_privacy_cost),
            str(st.n_mc),
        )))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_diag_cost_csv(path: Path, result: SweepResult) -> None:
    cols = ("v", "p", "prob_s_multi", "prob_m_multi", "cost_gap",
            "n_common", "n_mc")
    lines = [",".join(cols)]
    for cell in result.cells:
        ce = cell.cost_efficiency
        if ce is None:
            continue
        gap = "" if ce.gap is None else _fmt(ce.gap)
        lines.append(",".join((
            _fmt(cell.v), _fmt(cell.p), _fmt(ce.prob_s_multi),
            _fmt(ce.prob_m_multi), gap, str(ce.n_common),
            str(result.config.n_mc),
        )))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_diag_pareto_csv(path: Path, result: SweepResult) -> None:
    cols = ("v", "p", "frac_no_worse", "mean_share_worse",
            "mean_compensation", "n_mc")
    lines = [",".join(cols)]
    for cell in result.cells:
        pr = cell.pareto
        if pr is None:
            continue
        lines.append(",".join((
            _fmt(cell.v), _fmt(cell.p), _fmt(pr.frac_no_worse),
            _fmt(pr.mean_share_worse), _fmt(pr.mean_compensation),
            str(result.config.n_mc),
        )))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_jobs(jobs: list[Job], out_dir: Path, threads: int | None,
             preset: str | None) -> Path:
    """Execute jobs, write CSVs plus the manifest; returns the manifest path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "tool": "threshold-mech",
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "preset": preset,
        "jobs": [],
    }
    for job in jobs:
        job_dir = out_dir / job.label if job.label else out_dir
        job_dir.mkdir(parents=True, exist_ok=True)
        result = sweep(job.config, threads=threads)
        outputs = []
        for mech in job.config.mechanisms:
            path = job_dir / f"{mech}.csv"
            write_mech_csv(path, result, mech)
            outputs.append(str(path.relative_to(out_dir)))
        if job.config.diagnostics:
            if {"S", "M"} <= set(job.config.mechanisms):
                path = job_dir / "diag_cost.csv"
                write_diag_cost_csv(path, result)
                outputs.append(str(path.relative_to(out_dir)))
            if {"C", "M"} <= set(job.config.mechanisms):
                path = job_dir / "diag_pareto.csv"
                write_diag_pareto_csv(path, result)
                outputs.append(str(path.relative_to(out_dir)))
        manifest["jobs"].append({
            "label": job.label,
            "config": dataclasses.asdict(job.config),
            "outputs": outputs,
        })
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return manifest_path


def jobs_from_manifest(path: Path) -> tuple[list[Job], str | None]:
    data = json.loads(path.read_text(encoding="utf-8"))
    jobs = []
    for entry in data["jobs"]:
        cfg_dict = dict(entry["config"])
        for key in ("v_grid", "p_grid", "mechanisms"):
            cfg_dict[key] = tuple(cfg_dict[key])
        jobs.append(Job(entry["label"], SweepConfig(**cfg_dict)))
    return jobs, data.get("preset")


def appc_example_report() -> str:
    """Worked two-backstopper instance: simultaneous fails, small-first succeeds."""
    params = Params(n=3, x=1.2005, v=3.5, p=0.05)
    costs = np.array([10.0, 40.0, 100.0])
    plan = build_pool(costs, params)
    targets = plan_targets_s(costs, params, plan)
    s_out = s_outcome(costs, params)
    m_out = m_outcome(costs, params)
    floors = plan.floors
    lines = [
        "Golden two-backstopper instance",
        f"  n={params.n}  X={params.x}  p={params.p}  V={params.v}  "
        f"costs={costs.tolist()}",
        f"  floors: {[round(f, 6) for f in floors.tolist()]}  "
        f"(sum {floors.sum():.6g})",
        f"  pool: indices {list(plan.pool)} (k={plan.pool_size}), "
        f"residual demand D_K = {plan.residual:.6g}",
        "",
        "Simultaneous (S):",
        f"  targets over pool: {[round(t, 6) for t in targets.tolist()]}",
    ]
    gammas = [gamma_star(costs[i], params.p, t)
              for i, t in zip(plan.pool, targets)]
    for i, g in zip(plan.pool, gammas):
        lines.append(f"    user {i} (c={costs[i]:g}): incremental cost "
                     f"{g:.6g}")
    binding = max(gammas)
    verdict = "fails (binding constraint exceeds V)" if not s_out.success \
        else "succeeds"
    lines += [
        f"  binding incremental cost {binding:.6g} vs V = {params.v:g} "
        f"-> S {verdict}",
        "",
        "Small-first (M):",
        f"  retentions: {[round(e, 6) for e in m_out.retentions.tolist()]}",
    ]
    for i in plan.pool:
        g = gamma_star(costs[i], params.p, m_out.retentions[i])
        lines.append(f"    user {i} (c={costs[i]:g}): retains "
                     f"{m_out.retentions[i]:.6g}, incremental cost {g:.6g}")
    lines.append(f"  aggregate {m_out.aggregate:.6g} vs X = {params.x:g} "
                 f"-> M {'succeeds' if m_out.success else 'fails'}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.preset == "appc-example":
            print(appc_example_report())
            return 0
        if args.manifest:
            jobs, preset = jobs_from_manifest(Path(args.manifest))
            out = Path(args.out) if args.out else Path(args.manifest).parent
        else:
            jobs = resolve_jobs(args)
            preset = args.preset
            if not args.out:
                raise ConfigError("out: an output directory is required")
            out = Path(args.out)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cannot load manifest: {exc}", file=sys.stderr)
        return 1
    try:
        manifest_path = run_jobs(jobs, out, args.threads, preset)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
