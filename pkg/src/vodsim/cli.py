"""Command-line front end: experiment sweeps, formula evaluation, oracle
validation suites, and placement table export.

Exit codes: 0 success, 1 validation/sweep failure, 2 usage or config error.
"""

from __future__ import annotations

import csv
import datetime
import itertools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from .analysis import (erlang_b, large_catalogue_loss_floor, optimal_loss,
                       solve_water_filling)
from .core import (ConfigError, FixedCatalogue, Repacking, SystemConfig,
                   config_from_mapping, config_to_mapping, load_config,
                   zipf_popularity)
from .engine import effective_config, make_placement, repetition_rng, run_experiment
from .validation import (ctmc_report, hall_equivalence_report,
                         product_form_report, water_filling_lp_report)
from . import plotting

OPTIMAL_NAMES = ("OPT", "OPTIMAL")
_SWEEPABLE = ("strategy", "load", "zipf_alpha", "box_count", "storage_per_box",
              "uplink_slots", "content_count", "t_r_max", "counter_fanout", "horizon")

CSV_COLUMNS = ("strategy", "box_count", "catalogue", "storage_per_box",
               "uplink_slots", "load", "zipf_alpha", "t_r_max", "seed",
               "metric", "mean", "stdev")


# --------------------------------------------------------------------------
# experiment plans
# --------------------------------------------------------------------------

@dataclass
class ExperimentPlan:
    """A base scenario plus sweep axes whose cross product is executed."""

    name: str
    base: dict
    sweep: dict[str, list]
    axis: str | None = None
    repetitions: int | None = None
    base_seed: int | None = None
    per_content: bool = False
    output_format: str = "csv"

    @classmethod
    def from_mapping(cls, mapping: dict, name: str = "plan") -> "ExperimentPlan":
        if not isinstance(mapping, dict):
            raise ConfigError("plan: top level must be an object")
        allowed = {"name", "base", "sweep", "axis", "repetitions", "base_seed",
                   "per_content", "format"}
        unknown = set(mapping) - allowed
        if unknown:
            raise ConfigError(f"plan: unknown fields {sorted(unknown)}")
        base = mapping.get("base")
        if not isinstance(base, dict):
            raise ConfigError("plan.base: required and must be an object")
        sweep = mapping.get("sweep", {})
        if not isinstance(sweep, dict):
            raise ConfigError("plan.sweep: must be an object of key -> list")
        for key, values in sweep.items():
            if key not in _SWEEPABLE:
                raise ConfigError(f"plan.sweep.{key}: not a sweepable key "
                                  f"(allowed: {list(_SWEEPABLE)})")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"plan.sweep.{key}: must be a non-empty list")
        fmt = str(mapping.get("format", "csv")).lower()
        if fmt not in ("csv", "json"):
            raise ConfigError("plan.format: must be 'csv' or 'json'")
        plan = cls(
            name=str(mapping.get("name", name)),
            base=dict(base),
            sweep={k: list(v) for k, v in sweep.items()},
            axis=mapping.get("axis"),
            repetitions=mapping.get("repetitions"),
            base_seed=mapping.get("base_seed"),
            per_content=bool(mapping.get("per_content", False)),
            output_format=fmt,
        )
        plan.points()  # every sweep point must yield a valid config
        return plan

    def scaled(self, factor: float) -> "ExperimentPlan":
        """Shrink the box population (and box_count sweep values) by ``factor``."""
        if factor == 1.0:
            return self
        base = dict(self.base)
        if "box_count" in base:
            base["box_count"] = max(1, round(float(base["box_count"]) * factor))
        sweep = {k: list(v) for k, v in self.sweep.items()}
        if "box_count" in sweep:
            sweep["box_count"] = [max(1, round(float(v) * factor)) for v in sweep["box_count"]]
        return ExperimentPlan(self.name, base, sweep, self.axis, self.repetitions,
                              self.base_seed, self.per_content, self.output_format)

    def points(self) -> list[tuple[str, dict, SystemConfig]]:
        """(strategy, overrides, config) per sweep point, in declaration order."""
        sweep = dict(self.sweep)
        strategies = [str(s) for s in sweep.pop("strategy", ["SAMP"])]
        keys = list(sweep)
        out = []
        for strategy in strategies:
            for combo in itertools.product(*(sweep[k] for k in keys)) if keys else [()]:
                overrides = dict(zip(keys, combo))
                mapping = {**self.base, **overrides}
                if self.repetitions is not None:
                    mapping["repetitions"] = self.repetitions
                if self.base_seed is not None:
                    mapping["rng_seed"] = self.base_seed
                try:
                    config = config_from_mapping(mapping)
                except ConfigError as exc:
                    raise ConfigError(
                        f"plan point strategy={strategy} {overrides}: {exc}") from exc
                out.append((strategy.upper(), overrides, config))
        return out


def paper_defaults(**overrides) -> dict:
    base = {
        "box_count": 4000, "storage_per_box": 10, "uplink_slots": 4,
        "load": 1.0, "catalogue": "fixed", "content_count": 500,
        "zipf_alpha": 0.8, "repetitions": 10, "horizon": 10.0,
        "warmup_fraction": 0.2, "rng_seed": 1,
    }
    base.update(overrides)
    return base


def builtin_recipe(name: str) -> ExperimentPlan:
    """Named experiment plans reproducing the reference sweeps."""
    key = name.lower()
    if key == "fig2":
        m = {"base": paper_defaults(),
             "sweep": {"strategy": ["UNIF", "SAMP", "CU", "OPT"],
                       "load": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]},
             "axis": "load"}
    elif key == "fig3":
        m = {"base": paper_defaults(load=1.0),
             "sweep": {"strategy": ["UNIF", "SAMP", "CU", "OPT"],
                       "zipf_alpha": [0.2, 0.5, 0.8, 1.1]},
             "axis": "zipf_alpha"}
    elif key == "fig4":
        m = {"base": paper_defaults(),
             "sweep": {"strategy": ["SAMP", "CU"],
                       "t_r_max": [0, 1, "unlimited"],
                       "load": [0.5, 1.0, 1.5, 2.0]},
             "axis": "load"}
    elif key == "fig5":
        m = {"base": paper_defaults(load=1.0),
             "sweep": {"strategy": ["UNIF", "SAMP", "CU", "OPT"],
                       "box_count": [1000, 2000, 4000, 8000]},
             "axis": "box_count"}
    elif key == "fig6":
        m = {"base": paper_defaults(load=1.0),
             "sweep": {"strategy": ["SAMP"], "box_count": [4000, 8000]},
             "axis": "box_count", "per_content": True}
    else:
        raise ConfigError(f"unknown recipe {name!r}; built-ins: fig2..fig6")
    return ExperimentPlan.from_mapping(m, name=key)


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------

@click.group()
def main():
    """Loss-network simulator and placement optimization toolkit."""


def _row_base(strategy: str, config: SystemConfig, overrides: dict, seed,
              base: dict | None = None) -> dict:
    if isinstance(config.catalogue, FixedCatalogue):
        catalogue = str(config.catalogue.content_count)
    else:
        catalogue = "|".join(f"{k.size_factor:g}:{k.per_content_rate:g}"
                             for k in config.catalogue.classes)
    if isinstance(config.acceptance_policy, Repacking):
        mi = config.acceptance_policy.max_iterations
        t_r = "unlimited" if mi is None else mi
    else:
        t_r = ""
    alpha = overrides.get("zipf_alpha", (base or {}).get("zipf_alpha", ""))
    return {
        "strategy": strategy, "box_count": config.box_count,
        "catalogue": catalogue, "storage_per_box": config.storage_per_box,
        "uplink_slots": config.uplink_slots, "load": config.load,
        "zipf_alpha": alpha, "t_r_max": t_r, "seed": seed,
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _execute_plan(plan: ExperimentPlan, out_dir: Path, jobs: int, fmt: str,
                  figures: bool) -> None:
    points = plan.points()
    reps = plan.repetitions if plan.repetitions is not None else None
    shown_reps = reps if reps is not None else (points[0][2].repetitions if points else 0)
    click.echo(f"plan {plan.name}: {len(points)} sweep points x {shown_reps} repetitions")
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    summary_points: list[dict] = []
    results_path = out_dir / ("results.csv" if fmt == "csv" else "results.json")
    csv_file = csv_writer = None
    if fmt == "csv":
        csv_file = open(results_path, "w", newline="", encoding="utf-8")
        csv_writer = csv.DictWriter(csv_file, fieldnames=CSV_COLUMNS)
        csv_writer.writeheader()
        csv_file.flush()

    def emit(row: dict) -> None:
        rows.append(row)
        if csv_writer is not None:
            csv_writer.writerow({k: _fmt(v) for k, v in row.items()})
            csv_file.flush()

    try:
        for strategy, overrides, config in points:
            seed = config.rng_seed
            base_row = _row_base(strategy, config, overrides, seed, plan.base)
            if strategy in OPTIMAL_NAMES:
                emit({**base_row, "metric": "system_loss",
                      "mean": optimal_loss(config.load), "stdev": 0.0})
                summary_points.append({"strategy": strategy,
                                       "config": config_to_mapping(config),
                                       "stats": {"system_loss": [optimal_loss(config.load), 0.0]}})
                continue
            result = run_experiment(config, strategy, repetitions=reps, jobs=jobs)
            for metric, (mean, stdev) in result.stats.items():
                emit({**base_row, "metric": metric, "mean": mean, "stdev": stdev})
            if plan.per_content:
                for rank, loss in enumerate(result.mean_per_content_loss, start=1):
                    emit({**base_row, "metric": f"content_loss_{rank:04d}",
                          "mean": float(loss), "stdev": 0.0})
            summary_points.append({"strategy": strategy,
                                   "config": config_to_mapping(config),
                                   "stats": {k: list(v) for k, v in result.stats.items()}})
    except Exception as exc:
        if csv_file is not None:
            csv_file.close()
        click.echo(f"sweep aborted: {exc}; completed rows kept in {results_path}", err=True)
        sys.exit(1)

    if csv_file is not None:
        csv_file.close()
    else:
        results_path.write_text(
            json.dumps([{k: row.get(k, "") for k in CSV_COLUMNS} for row in rows], indent=1),
            encoding="utf-8")

    summary = {
        "created_at": datetime.datetime.now().isoformat(),  # only timestamp in outputs
        "plan": {"name": plan.name, "base": plan.base, "sweep": plan.sweep,
                 "axis": plan.axis, "repetitions": plan.repetitions,
                 "base_seed": plan.base_seed, "per_content": plan.per_content},
        "notes": {"class_size_rounding": "ceil"},
        "points": summary_points,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")

    if figures:
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        written = []
        if plan.axis:
            for metric in ("system_loss",):
                target = fig_dir / f"{plan.name}_{metric}.png"
                if plotting.render_metric_sweep(rows, plan.axis, metric, target):
                    written.append(target)
        if plan.per_content:
            target = fig_dir / f"{plan.name}_per_content.png"
            if plotting.render_per_content(rows, target):
                written.append(target)
        for path in written:
            click.echo(f"figure {path}")
    click.echo(f"results {results_path}")


@main.command()
@click.argument("plan_src")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory (default: ./<plan name>_results)")
@click.option("--seed", type=int, default=None, help="Override the base seed.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent repetitions per sweep point.")
@click.option("--scale", type=float, default=1.0, show_default=True,
              help="Multiply box counts (quick runs of the built-in recipes).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
              help="Result file format (default: plan's, csv otherwise).")
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render PNG figures next to the results.")
def simulate(plan_src, out_dir, seed, jobs, scale, fmt, figures):
    """Run the experiment plan PLAN_SRC (a JSON file or a recipe name fig2..fig6)."""
    try:
        path = Path(plan_src)
        if path.exists():
            try:
                mapping = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"plan {path}: invalid JSON at line {exc.lineno}, "
                                  f"column {exc.colno}: {exc.msg}") from exc
            plan = ExperimentPlan.from_mapping(mapping, name=path.stem)
        else:
            plan = builtin_recipe(plan_src)
        plan = plan.scaled(scale)
        if seed is not None:
            plan = ExperimentPlan(plan.name, plan.base, plan.sweep, plan.axis,
                                  plan.repetitions, seed, plan.per_content,
                                  plan.output_format)
            plan.points()
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    out = out_dir if out_dir is not None else Path(f"{plan.name}_results")
    _execute_plan(plan, out, jobs, fmt or plan.output_format, figures)


@main.group()
def analyze():
    """Evaluate the closed-form results."""


@analyze.command()
@click.option("--rate", type=float, required=True, help="Offered load.")
@click.option("--capacity", type=int, required=True, help="Number of unit servers.")
def erlang(rate, capacity):
    """Erlang B blocking probability."""
    try:
        click.echo(_fmt(erlang_b(rate, capacity)))
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


@analyze.command()
@click.option("--load", type=float, required=True)
def optimum(load):
    """Asymptotically optimal loss fraction (1 - 1/load)^+."""
    try:
        click.echo(_fmt(optimal_loss(load)))
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


@analyze.command()
@click.option("--load", type=float, required=True, help="System load.")
@click.option("--storage", type=int, required=True, help="Contents per box (M).")
@click.option("--popularity", default=None,
              help="Comma-separated popularity weights (normalized internally).")
@click.option("--contents", type=int, default=None, help="Catalogue size for zipf.")
@click.option("--zipf-alpha", type=float, default=0.8, show_default=True)
def waterfill(load, storage, popularity, contents, zipf_alpha):
    """Hot-warm-cold water-filling solution table."""
    try:
        if popularity is not None:
            pop = np.array([float(tok) for tok in popularity.split(",") if tok.strip()])
            pop = pop / pop.sum()
        elif contents is not None:
            pop = zipf_popularity(contents, zipf_alpha)
        else:
            raise ConfigError("give either --popularity or --contents")
        wf = solve_water_filling(pop, load, storage)
    except (ConfigError, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo("rank popularity cache_fraction bandwidth_share served_load")
    for i in range(len(pop)):
        click.echo(f"{i + 1} {_fmt(float(pop[i]))} {_fmt(float(wf.cache_fraction[i]))} "
                   f"{_fmt(float(wf.bandwidth_share[i]))} {_fmt(float(wf.served_load[i]))}")
    click.echo(f"threshold_rank {wf.threshold_rank}")
    click.echo(f"hot_count {wf.hot_count}")
    click.echo(f"absorbed_load {_fmt(wf.absorbed_load)}")
    click.echo(f"absorbed_fraction {_fmt(wf.absorbed_fraction)}")


@analyze.command()
@click.option("--storage", type=int, required=True, help="Contents per box (M).")
@click.option("--total-size-factor", type=float, required=True,
              help="Sum of class size factors (catalogue size / B).")
@click.option("--min-rate", type=float, required=True, help="Smallest class rate.")
@click.option("--uplinks", type=int, required=True)
def floor(storage, total_size_factor, min_rate, uplinks):
    """Large-catalogue lower bound on the overall rejection probability."""
    try:
        click.echo(_fmt(large_catalogue_loss_floor(storage, total_size_factor,
                                                   min_rate, uplinks)))
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


_VALIDATE_SUITES = {
    "hall": lambda seed: hall_equivalence_report(seed=seed),
    "ctmc": lambda seed: ctmc_report(),
    "product-form": lambda seed: product_form_report(seed=seed),
    "lp": lambda seed: water_filling_lp_report(seed=seed),
}


@main.command()
@click.argument("suite", type=click.Choice(sorted(_VALIDATE_SUITES)))
@click.option("--seed", type=int, default=0, show_default=True)
def validate(suite, seed):
    """Run an oracle cross-check suite; nonzero exit on any failed check."""
    report = _VALIDATE_SUITES[suite](seed)
    status = "PASS" if report["passed"] else "FAIL"
    detail = ", ".join(f"{k}={v}" for k, v in report.items()
                       if k not in ("passed", "examples"))
    click.echo(f"{status}: {suite} ({detail})")
    if not report["passed"]:
        for example in report.get("examples", []):
            click.echo(f"  mismatch: {example}", err=True)
        sys.exit(1)


@main.command("placement")
@click.argument("strategy")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Scenario file (flat key = value format).")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Write the table here instead of stdout.")
def placement_cmd(strategy, config_path, seed, out_path):
    """Emit a placement as a text table (one line per box)."""
    try:
        config = load_config(config_path)
        cfg = effective_config(config, strategy)
        rng = repetition_rng(seed if seed is not None else config.rng_seed, 0)
        table = make_placement(cfg, strategy, rng).to_table()
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    if out_path is not None:
        Path(out_path).write_text(table, encoding="utf-8")
        click.echo(f"placement {out_path}")
    else:
        click.echo(table, nl=False)


if __name__ == "__main__":
    main()
