"""Command-line front end.

    fedcausal simulate --preset fig3 --out results/
    fedcausal analyze  --config my.toml
    fedcausal compare  --preset fig3 --replicas 200
    fedcausal sweep    --preset fig4 --param p_m --values 0.2,0.6,1.0
    fedcausal preset list

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
3 a comparison failed its tolerance.
"""
from __future__ import annotations

import argparse
import hashlib
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    impact_report,
    intervention_log_ratio,
    lambda_inf,
    misinformation_threshold,
    predict,
    scenario_informativeness,
)
from .config import ConfigError, ExperimentConfig, list_presets, load_config, load_preset, preset_text
from .errors import InformativenessUnavailableError, UsageError
from .harness import compare_to_theory, find_crossing, random_oracle_checks, run_ensemble, sweep
from .oracle import asymmetric_intervened_steady_state, symmetric_steady_state
from .protocol import Mode
from .reporting import (
    atomic_write,
    comparison_payload,
    impact_csv,
    summary_json,
    sweep_csv,
    timeseries_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_COMPARE = 0, 1, 2, 3
ORACLE_TOLERANCE = 1e-10


def _resolve(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        raise UsageError("one of --config or --preset is required")
    changes = {}
    if args.out is not None:
        changes["output_dir"] = Path(args.out)
    elif args.preset:
        changes["output_dir"] = Path("results") / args.preset
    if args.replicas is not None:
        changes["replicas"] = args.replicas
    if args.parallelism is not None:
        changes["parallelism"] = args.parallelism
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.seed is not None:
        changes["master_seed"] = args.seed
    for name in ("replicas", "parallelism"):
        if changes.get(name, 1) < 1:
            raise UsageError(f"--{name} must be at least 1")
    if changes.get("horizon", 0) < 0:
        raise UsageError("--horizon must be non-negative")
    for note in cfg.warnings:
        print(f"warning: {note}", file=sys.stderr)
    return dataclasses.replace(cfg, **changes)


def _commit(cfg: ExperimentConfig, files: dict) -> None:
    """Write every output only after all results exist, so a failure
    part-way through a run leaves nothing behind."""
    for name, text in files.items():
        path = atomic_write(cfg.output_dir / name, text)
        print(f"wrote {path}")


def _run_fingerprint(cfg: ExperimentConfig) -> str:
    parts = [cfg.scenario(m).fingerprint() for m in cfg.modes]
    blob = "|".join(parts + [str(cfg.master_seed), str(cfg.horizon), str(cfg.replicas)])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cmd_simulate(cfg: ExperimentConfig) -> int:
    files, modes = {}, {}
    for mode in cfg.modes:
        res = run_ensemble(cfg.scenario(mode), cfg.horizon, cfg.replicas, cfg.master_seed, cfg.parallelism)
        files[f"timeseries_{mode.value}.csv"] = timeseries_csv(res)
        entry = {"fingerprint": res.fingerprint, "scenario_fingerprint": res.scenario_fingerprint}
        if cfg.horizon:
            entry["terminal_lbr"] = res.terminal_lbr
            entry["terminal_lbr_se"] = res.terminal_lbr_se
            entry["terminal_belief_true"] = float(np.mean(res.tail_belief_true))
        modes[mode.value] = entry
    files["simulate.json"] = summary_json(
        {
            "command": "simulate",
            "seed": cfg.master_seed,
            "replicas": cfg.replicas,
            "horizon": cfg.horizon,
            "hypotheses": [str(x) for x in cfg.space.labels],
            "modes": modes,
        },
        _run_fingerprint(cfg),
    )
    _commit(cfg, files)
    return EXIT_OK


def _ranking_beliefs(cfg: ExperimentConfig) -> dict:
    if cfg.intervention is None:
        return {}
    return {k: cfg.intervention.fixed_belief for k in range(len(cfg.agents))}


def cmd_analyze(cfg: ExperimentConfig) -> int:
    base = cfg.scenario(cfg.modes[0])
    try:
        d = scenario_informativeness(base)
    except InformativenessUnavailableError as exc:
        raise UsageError(
            f"analyze needs generative models for every agent; {exc}. "
            "Use simulate or sweep for stream-source scenarios."
        ) from None
    beliefs = _ranking_beliefs(cfg)
    p = np.array([a.participation_prob for a in cfg.agents])
    reports = [impact_report(mode, base.weights, p, d, beliefs) for mode in cfg.modes]

    thresholds = []
    for m in range(len(cfg.agents)):
        for h in cfg.space.wrong_indices:
            entry = {"agent": m + 1, "theta": str(cfg.space.labels[h])}
            if 0 < p[m] < 1:
                entry["threshold"] = misinformation_threshold(base.weights, p, d, m, h)
            else:
                entry["threshold"] = None
                entry["reason"] = "undefined unless 0 < p_m < 1"
            thresholds.append(entry)
    fp = base.fingerprint()
    files = {
        "impact.csv": impact_csv(reports, [str(x) for x in cfg.space.labels], fp),
        "analyze.json": summary_json(
            {
                "command": "analyze",
                "modes": {
                    r.mode.value: {
                        "normalized_sum": float(np.sum(r.normalized)),
                        "dispersion": r.dispersion,
                    }
                    for r in reports
                },
                "thresholds": thresholds,
            },
            fp,
        ),
    }
    _commit(cfg, files)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    if cfg.intervention is None:
        raise UsageError("compare needs an intervention in the scenario")
    results = {}
    ok = True
    for mode in cfg.modes:
        scen = cfg.scenario(mode)
        res = run_ensemble(scen, cfg.horizon, cfg.replicas, cfg.master_seed, cfg.parallelism)
        report = compare_to_theory(res, predict(scen), cfg.tolerance)
        ok &= report.passed
        results[mode.value] = comparison_payload(report)
        for row in report.rows:
            status = "PASS" if row.passed else "FAIL"
            print(
                f"{status} {mode.value:<11} theta={row.theta_label}: simulated {row.simulated:.6g} "
                f"+/- {row.simulated_se:.2g}, closed form {row.theoretical:.6g}, "
                f"rel. deviation {row.rel_deviation:.3%} (tolerance {row.tolerance:.0%})"
            )

    # matrix steady state vs closed form on this scenario
    base = cfg.scenario(Mode.SYMMETRIC)
    iv = base.intervention
    on_config = []
    diagnostics = []
    try:
        d = scenario_informativeness(base)
    except InformativenessUnavailableError:
        d = None
    if d is not None:
        c = intervention_log_ratio(iv.fixed_belief, cfg.space.true_index, cfg.space.size)
        closed_all = lambda_inf(Mode.SYMMETRIC, base.weights, base.participation, d, iv.target, iv.fixed_belief)
        for h in cfg.space.wrong_indices:
            closed = float(closed_all[h])
            matrix = symmetric_steady_state(base.weights, base.participation, d.d[:, h], iv.target, float(c[h]))
            passed = abs(closed - matrix) <= ORACLE_TOLERANCE
            ok &= passed
            on_config.append({"theta": str(cfg.space.labels[h]), "closed_form": closed, "matrix": matrix, "passed": passed})
            print(f"{'PASS' if passed else 'FAIL'} oracle      theta={cfg.space.labels[h]}: |closed - matrix| = {abs(closed - matrix):.3g}")
            diagnostics.append(
                {
                    "theta": str(cfg.space.labels[h]),
                    "asymmetric_exact_recursion": asymmetric_intervened_steady_state(
                        base.weights, base.participation, d.d[:, h], iv.target, float(c[h])
                    ),
                }
            )

    checks = random_oracle_checks(cfg.oracle_configs, seed=cfg.master_seed)
    worst = max((x.abs_deviation for x in checks), default=0.0)
    sweep_ok = worst <= ORACLE_TOLERANCE
    ok &= sweep_ok
    print(f"{'PASS' if sweep_ok else 'FAIL'} oracle sweep over {len(checks)} random configurations: max deviation {worst:.3g}")

    payload = {
        "command": "compare",
        "seed": cfg.master_seed,
        "replicas": cfg.replicas,
        "horizon": cfg.horizon,
        "tolerances": {"simulation_relative": cfg.tolerance, "oracle_absolute": ORACLE_TOLERANCE},
        "simulation": results,
        "oracle": {
            "scenario": on_config,
            "random_sweep": {"configs": len(checks), "max_abs_deviation": worst, "passed": sweep_ok},
        },
        "diagnostics": diagnostics,
        "passed": bool(ok),
    }
    _commit(cfg, {"compare.json": summary_json(payload, _run_fingerprint(cfg))})
    return EXIT_OK if ok else EXIT_COMPARE


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be a comma-separated list of numbers, got {text!r}") from None


def cmd_sweep(cfg: ExperimentConfig, param: str | None, values: str | None) -> int:
    parameter = param or cfg.sweep_parameter
    vals = _parse_values(values) if values is not None else list(cfg.sweep_values)
    if not parameter or not vals:
        raise UsageError("sweep needs a parameter and values (--param/--values or a [sweep] table)")
    if cfg.intervention is None:
        raise UsageError("sweeps need an intervention in the scenario")
    labels = [str(x) for x in cfg.space.labels]
    files, per_mode = {}, {}
    for mode in cfg.modes:
        scen = cfg.scenario(mode)
        rows = sweep(
            parameter, vals, scen, cfg.horizon, cfg.replicas, cfg.master_seed, cfg.sweep_empirical, cfg.parallelism
        )
        per_mode[mode] = rows
        files[f"sweep_{parameter}_{mode.value}.csv"] = sweep_csv(rows, labels, cfg.space.true_index, scen.fingerprint())

    payload = {"command": "sweep", "parameter": parameter, "values": vals, "seed": cfg.master_seed,
               "replicas": cfg.replicas, "horizon": cfg.horizon}
    if (
        parameter == "c"
        and Mode.ASYMMETRIC in per_mode
        and Mode.SYMMETRIC in per_mode
        and cfg.space.size == 2
        and per_mode[Mode.SYMMETRIC][0].lambda_analytic is not None
    ):
        h = cfg.space.wrong_indices[0]
        asym = [r.lambda_analytic[h] for r in per_mode[Mode.ASYMMETRIC]]
        sym = [r.lambda_analytic[h] for r in per_mode[Mode.SYMMETRIC]]
        crossing = find_crossing(vals, asym, sym)
        base = cfg.scenario(Mode.SYMMETRIC)
        m = cfg.intervention.target
        try:
            threshold = misinformation_threshold(base.weights, base.participation, scenario_informativeness(base), m, h)
        except ValueError:
            threshold = None
        payload["crossing"] = {
            "c_at_crossing": crossing,
            "misinformation_strength_at_crossing": None if crossing is None else -crossing,
            "threshold": threshold,
        }
    if parameter == "p_m":
        payload["impact_analytic"] = {
            mode.value: [r.impact_analytic for r in rows] for mode, rows in per_mode.items()
        }
    files[f"sweep_{parameter}.json"] = summary_json(payload, _run_fingerprint(cfg))
    _commit(cfg, files)
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.action == "list":
        for name, desc in list_presets():
            print(f"{name:<6} {desc}")
        return EXIT_OK
    if not args.name:
        raise UsageError("preset show needs a preset name")
    sys.stdout.write(preset_text(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedcausal", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"fedcausal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment TOML file")
    common.add_argument("--preset", help="bundled preset name (see 'preset list')")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--replicas", type=int, help="Monte Carlo replicas")
    common.add_argument("--parallelism", type=int, help="worker processes")
    common.add_argument("--horizon", type=int, help="time steps per replica")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")

    sub.add_parser("simulate", parents=[common], help="run ensembles and write time series")
    sub.add_parser("analyze", parents=[common], help="closed-form impact scores and thresholds")
    sub.add_parser("compare", parents=[common], help="simulation vs closed forms vs matrix oracle")
    sp = sub.add_parser("sweep", parents=[common], help="sweep p_m, c, replicas or horizon")
    sp.add_argument("--param", help="p_m, c, replicas or horizon")
    sp.add_argument("--values", help="comma-separated values")
    pp = sub.add_parser("preset", help="list or print bundled presets")
    pp.add_argument("action", choices=("list", "show"))
    pp.add_argument("name", nargs="?")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "preset":
            return cmd_preset(args)
        cfg = _resolve(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_sweep(cfg, args.param, args.values)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failures from the engine
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
