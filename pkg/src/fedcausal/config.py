"""Experiment configuration files (TOML) and the bundled figure presets.

Agents are numbered from 1 in configuration files, as in the figures they
reproduce; the Python API is 0-based.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .beliefs import Belief, HypothesisSpace
from .errors import SupportError
from .likelihoods import (
    CategoricalModel,
    GaussianMeanModel,
    InformativenessMatrix,
    read_likelihood_stream,
    validate_global_identifiability,
)
from .protocol import WEIGHT_SUM_TOL, AgentSpec, InterventionSpec, Mode, Scenario

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

PRESET_PACKAGE = "fedcausal.presets"


class ConfigError(ValueError):
    """All problems found in a configuration file."""

    def __init__(self, problems, source=None):
        self.problems = list(problems)
        self.source = source
        where = f"{source}: " if source else ""
        super().__init__(where + "; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    modes: tuple
    space: HypothesisSpace
    agents: tuple
    intervention: InterventionSpec | None
    initial_prior: Belief | None
    horizon: int
    replicas: int
    master_seed: int
    parallelism: int = 1
    output_dir: Path = Path("results")
    formats: tuple = ("csv", "json")
    tolerance: float = 0.05
    oracle_configs: int = 100
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    sweep_empirical: bool = True
    preset: str | None = None
    description: str = ""
    warnings: tuple = field(default=())

    def scenario(self, mode) -> Scenario:
        return Scenario(Mode(mode), self.space, self.agents, self.intervention, self.initial_prior)


def _model(block: dict, where: str, H: int, base_dir: Path, problems: list, index: int):
    kind = block.get("model", "gaussian")
    try:
        if kind == "gaussian":
            means = block.get("means")
            if means is None or len(means) != H:
                problems.append(f"{where}.means: need {H} values, one per hypothesis")
                return None
            return GaussianMeanModel(means, float(block.get("std_dev", 1.0)))
        if kind == "categorical":
            table = block.get("table")
            if table is None or len(table) != H:
                problems.append(f"{where}.table: need {H} rows, one per hypothesis")
                return None
            return CategoricalModel(table)
        if kind == "stream":
            if "path" not in block:
                problems.append(f"{where}.path: stream agents need a file path")
                return None
            path = Path(block["path"])
            if not path.is_absolute():
                path = base_dir / path
            return read_likelihood_stream(
                path,
                HypothesisSpace(tuple(range(H))),
                agent_id=str(block.get("id", f"agent{index + 1}")),
                segmented=block.get("replay", "single") == "segmented",
            )
    except (OSError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None
    problems.append(f"{where}.model: unknown model {kind!r} (gaussian, categorical, stream)")
    return None


def _belief(value, H: int, where: str, problems: list) -> Belief | None:
    if value is None or value == "uniform":
        return Belief.uniform(H)
    try:
        if len(value) != H:
            problems.append(f"{where}: need {H} probabilities")
            return None
        return Belief.from_probs(value)
    except (TypeError, ValueError, SupportError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def parse_config(raw: dict, base_dir: Path = Path("."), source=None) -> ExperimentConfig:
    """Validate a parsed TOML document, reporting every problem at once."""
    problems: list[str] = []
    notes: list[str] = []
    scen = raw.get("scenario")
    run = raw.get("run", {})
    if not isinstance(scen, dict):
        raise ConfigError(["scenario: missing [scenario] table"], source)

    modes_raw = scen.get("modes", scen.get("mode"))
    if modes_raw is None:
        problems.append("scenario.mode: missing (synchronous, asymmetric or symmetric)")
        modes = ()
    else:
        modes_raw = [modes_raw] if isinstance(modes_raw, str) else list(modes_raw)
        modes = []
        for m in modes_raw:
            try:
                modes.append(Mode(m))
            except ValueError:
                problems.append(f"scenario.mode: unknown mode {m!r}")
        modes = tuple(modes)

    labels = tuple(scen.get("hypotheses", ("H0", "H1")))
    truth = scen.get("true_hypothesis", labels[0] if labels else None)
    space = None
    try:
        space = HypothesisSpace(labels, labels.index(truth))
    except ValueError as exc:
        problems.append(f"scenario.hypotheses: {exc}")
    H = len(labels)

    agents = []
    blocks = scen.get("agents", [])
    if not blocks:
        problems.append("scenario.agents: at least one agent is required")
    for i, block in enumerate(blocks):
        where = f"scenario.agents[{i + 1}]"
        model = _model(block, where, H, base_dir, problems, i)
        pi, p = block.get("pi"), block.get("p", 1.0)
        if not isinstance(pi, (int, float)) or not 0 < pi <= 1:
            problems.append(f"{where}.pi: confidence weight must lie in (0, 1], got {pi!r}")
            continue
        if not isinstance(p, (int, float)) or not 0 <= p <= 1:
            problems.append(f"{where}.p: participation probability must lie in [0, 1], got {p!r}")
            continue
        if p == 0:
            notes.append(f"{where}.p is 0: this agent never transmits")
        if model is not None:
            agents.append(AgentSpec(model, float(pi), float(p)))
    if blocks:
        total = math.fsum(b.get("pi", 0) for b in blocks if isinstance(b.get("pi"), (int, float)))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            problems.append(f"scenario.agents: confidence weights (pi) sum to {total:.12g}, expected 1")

    intervention = None
    iv = scen.get("intervention")
    if iv is not None:
        agent = iv.get("agent")
        if not isinstance(agent, int) or not 1 <= agent <= len(blocks):
            problems.append(f"scenario.intervention.agent: must be an agent number 1..{len(blocks)}, got {agent!r}")
        else:
            belief = _belief(iv.get("belief", "uniform"), H, "scenario.intervention.belief", problems)
            if belief is not None:
                intervention = InterventionSpec(agent - 1, belief)
    prior = None
    if "initial_prior" in scen:
        prior = _belief(scen["initial_prior"], H, "scenario.initial_prior", problems)

    if "master_seed" not in run:
        problems.append("run.master_seed: required; there is no time-based default")
    seed = run.get("master_seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append(f"run.master_seed: must be a non-negative integer, got {seed!r}")
    horizon = run.get("horizon", 500)
    replicas = run.get("replicas", 200)
    parallelism = run.get("parallelism", 1)
    for name, value, lo in (("horizon", horizon, 0), ("replicas", replicas, 1), ("parallelism", parallelism, 1)):
        if not isinstance(value, int) or value < lo:
            problems.append(f"run.{name}: must be an integer >= {lo}, got {value!r}")

    output = raw.get("output", {})
    compare = raw.get("compare", {})
    sweep = raw.get("sweep", {})
    tolerance = compare.get("tolerance", 0.05)
    if not isinstance(tolerance, (int, float)) or tolerance <= 0:
        problems.append(f"compare.tolerance: must be positive, got {tolerance!r}")

    if not problems and space is not None and len(agents) == len(blocks):
        try:
            d = InformativenessMatrix.from_models([a.model for a in agents], space.true_index)
        except Exception:
            d = None
        if d is not None:
            missing = validate_global_identifiability(d)
            if missing:
                notes.append(f"hypotheses {[labels[h] for h in missing]} are not identifiable by any agent")
        try:
            Scenario(modes[0] if modes else Mode.SYNCHRONOUS, space, agents, intervention, prior)
        except ValueError as exc:
            problems.append(f"scenario: {exc}")

    if problems:
        raise ConfigError(problems, source)
    out_dir = Path(output.get("directory", "results"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    return ExperimentConfig(
        modes=modes,
        space=space,
        agents=tuple(agents),
        intervention=intervention,
        initial_prior=prior,
        horizon=horizon,
        replicas=replicas,
        master_seed=seed,
        parallelism=parallelism,
        output_dir=out_dir,
        formats=tuple(output.get("formats", ("csv", "json"))),
        tolerance=float(tolerance),
        oracle_configs=int(compare.get("oracle_configs", 100)),
        sweep_parameter=sweep.get("parameter"),
        sweep_values=tuple(sweep.get("values", ())),
        sweep_empirical=bool(sweep.get("empirical", True)),
        preset=raw.get("preset"),
        description=raw.get("description", ""),
        warnings=tuple(notes),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries "(at line L, column C)"
        raise ConfigError([f"parse error: {exc}"], path) from None
    return parse_config(raw, path.parent, path)


def list_presets() -> list[tuple[str, str]]:
    out = []
    for entry in sorted(resources.files(PRESET_PACKAGE).iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".toml"):
            raw = tomllib.loads(entry.read_text(encoding="utf-8"))
            out.append((entry.name[:-5], raw.get("description", "")))
    return out


def preset_text(name: str) -> str:
    entry = resources.files(PRESET_PACKAGE) / f"{name}.toml"
    if not entry.is_file():
        known = ", ".join(n for n, _ in list_presets())
        raise ConfigError([f"unknown preset {name!r}; available: {known}"])
    return entry.read_text(encoding="utf-8")


def load_preset(name: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    return parse_config(tomllib.loads(preset_text(name)), base_dir, f"preset:{name}")
