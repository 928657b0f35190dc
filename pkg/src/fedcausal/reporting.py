"""CSV and JSON writers for ensembles, impact reports, sweeps and comparisons.

Every file opens with the tool version and the scenario fingerprint. Floats
are written with ``repr`` so reruns produce byte-identical files, and each
file is written to a temporary sibling and moved into place.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .harness import TAIL_FRACTION, EnsembleResult

TIMESERIES_COLUMNS = ("step", "mode", "theta_index", "mean_lbr", "se_lbr", "mean_belief_true", "se_belief_true")


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def header_lines(fingerprint: str, **extra) -> list[str]:
    lines = [f"# fedcausal {__version__}", f"# fingerprint {fingerprint}"]
    lines += [f"# {k} {v}" for k, v in extra.items()]
    return lines


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv(header: list[str], columns, rows) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def timeseries_csv(result: EnsembleResult) -> str:
    """One row per (step, wrong hypothesis); steps are numbered from 1."""
    wrong = result.space.wrong_indices
    rows = (
        (
            str(i + 1),
            result.mode.value,
            str(h),
            _num(result.mean_lbr[i, h]),
            _num(result.se_lbr[i, h]),
            _num(result.mean_belief_true[i]),
            _num(result.se_belief_true[i]),
        )
        for i in range(result.horizon)
        for h in wrong
    )
    header = header_lines(
        result.fingerprint,
        scenario=result.scenario_fingerprint,
        seed=result.master_seed,
        replicas=result.replicas,
    )
    return _csv(header, TIMESERIES_COLUMNS, rows)


def impact_csv(reports, labels, fingerprint: str) -> str:
    """Rows of ``mode, agent, lambda_inf_<theta>..., C_m, normalized_score``.

    Agents are numbered from 1; only wrong hypotheses get a lambda column.
    """
    first = reports[0]
    wrong = [h for h in range(len(labels)) if h != first.true_index]
    columns = ["mode", "agent", *(f"lambda_inf_{labels[h]}" for h in wrong), "C_m", "normalized_score"]
    rows = []
    for rep in reports:
        for k in range(rep.impacts.size):
            rows.append(
                (
                    rep.mode.value,
                    str(k + 1),
                    *(_num(rep.lambda_inf[k, h]) for h in wrong),
                    _num(rep.impacts[k]),
                    _num(rep.normalized[k]),
                )
            )
    return _csv(header_lines(fingerprint), columns, rows)


def sweep_csv(rows, labels, true_index: int, fingerprint: str) -> str:
    wrong = [h for h in range(len(labels)) if h != true_index]
    columns = [
        "parameter",
        "value",
        "mode",
        *(f"lambda_analytic_{labels[h]}" for h in wrong),
        "impact_analytic",
        *(f"lambda_empirical_{labels[h]}" for h in wrong),
        "impact_empirical",
        "impact_empirical_se",
    ]
    out = []
    for r in rows:
        la = [None] * len(wrong) if r.lambda_analytic is None else [r.lambda_analytic[h] for h in wrong]
        le = [None] * len(wrong) if r.lambda_empirical is None else [r.lambda_empirical[h] for h in wrong]
        out.append(
            (
                r.parameter,
                _num(r.value),
                r.mode.value,
                *map(_num, la),
                _num(r.impact_analytic),
                *map(_num, le),
                _num(r.impact_empirical),
                _num(r.impact_empirical_se),
            )
        )
    return _csv(header_lines(fingerprint), columns, out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def summary_json(payload: dict, fingerprint: str) -> str:
    doc = {
        "tool": f"fedcausal {__version__}",
        "fingerprint": fingerprint,
        "steady_state_window": f"mean over the final {TAIL_FRACTION:.0%} of the horizon",
        **payload,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def comparison_payload(report) -> dict:
    return {
        "mode": report.mode,
        "scenario_fingerprint": report.scenario_fingerprint,
        "passed": report.passed,
        "rows": [
            {
                "theta_index": r.theta_index,
                "theta": r.theta_label,
                "simulated": r.simulated,
                "simulated_se": r.simulated_se,
                "theoretical": r.theoretical,
                "abs_deviation": r.abs_deviation,
                "rel_deviation": r.rel_deviation,
                "tolerance": r.tolerance,
                "passed": r.passed,
            }
            for r in report.rows
        ],
    }
