"""Versioned JSON serialization of models, fits and test results."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fit import FitOptions, MultiRdpgFit
from .graphs import LatentModel
from .inference import TestOptions, TestResult

VERSION = 1


class FormatError(ValueError):
    pass


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model: LatentModel) -> dict:
    return {
        "format": "multirdpg-model",
        "version": VERSION,
        "n": model.n,
        "d": model.d,
        "K": model.K,
        "link": model.link,
        "U": _floats(model.U),
        "lambdas": _floats(model.lambdas),
    }


def fit_to_dict(fit: MultiRdpgFit, config: dict | None = None) -> dict:
    out = model_to_dict(fit.model)
    out.update({
        "format": "multirdpg-fit",
        "objective": fit.objective,
        "objective_trace": _floats(fit.objective_trace),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "options": fit.options.to_dict() if fit.options else None,
    })
    if config is not None:
        out["config"] = config
    return out


def test_result_to_dict(result: TestResult, config: dict | None = None) -> dict:
    opts = result.options
    out = {
        "format": "multirdpg-test",
        "version": VERSION,
        "statistic": float(result.statistic),
        "p_value": float(result.p_value),
        "null_objective": float(result.null_objective),
        "alternative_objective": float(result.alternative_objective),
        "n_permutations": int(result.null_statistics.size),
        "seed": opts.seed if opts else None,
        "options": opts.to_dict() if opts else None,
        "null_statistics": _floats(result.null_statistics),
    }
    if config is not None:
        out["config"] = config
    return out


test_result_to_dict.__test__ = False


def _check_header(data: dict, *formats: str):
    if not isinstance(data, dict) or data.get("format") not in formats:
        raise FormatError(f"expected one of {formats}, got {data.get('format')!r}"
                          if isinstance(data, dict) else "expected a JSON object")
    if data.get("version") != VERSION:
        raise FormatError(f"unsupported {data['format']} version {data.get('version')!r}")


def model_from_dict(data: dict) -> LatentModel:
    """Latent model from a ``multirdpg-model`` or ``multirdpg-fit`` document."""
    _check_header(data, "multirdpg-model", "multirdpg-fit")
    try:
        U = np.array(data["U"], dtype=float).reshape(data["n"], data["d"])
        lam = np.array(data["lambdas"], dtype=float).reshape(data["K"], data["d"])
        return LatentModel(U, lam, data.get("link", "identity"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc


def fit_from_dict(data: dict) -> MultiRdpgFit:
    _check_header(data, "multirdpg-fit")
    opts = data.get("options")
    return MultiRdpgFit(model_from_dict(data), np.array(data["objective_trace"], dtype=float),
                        bool(data["converged"]), int(data["iterations"]),
                        FitOptions(**opts) if opts else None)


def test_result_from_dict(data: dict) -> TestResult:
    _check_header(data, "multirdpg-test")
    opts = data.get("options")
    if opts:
        fo = opts.get("fit_options")
        opts = TestOptions(**{**opts, "fit_options": FitOptions(**fo) if fo else None})
    return TestResult(data["statistic"], np.array(data["null_statistics"], dtype=float),
                      data["p_value"], data["null_objective"], data["alternative_objective"],
                      opts)


test_result_from_dict.__test__ = False


def dumps(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def save(path, data: dict):
    Path(path).write_text(dumps(data), encoding="utf-8")


def load(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
