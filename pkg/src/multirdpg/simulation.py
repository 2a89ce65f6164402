"""Simulation harness: estimation studies (Settings 1-2), Type I error, power.

Each ``run_*`` function returns a :class:`SimulationReport` holding one row per
replicate (and per grid point) plus a summary of means and standard errors.
Replicate ``i`` at grid point ``g`` draws its randomness from
``child_seed(spec.seed, *g, i)``, so output does not depend on execution order
or on the number of workers.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fit import FitOptions, fit_common_lambda, fit_multi_rdpg, fit_rdpg_single, positive_parts
from .graphs import LatentModel, child_seed, make_rng, sample_graphs
from .inference import TestOptions, permutation_test
from .metrics import adjacency_error, adjacency_error_from_reconstructions, mean_and_se, subspace_distance

SETTINGS = ("setting1", "setting2", "null-typeI", "power")
SCHEMA_VERSION = 1

K_GRID = (2, 4, 6, 8, 10, 20, 30, 40, 50)

# Setting 1: independent uniform laws for the three diagonal entries.
SETTING1_LAWS = ((8.0, 15.0), (1.0, 4.0), (0.0, 1.0))

# Setting 2: Lambda^even, and the six orderings used for Lambda^odd (panels a-f).
LAMBDA_EVEN = (11.5, 2.0, 0.5)
ODD_PERMUTATIONS = {
    1: (11.5, 2.0, 0.5),
    2: (11.5, 0.5, 2.0),
    3: (2.0, 0.5, 11.5),
    4: (2.0, 11.5, 0.5),
    5: (0.5, 11.5, 2.0),
    6: (0.5, 2.0, 11.5),
}

# null-typeI lambda rules -> (required d, diagonal as a function of n)
NULL_RULES = {
    "n4n5": (2, lambda n: (n / 4, n / 5)),
    "n2n4n400": (3, lambda n: (n / 2, n / 4, n / 400)),
}
POWER_RULES = {"K2": 2, "K3": 3}

ESTIMATORS = ("multi-rdpg", "rdpg-all", "rdpg-separate")


def build_u_structured(n: int, d: int) -> np.ndarray:
    """Orthonormal sign-pattern basis.

    Columns are ``(1, 1, ...)``, ``(1, -1, 1, -1, ...)`` and, for ``d = 3``,
    ``(1, 1, -1, -1, ...)``, each scaled by ``1/sqrt(n)``.
    """
    if d not in (2, 3):
        raise ValueError(f"structured basis supports d in {{2, 3}}, got d={d}")
    if d == 2 and n % 2:
        raise ValueError(f"d=2 structured basis needs even n, got n={n}")
    if d == 3 and n % 4:
        raise ValueError(f"d=3 structured basis needs n divisible by 4, got n={n}")
    idx = np.arange(n)
    cols = [np.ones(n), np.where(idx % 2 == 0, 1.0, -1.0)]
    if d == 3:
        cols.append(np.where(idx % 4 < 2, 1.0, -1.0))
    return np.column_stack(cols) / math.sqrt(n)


def power_lambdas(rule: str, n: int, r: float) -> np.ndarray:
    """Two-graph weights for the power study; ``r = 0`` gives equal weights."""
    if rule == "K2":
        a, b = n / 4 * (1 + r), n / 4 * (1 - r)
        return np.array([[a, b], [b, a]])
    if rule == "K3":
        return np.array([[n / 4 * (1 - r), n / 5 * (1 + r), n / 400 * (1 - r)],
                         [n / 4 * (1 + r), n / 5 * (1 - r), n / 400 * (1 + r)]])
    raise ValueError(f"unknown power rule {rule!r}")


def _tuple(x) -> tuple:
    if isinstance(x, (list, tuple)):
        return tuple(x)
    return (x,)


@dataclass(frozen=True)
class SimulationSpec:
    """Generative configuration for one study.

    ``n``, ``K`` and ``r`` accept a scalar or a grid. Use
    :meth:`default` for the default parameters of each setting.
    """

    setting: str
    n: tuple = (20,)
    d: int = 3
    K: tuple = (2,)
    lambda_rule: str = ""
    link: str = "identity"
    r: tuple = (0.0,)
    replicates: int = 100
    seed: int = 0
    permutation: int = 1
    n_permutations: int = 200
    alpha: float = 0.05
    fit: FitOptions | None = field(default=None)

    def __post_init__(self):
        for name in ("n", "K", "r"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))
        if self.fit is None:
            object.__setattr__(self, "fit", FitOptions(d=self.d))
        self.validate()

    @classmethod
    def default(cls, setting: str, **overrides) -> "SimulationSpec":
        base = {
            "setting1": dict(n=20, d=3, K=K_GRID, lambda_rule="uniform", link="identity",
                             replicates=100),
            "setting2": dict(n=20, d=3, K=K_GRID, lambda_rule="even-odd", link="clamp01",
                             replicates=100),
            "null-typeI": dict(n=(20, 50, 100), d=2, K=2, lambda_rule="n4n5", link="identity",
                               replicates=200, n_permutations=200),
            "power": dict(n=(20, 50, 100), d=2, K=2, lambda_rule="K2", link="relu",
                          r=(0.0, 0.25, 0.5, 0.75, 1.0), replicates=200, n_permutations=200),
        }
        if setting not in base:
            raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
        params = {**base[setting], **overrides}
        if "fit" not in overrides:
            params["fit"] = FitOptions(d=params["d"])
        return cls(setting=setting, **params)

    def validate(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; expected one of {SETTINGS}")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if any(k < 1 for k in self.K):
            raise ValueError("K must be positive")
        if self.fit.d != self.d:
            raise ValueError("fit.d must equal d")
        s = self.setting
        if s in ("setting1", "setting2"):
            if self.d != 3:
                raise ValueError(f"{s} requires d=3")
            for n in self.n:
                build_u_structured(n, 3)
        if s == "setting1" and self.link != "identity":
            raise ValueError("setting1 generates with the identity link")
        if s == "setting2":
            if self.permutation not in ODD_PERMUTATIONS:
                raise ValueError("setting2 requires a permutation id in 1..6")
            if self.link != "clamp01":
                raise ValueError("setting2 generates with the clamp01 link")
        if s in ("null-typeI", "power"):
            if self.K != (2,):
                raise ValueError(f"{s} uses K=2 graphs")
            if self.n_permutations < 1:
                raise ValueError("n_permutations must be at least 1")
            if not 0 < self.alpha < 1:
                raise ValueError("alpha must lie in (0, 1)")
        if s == "null-typeI":
            if self.lambda_rule not in NULL_RULES:
                raise ValueError(f"null-typeI lambda_rule must be one of {sorted(NULL_RULES)}")
            if self.d != NULL_RULES[self.lambda_rule][0]:
                raise ValueError(f"lambda_rule {self.lambda_rule} requires "
                                 f"d={NULL_RULES[self.lambda_rule][0]}")
            for n in self.n:
                build_u_structured(n, self.d)
        if s == "power":
            if self.lambda_rule not in POWER_RULES:
                raise ValueError(f"power lambda_rule must be one of {sorted(POWER_RULES)}")
            if self.d != POWER_RULES[self.lambda_rule]:
                raise ValueError(f"lambda_rule {self.lambda_rule} requires "
                                 f"d={POWER_RULES[self.lambda_rule]}")
            if self.link != "relu":
                raise ValueError("power study generates with the relu link f(u) = max(u, 0)")
            if any(not 0 <= r <= 1 for r in self.r):
                raise ValueError("r must lie in [0, 1]")
            for n in self.n:
                build_u_structured(n, self.d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimulationReport:
    spec: SimulationSpec
    rows: list[dict]
    summary: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            writer = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.rows)
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {
            "format": "multirdpg-simulation",
            "version": SCHEMA_VERSION,
            "spec": _jsonable(self.spec.to_dict()),
            "summary": _jsonable(self.summary),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary_dict(), indent=2, sort_keys=True) + "\n"

    def lookup(self, **where) -> list[dict]:
        return [s for s in self.summary if all(s.get(k) == v for k, v in where.items())]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _map(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [fn(t) for t in tasks]


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Estimation studies
# ---------------------------------------------------------------------------

def _estimate(model: LatentModel, graphs, groups, fit_options: FitOptions) -> dict:
    """Fit the three estimators and score them against the true model."""
    stack = positive_parts(graphs)
    U_true, d = model.U, model.d
    out = {}

    multi = fit_multi_rdpg(Aplus=stack, options=fit_options)
    out["multi-rdpg"] = (subspace_distance(multi.U, U_true), adjacency_error(model, multi.model),
                         multi.converged)

    common = fit_common_lambda(stack, d)
    out["rdpg-all"] = (subspace_distance(common.U, U_true),
                       adjacency_error(model, common.as_model()), True)

    # separate: one RDPG per group of graphs assumed to share a distribution
    recon = [None] * model.K
    dists = []
    for members in groups:
        if len(members) == 1:
            U_g, lam_g = fit_rdpg_single(stack[members[0]], d)
        else:
            fit_g = fit_common_lambda(stack[members], d)
            U_g, lam_g = fit_g.U, fit_g.lam
        dists.append(subspace_distance(U_g, U_true))
        for k in members:
            recon[k] = (U_g * lam_g) @ U_g.T
    out["rdpg-separate"] = (float(np.mean(dists)),
                            adjacency_error_from_reconstructions(model, recon), True)
    return out


def _setting_lambdas(spec: SimulationSpec, K: int, rng: np.random.Generator) -> np.ndarray:
    if spec.setting == "setting1":
        lows = np.array([lo for lo, _ in SETTING1_LAWS])
        highs = np.array([hi for _, hi in SETTING1_LAWS])
        return rng.uniform(lows, highs, size=(K, 3))
    odd = np.array(ODD_PERMUTATIONS[spec.permutation])
    even = np.array(LAMBDA_EVEN)
    # graphs are numbered 1..K: index k holds graph k+1
    return np.array([even if (k + 1) % 2 == 0 else odd for k in range(K)])


def _groups(spec: SimulationSpec, K: int) -> list[list[int]]:
    if spec.setting == "setting1":
        return [[k] for k in range(K)]
    odds = [k for k in range(K) if (k + 1) % 2 == 1]
    evens = [k for k in range(K) if (k + 1) % 2 == 0]
    return [g for g in (odds, evens) if g]


def _estimation_task(args) -> list[dict]:
    spec, n, K, rep = args
    key = (n, K, rep) if spec.setting == "setting1" else (spec.permutation, n, K, rep)
    seq = child_seed(spec.seed, *key)
    rng = make_rng(child_seed(seq, 0))
    model = LatentModel(build_u_structured(n, 3), _setting_lambdas(spec, K, rng), spec.link)
    graphs = sample_graphs(model, child_seed(seq, 1))
    results = _estimate(model, graphs, _groups(spec, K), spec.fit)
    rows = []
    for est in ESTIMATORS:
        d_u, d_a, conv = results[est]
        row = {"setting": spec.setting}
        if spec.setting == "setting2":
            row["permutation"] = spec.permutation
            row["lambda_odd"] = " ".join(f"{v:g}" for v in ODD_PERMUTATIONS[spec.permutation])
        row.update({"n": n, "K": K, "replicate": rep, "estimator": est,
                    "subspace_distance": repr(float(d_u)),
                    "adjacency_error": repr(float(d_a)),
                    "converged": bool(conv)})
        rows.append(row)
    return rows


def _summarize_estimation(spec: SimulationSpec, rows: list[dict]) -> list[dict]:
    summary = []
    for n, K, est in itertools.product(spec.n, spec.K, ESTIMATORS):
        sel = [r for r in rows if r["n"] == n and r["K"] == K and r["estimator"] == est]
        du = [float(r["subspace_distance"]) for r in sel]
        da = [float(r["adjacency_error"]) for r in sel]
        mu_u, se_u = mean_and_se(du)
        mu_a, se_a = mean_and_se(da)
        entry = {"n": n, "K": K, "estimator": est, "replicates": len(sel),
                 "subspace_distance_mean": mu_u, "subspace_distance_se": se_u,
                 "adjacency_error_mean": mu_a, "adjacency_error_se": se_a}
        if spec.setting == "setting2":
            entry["permutation"] = spec.permutation
        summary.append(entry)
    return summary


def run_setting1(spec: SimulationSpec, workers: int = 1) -> SimulationReport:
    """Shared-ordering study with uniformly drawn weights and identity link."""
    if spec.setting != "setting1":
        raise ValueError("run_setting1 needs a setting1 spec")
    tasks = [(spec, n, K, rep) for n in spec.n for K in spec.K for rep in range(spec.replicates)]
    rows = [row for part in _map(_estimation_task, tasks, workers) for row in part]
    return SimulationReport(spec, rows, _summarize_estimation(spec, rows))


def run_setting2(spec: SimulationSpec, workers: int = 1) -> SimulationReport:
    """Even/odd graphs with permuted weight orderings and the clamp01 link."""
    if spec.setting != "setting2":
        raise ValueError("run_setting2 needs a setting2 spec")
    tasks = [(spec, n, K, rep) for n in spec.n for K in spec.K for rep in range(spec.replicates)]
    rows = [row for part in _map(_estimation_task, tasks, workers) for row in part]
    return SimulationReport(spec, rows, _summarize_estimation(spec, rows))


# ---------------------------------------------------------------------------
# Test calibration and power
# ---------------------------------------------------------------------------

def _test_model(spec: SimulationSpec, n: int, r: float) -> LatentModel:
    U = build_u_structured(n, spec.d)
    if spec.setting == "null-typeI":
        lam = NULL_RULES[spec.lambda_rule][1](n)
        return LatentModel(U, [lam, lam], spec.link)
    return LatentModel(U, power_lambdas(spec.lambda_rule, n, r), spec.link)


def _test_task(args) -> dict:
    spec, n, r_index, rep = args
    r = spec.r[r_index]
    key = (n, rep) if spec.setting == "null-typeI" else (n, r_index, rep)
    seq = child_seed(spec.seed, *key)
    graphs = sample_graphs(_test_model(spec, n, r), child_seed(seq, 0))
    test_seed = _int_seed(child_seed(seq, 1))
    opts = TestOptions(d=spec.d, n_permutations=spec.n_permutations, seed=test_seed,
                       fit_options=spec.fit)
    res = permutation_test(graphs, opts)
    row = {"setting": spec.setting, "n": n}
    if spec.setting == "power":
        row["r"] = r
    row.update({"replicate": rep, "test_seed": test_seed,
                "statistic": repr(float(res.statistic)),
                "min_null_statistic": repr(float(res.null_statistics.min())),
                "p_value": repr(float(res.p_value)),
                "reject": bool(res.p_value < spec.alpha)})
    return row


def run_type1(spec: SimulationSpec, workers: int = 1) -> SimulationReport:
    """Permutation-test p-values on freshly simulated null pairs."""
    if spec.setting != "null-typeI":
        raise ValueError("run_type1 needs a null-typeI spec")
    tasks = [(spec, n, 0, rep) for n in spec.n for rep in range(spec.replicates)]
    rows = _map(_test_task, tasks, workers)
    summary = []
    for n in spec.n:
        p = np.array([float(r["p_value"]) for r in rows if r["n"] == n])
        summary.append({"n": n, "replicates": int(p.size),
                        "rejection_rate": float(np.mean(p < spec.alpha)),
                        "mean_p_value": float(p.mean())})
    return SimulationReport(spec, rows, summary)


def run_power(spec: SimulationSpec, workers: int = 1) -> SimulationReport:
    """Fraction of replicate p-values below ``alpha`` for each ``(n, r)``."""
    if spec.setting != "power":
        raise ValueError("run_power needs a power spec")
    tasks = [(spec, n, i, rep) for n in spec.n for i in range(len(spec.r))
             for rep in range(spec.replicates)]
    rows = _map(_test_task, tasks, workers)
    summary = []
    for n in spec.n:
        for r in spec.r:
            p = np.array([float(x["p_value"]) for x in rows if x["n"] == n and x["r"] == r])
            summary.append({"n": n, "r": r, "replicates": int(p.size),
                            "power": float(np.mean(p < spec.alpha))})
    return SimulationReport(spec, rows, summary)


def p_values(report: SimulationReport, n: int | None = None) -> np.ndarray:
    return np.array([float(r["p_value"]) for r in report.rows if n is None or r["n"] == n])


RUNNERS = {
    "setting1": run_setting1,
    "setting2": run_setting2,
    "null-typeI": run_type1,
    "power": run_power,
}


def run(spec: SimulationSpec, workers: int = 1) -> SimulationReport:
    return RUNNERS[spec.setting](spec, workers)


def with_overrides(spec: SimulationSpec, **changes) -> SimulationSpec:
    if "d" in changes and "fit" not in changes:
        changes["fit"] = replace(spec.fit, d=changes["d"])
    return replace(spec, **changes)
