"""Grid evaluation and the frozen result-table format."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

from .config import ExperimentConfig, Oracle
from .delta import MAIN, delta_n_grouped
from .distributions import CohortSpec, Normal, Rademacher, grouped_moments
from .errors import ConfigError, SelfNormError
from .oracles import crude_mc_tail, gaussian_selfnorm_tail, rademacher_tail
from .tail import (
    Formula,
    TailPoint,
    approximate,
    be_bound_fourth,
    be_bound_third,
    jsw_error_factor,
    log_normal_tail,
    normal_tail,
)
from .tilted import conjugate_estimate

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ResultRow:
    schema_version: int
    grid_index: int
    n: int
    x: float
    b: float
    exact_p: float | None
    exact_method: str | None
    exact_abs_err: float | None
    mc_se: float | None
    normal_tail: float
    log_ratio_exact: float | None
    ratio_THM31: float | None
    log_ratio_THM31: float | None
    regime_THM31: str | None
    ratio_THM32: float | None
    log_ratio_THM32: float | None
    regime_THM32: str | None
    ratio_THM34: float | None
    log_ratio_THM34: float | None
    regime_THM34: str | None
    be3_surrogate: float | None
    be3_envelope: float | None
    be4_surrogate: float | None
    be4_envelope: float | None
    jsw_factor: float | None
    delta_value: float | None
    delta_bound: float | None
    hypothesis_violated: bool
    note: str | None


COLUMNS = tuple(f.name for f in fields(ResultRow))
_FLOAT_COLS = {
    f.name for f in fields(ResultRow) if "float" in str(f.type)
}
_INT_COLS = {"schema_version", "grid_index", "n"}


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def resolve_oracle(cfg_oracle: Oracle, cohort: CohortSpec) -> Oracle:
    if cfg_oracle is not Oracle.AUTO:
        return cfg_oracle
    if len(cohort.groups) == 1:
        law = cohort.groups[0][0]
        if isinstance(law, Rademacher):
            return Oracle.BINOMIAL
        if isinstance(law, Normal) and cohort.n >= 2:
            return Oracle.T_INTEGRAL
    return Oracle.CRUDE_MC


def _exact(oracle: Oracle, cohort: CohortSpec, x: float, cfg: ExperimentConfig, index: int):
    """(p, method, abs_err, mc_se)."""
    iid = len(cohort.groups) == 1
    law = cohort.groups[0][0]
    if oracle is Oracle.BINOMIAL:
        if not (iid and isinstance(law, Rademacher)):
            raise ConfigError("BINOMIAL oracle needs an iid Rademacher cohort")
        t = rademacher_tail(cohort.n, x)
        return t.p, t.method.value, t.abs_err, None
    if oracle is Oracle.T_INTEGRAL:
        if not (iid and isinstance(law, Normal)):
            raise ConfigError("T_INTEGRAL oracle needs an iid Normal cohort")
        t = gaussian_selfnorm_tail(cohort.n, x)
        return t.p, t.method.value, t.abs_err, None
    # each grid point draws from its own stream
    seed = [cfg.mc.seed, index]
    if oracle is Oracle.CRUDE_MC:
        t = crude_mc_tail(cohort, x, cfg.mc.samples, seed, cfg.mc.blocks)
        return t.p, t.method.value, None, t.abs_err
    est = conjugate_estimate(cohort, x, cfg.mc.samples, seed, cfg.mc.blocks)
    return est.p_hat, Oracle.TILTED_MC.value, None, est.se


def evaluate_point(cfg: ExperimentConfig, index: int, n: int, x: float) -> ResultRow:
    cohort = cfg.cohort(n)
    point = TailPoint.of(cohort, x)
    row = dict.fromkeys(COLUMNS)
    row.update(schema_version=SCHEMA_VERSION, grid_index=index, n=n, x=x, b=point.b,
               normal_tail=normal_tail(x), hypothesis_violated=False)
    notes = []
    oracle = resolve_oracle(cfg.oracle, cohort)
    try:
        p, method, err, se = _exact(oracle, cohort, x, cfg, index)
        row.update(exact_p=p, exact_method=method, exact_abs_err=err, mc_se=se)
        if p > 0:
            row["log_ratio_exact"] = math.log(p) - log_normal_tail(x)
    except ConfigError:
        raise
    except SelfNormError as e:
        notes.append(f"oracle: {e}")

    dv = delta_n_grouped(grouped_moments(cohort, x), MAIN)
    row.update(delta_value=dv.value, delta_bound=dv.bound)
    for name in ("THM31", "THM32", "THM34"):
        if name not in cfg.formulas:
            continue
        try:
            ap = approximate(cohort, x, Formula(name), cfg.profile)
        except ValueError as e:
            notes.append(f"{name}: {e}")
            continue
        row[f"ratio_{name}"] = ap.ratio
        row[f"log_ratio_{name}"] = math.log(ap.ratio) if ap.ratio > 0 else None
        row[f"regime_{name}"] = ap.regime.value
        if ap.hypothesis_violated:
            row["hypothesis_violated"] = True
            notes.extend(ap.violations)
    if "BE3" in cfg.formulas:
        be = be_bound_third(point, cohort, cfg.profile)
        row.update(be3_surrogate=be.surrogate, be3_envelope=be.envelope)
    if "BE4" in cfg.formulas:
        be = be_bound_fourth(point, cohort)
        row.update(be4_surrogate=be.surrogate, be4_envelope=be.envelope)
    if "JSW" in cfg.formulas:
        row["jsw_factor"] = jsw_error_factor(point, cohort, cfg.profile.delta or 1.0)
    row["note"] = "; ".join(dict.fromkeys(notes)) or None
    return ResultRow(**{k: _clean(v) for k, v in row.items()})


def _eval_star(args):
    return evaluate_point(*args)


def run_grid(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    grid = cfg.grid()
    if not grid:
        raise ConfigError("grid: empty grid")
    needs_mc = any(resolve_oracle(cfg.oracle, cfg.cohort(n)) in (Oracle.CRUDE_MC, Oracle.TILTED_MC) for n in cfg.ns)
    if needs_mc and cfg.mc.seed is None:
        raise ConfigError("mc.seed: required when a Monte Carlo oracle is used")
    tasks = [(cfg, i, n, x) for i, (n, x) in enumerate(grid)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            # map returns results in grid order whatever the completion order
            return list(ex.map(_eval_star, tasks))
    return [evaluate_point(*t) for t in tasks]


# ---------------------------------------------------------------------------
# serialisation


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def rows_to_json(rows: list[ResultRow]) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "columns": list(COLUMNS), "rows": [asdict(r) for r in rows]}
    return json.dumps(doc, indent=1) + "\n"


def rows_from_json(text: str) -> list[ResultRow]:
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")
    return [ResultRow(**r) for r in doc["rows"]]


def _parse_cell(col: str, s: str):
    if s == "NA":
        return None
    if col == "hypothesis_violated":
        return s == "true"
    if col in _INT_COLS:
        return int(s)
    if col in _FLOAT_COLS:
        return float(s)
    return s


def rows_from_csv(text: str) -> list[ResultRow]:
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    if tuple(header) != COLUMNS:
        raise ValueError("CSV header does not match the current column order")
    return [ResultRow(**{c: _parse_cell(c, s) for c, s in zip(header, rec)}) for rec in rd]


def with_overrides(cfg: ExperimentConfig, seed=None, out=None, fmt=None) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, seed=seed))
    if out is not None:
        cfg = replace(cfg, out_path=out)
    if fmt is not None:
        cfg = replace(cfg, out_format=fmt)
    return cfg
