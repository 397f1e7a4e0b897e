"""Experiment configuration: TOML in, validated ExperimentConfig out."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .distributions import (
    CenteredUniform,
    CohortSpec,
    DensityTable,
    DistributionSpec,
    EmpiricalSample,
    Normal,
    Rademacher,
    TwoPoint,
)
from .errors import ConfigError, SelfNormError
from .tail import AssumptionProfile

FORMULAS = ("THM31", "THM32", "THM34", "BE3", "BE4", "JSW")


class Oracle(str, enum.Enum):
    AUTO = "AUTO"
    BINOMIAL = "BINOMIAL"
    T_INTEGRAL = "T_INTEGRAL"
    CRUDE_MC = "CRUDE_MC"
    TILTED_MC = "TILTED_MC"


MC_ORACLES = {Oracle.CRUDE_MC, Oracle.TILTED_MC}


@dataclass(frozen=True)
class XRule:
    """x = c * n^tau."""

    c: float
    tau: float

    def at(self, n: int) -> float:
        return self.c * n**self.tau


@dataclass(frozen=True)
class GroupSpec:
    law: DistributionSpec
    fraction: float


@dataclass(frozen=True)
class McSettings:
    samples: int = 100_000
    seed: int | None = None
    blocks: int = 16


@dataclass(frozen=True)
class ExperimentConfig:
    groups: tuple[GroupSpec, ...]
    ns: tuple[int, ...]
    xs: tuple[float, ...] = ()
    x_rules: tuple[XRule, ...] = ()
    formulas: tuple[str, ...] = ("THM31",)
    oracle: Oracle = Oracle.AUTO
    mc: McSettings = McSettings()
    out_path: str | None = None
    out_format: str = "csv"
    profile: AssumptionProfile = field(default_factory=AssumptionProfile)

    def cohort(self, n: int) -> CohortSpec:
        """Split n members across groups by their fractions; the last group takes the remainder."""
        counts = [int(math.floor(g.fraction * n)) for g in self.groups[:-1]]
        counts.append(n - sum(counts))
        pairs = tuple((g.law, k) for g, k in zip(self.groups, counts) if k > 0)
        return CohortSpec(pairs)

    def grid(self) -> list[tuple[int, float]]:
        pts = []
        for n in self.ns:
            pts.extend((n, float(x)) for x in self.xs)
            pts.extend((n, r.at(n)) for r in self.x_rules)
        return pts

    @property
    def uses_mc(self) -> bool:
        return self.oracle in MC_ORACLES


# ---------------------------------------------------------------------------
# parsing


def _need(tab: dict, key: str, where: str):
    if key not in tab:
        raise ConfigError(f"{where}: missing field '{key}'")
    return tab[key]


def _num(v: Any, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def parse_law(tab: Any, where: str = "law", base: Path | None = None) -> DistributionSpec:
    if isinstance(tab, str):
        tab = {"kind": tab}
    if not isinstance(tab, dict):
        raise ConfigError(f"{where}: expected a table")
    kind = _need(tab, "kind", where)
    try:
        if kind == "rademacher":
            return Rademacher()
        if kind == "normal":
            return Normal(_num(tab.get("sigma", 1.0), f"{where}.sigma"))
        if kind == "uniform":
            return CenteredUniform(_num(tab.get("halfwidth", 1.0), f"{where}.halfwidth"))
        if kind == "two_point":
            return TwoPoint(
                _num(_need(tab, "p", where), f"{where}.p"),
                _num(_need(tab, "a", where), f"{where}.a"),
                _num(_need(tab, "b", where), f"{where}.b"),
            )
        if kind == "empirical":
            path = Path(_need(tab, "path", where))
            if base is not None and not path.is_absolute():
                path = base / path
            return EmpiricalSample.from_csv(path, recenter=bool(tab.get("recenter", False)))
        if kind == "density_table":
            return DensityTable(tuple(_need(tab, "xs", where)), tuple(_need(tab, "fs", where)))
    except ConfigError:
        raise
    except (ValueError, OSError, SelfNormError) as e:
        raise ConfigError(f"{where}: {e}") from e
    raise ConfigError(f"{where}.kind: unknown law '{kind}'")


def _parse_groups(tab: dict, base: Path | None) -> tuple[GroupSpec, ...]:
    has_law, has_mix = "law" in tab, "mixture" in tab
    if has_law == has_mix:
        raise ConfigError("cohort: give exactly one of 'law' or 'mixture'")
    if has_law:
        return (GroupSpec(parse_law(tab["law"], "cohort.law", base), 1.0),)
    mix = tab["mixture"]
    if not isinstance(mix, list) or not mix:
        raise ConfigError("cohort.mixture: expected a nonempty array of tables")
    groups = []
    for i, g in enumerate(mix):
        where = f"cohort.mixture[{i}]"
        frac = _num(_need(g, "fraction", where), f"{where}.fraction")
        if not 0 < frac <= 1:
            raise ConfigError(f"{where}.fraction: must lie in (0, 1]")
        groups.append(GroupSpec(parse_law(_need(g, "law", where), f"{where}.law", base), frac))
    if not math.isclose(sum(g.fraction for g in groups), 1.0, abs_tol=1e-9):
        raise ConfigError("cohort.mixture: fractions must sum to 1")
    return tuple(groups)


def _parse_grid(tab: dict) -> tuple[tuple[int, ...], tuple[float, ...], tuple[XRule, ...]]:
    ns = tab.get("n", [])
    if not isinstance(ns, list) or any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in ns):
        raise ConfigError("grid.n: expected an array of positive integers")
    xs = tab.get("x", [])
    if not isinstance(xs, list):
        raise ConfigError("grid.x: expected an array of numbers")
    xs = tuple(_num(v, f"grid.x[{i}]") for i, v in enumerate(xs))
    if any(not v > 0 for v in xs):
        raise ConfigError("grid.x: values must be positive")
    rules = []
    for i, r in enumerate(tab.get("x_rule", [])):
        where = f"grid.x_rule[{i}]"
        rules.append(XRule(_num(_need(r, "c", where), f"{where}.c"), _num(_need(r, "tau", where), f"{where}.tau")))
    if not ns or not (xs or rules):
        raise ConfigError("grid: empty grid (need at least one n and one x or x_rule)")
    return tuple(ns), xs, tuple(rules)


def _parse_profile(tab: dict) -> AssumptionProfile:
    known = set(AssumptionProfile.__dataclass_fields__)
    extra = set(tab) - known
    if extra:
        raise ConfigError(f"profile: unknown field(s) {sorted(extra)}")
    try:
        return AssumptionProfile(**{k: _num(v, f"profile.{k}") for k, v in tab.items()})
    except ValueError as e:
        raise ConfigError(f"profile: {e}") from e


def parse_config(doc: dict, base: Path | None = None) -> ExperimentConfig:
    groups = _parse_groups(_need(doc, "cohort", "config"), base)
    ns, xs, rules = _parse_grid(_need(doc, "grid", "config"))
    formulas = tuple(doc.get("formulas", ["THM31"]))
    bad = [f for f in formulas if f not in FORMULAS]
    if bad:
        raise ConfigError(f"formulas: unknown {bad}; choose from {list(FORMULAS)}")
    try:
        oracle = Oracle(doc.get("oracle", "AUTO"))
    except ValueError:
        raise ConfigError(f"oracle: unknown '{doc.get('oracle')}'") from None
    mct = doc.get("mc", {})
    mc = McSettings(
        int(_num(mct.get("samples", 100_000), "mc.samples")),
        None if "seed" not in mct else int(_num(mct["seed"], "mc.seed")),
        int(_num(mct.get("blocks", 16), "mc.blocks")),
    )
    if mc.samples < 1 or mc.blocks < 1:
        raise ConfigError("mc: samples and blocks must be positive")
    out = doc.get("output", {})
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output.format: expected csv or json, got '{fmt}'")
    return ExperimentConfig(
        groups, ns, xs, rules, formulas, oracle, mc, out.get("path"), fmt,
        _parse_profile(doc.get("profile", {})),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(doc, path.parent)


def parse_law_string(text: str) -> DistributionSpec:
    """Bare kind ("rademacher") or inline-table body ('kind="normal", sigma=2')."""
    if "=" not in text:
        return parse_law(text.strip())
    try:
        doc = tomllib.loads(f"law = {{{text}}}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"--law: {e}") from e
    return parse_law(doc["law"])
