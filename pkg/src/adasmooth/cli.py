"""Command-line front end emitting reproducible CSV artifacts.

Five subcommands cover the workflow end to end: ``estimate`` runs the full
adaptive procedure on one dataset and writes a one-row report, ``select``
stops after the smoothing-level choice and writes rate diagnostics plus a
log-log grid table, ``simulate`` drives the Monte-Carlo benchmark, ``oracle``
tabulates exact smoothed truths for a synthetic sampler, and ``bench-report``
re-aggregates a per-replicate records file.

Configuration is a flat ``key=value`` file with dotted section names; command
line flags override file entries.  Every artifact starts with a schema
version line and a ``# cfg`` block echoing the complete resolved
configuration (defaults filled in, seed explicit), so feeding an artifact
back through ``--config`` reproduces it bit for bit.  All randomness flows
from the single ``seed`` entry through labeled stream derivations.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, derive_seed, read_dataset_csv, three_way_split
from .dgps import (
    BinaryTreatmentDGP,
    DoseResponseDGP,
    ScalarNormalDGP,
    ScalarUniformDGP,
)
from .errors import (
    AdaSmoothError,
    ConfigError,
    EmptySample,
    InvalidAlpha,
    InvalidProportions,
    NonBinaryOutcome,
    SchemaMismatch,
    SplitTooSmall,
    UnsupportedOrder,
)
from .estimator import AdaptiveConfig, _resolve_anchors, estimate_adaptive
from .families import (
    KIND_COUNTERFACTUAL,
    KIND_DENSITY,
    KIND_DOSE_RESPONSE,
    KINDS,
    SmoothedFamily,
    default_feasible_max,
    fit_nuisance,
)
from .kernels import kernel_by_name
from .oracle import truth_bundle
from .selector import (
    AnchorConfig,
    estimate_rates,
    finite_diff_b_prime,
    finite_diff_sigma_prime,
    select_smoothing,
    sigma_hat,
)
from .sim import SelectorSpec, _jackknife_se, run_benchmark

__all__ = ["RunConfig", "SCHEMA_VERSION", "main", "parse_config", "run"]

SCHEMA_VERSION = "1.0"
_SCHEMA_MAJOR = 1

_COMMANDS = ("estimate", "select", "simulate", "oracle", "bench-report")

_DGP_NAMES = ("dose_smooth", "dose_cusp", "scalar_normal", "scalar_uniform", "binary")

# keys accepted per command; anything else is rejected by name
_COMMON_KEYS = frozenset({"command", "seed", "output", "workers"})
_MODEL_KEYS = frozenset(
    {
        "family",
        "x",
        "a0",
        "epsilon",
        "alpha",
        "p1",
        "p2",
        "kernel",
        "kernel.order",
        "anchors",
        "anchors.delta1",
        "anchors.delta2",
        "anchors.delta3",
        "anchors.gap",
        "grid.min",
        "grid.max",
        "grid.points",
        "feasible_max",
    }
)
_DGP_KEYS = frozenset({"dgp", "dgp.mean", "dgp.sd", "dgp.low", "dgp.high"})
_ALLOWED_KEYS = {
    "estimate": _COMMON_KEYS | _MODEL_KEYS | _DGP_KEYS | {"input", "n"},
    "select": _COMMON_KEYS | _MODEL_KEYS | _DGP_KEYS | {"input", "n"},
    "simulate": _COMMON_KEYS
    | _DGP_KEYS
    | {
        "selectors",
        "n_list",
        "reps",
        "alpha",
        "p1",
        "p2",
        "kernel",
        "kernel.order",
        "x",
        "a0",
        "records",
    },
    "oracle": _COMMON_KEYS | _DGP_KEYS | {"deltas", "mc", "kernel", "kernel.order", "x", "a0"},
    "bench-report": _COMMON_KEYS | {"input"},
}

_INT_KEYS = frozenset({"seed", "workers", "n", "reps", "kernel.order", "grid.points", "mc"})
_FLOAT_KEYS = frozenset(
    {
        "x",
        "a0",
        "epsilon",
        "alpha",
        "p1",
        "p2",
        "anchors.delta1",
        "anchors.delta2",
        "anchors.delta3",
        "anchors.gap",
        "grid.min",
        "grid.max",
        "feasible_max",
        "dgp.mean",
        "dgp.sd",
        "dgp.low",
        "dgp.high",
    }
)

# family implied by each synthetic sampler
_DGP_FAMILY = {
    "dose_smooth": KIND_DOSE_RESPONSE,
    "dose_cusp": KIND_DOSE_RESPONSE,
    "binary": KIND_COUNTERFACTUAL,
    "scalar_normal": KIND_DENSITY,
    "scalar_uniform": KIND_DENSITY,
}


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if not np.isfinite(value):
        raise ConfigError(f"{key}: expected a finite number, got {raw!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration for one CLI run.

    ``entries`` maps every applicable key to its canonical string form
    (numbers re-serialized via ``repr``), so two configs that resolve to the
    same run compare equal and echo identical headers.
    """

    command: str
    entries: dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.entries.get(key, default)

    def require(self, key: str) -> str:
        try:
            return self.entries[key]
        except KeyError:
            raise ConfigError(f"missing required key {key!r} for command {self.command!r}") from None

    def get_int(self, key: str) -> int:
        return _parse_int(key, self.require(key))

    def get_float(self, key: str) -> float:
        return _parse_float(key, self.require(key))

    def header_lines(self) -> list[str]:
        """The ``# cfg`` block: every resolved entry, sorted by key."""
        return [f"# cfg {key}={value}" for key, value in sorted(self.entries.items())]


def _check_artifact_version(first_line: str, where: str) -> None:
    tag = first_line.removeprefix("# adasmooth-csv").strip()
    parts = tag.split(".")
    try:
        major = int(parts[0])
    except (IndexError, ValueError):
        raise SchemaMismatch(f"{where}: malformed schema version line {first_line!r}") from None
    if major != _SCHEMA_MAJOR:
        raise SchemaMismatch(
            f"{where}: schema version {tag} is unsupported (this reader handles major {_SCHEMA_MAJOR})"
        )


def _read_config_file(path: str) -> dict[str, str]:
    """Read a plain key=value config, or recover the ``# cfg`` block from an artifact."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    lines = text.splitlines()
    entries: dict[str, str] = {}
    if lines and lines[0].startswith("# adasmooth-csv"):
        _check_artifact_version(lines[0], path)
        for line in lines[1:]:
            if not line.startswith("# cfg "):
                continue
            body = line[len("# cfg ") :]
            key, sep, value = body.partition("=")
            if not sep:
                raise ConfigError(f"{path}: malformed cfg line {line!r}")
            entries[key.strip()] = value.strip()
        return entries
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        entries[key.strip()] = value.strip()
    return entries


def _canonical_selectors(raw: str) -> str:
    tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not tokens:
        raise ConfigError("selectors: expected at least one selector token")
    canon: list[str] = []
    for tok in tokens:
        if tok in ("adaptive", "oracle"):
            canon.append(tok)
        elif tok.startswith("fixed:"):
            parts = tok.split(":")
            if len(parts) != 3:
                raise ConfigError(f"selectors: fixed selector must be fixed:C:R, got {tok!r}")
            c = _parse_float("selectors", parts[1])
            r = _parse_float("selectors", parts[2])
            if c <= 0 or r <= 0:
                raise ConfigError(f"selectors: fixed:C:R needs C > 0 and R > 0, got {tok!r}")
            canon.append(f"fixed:{c!r}:{r!r}")
        else:
            raise ConfigError(
                f"selectors: unknown token {tok!r} (use adaptive, oracle, or fixed:C:R)"
            )
    dupes = {t for t in canon if canon.count(t) > 1}
    if dupes:
        raise ConfigError(f"selectors: duplicate selector {sorted(dupes)[0]!r}")
    return ",".join(canon)


def _canonical_int_list(key: str, raw: str) -> str:
    tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not tokens:
        raise ConfigError(f"{key}: expected a comma-separated list of integers")
    return ",".join(str(_parse_int(key, tok)) for tok in tokens)


def _canonical_float_list(key: str, raw: str) -> str:
    tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not tokens:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers")
    values = [_parse_float(key, tok) for tok in tokens]
    return ",".join(repr(v) for v in values)


def _records_default(output: str) -> str:
    path = Path(output)
    if path.suffix == ".csv":
        return str(path.with_name(path.stem + "-records.csv"))
    return str(path) + "-records.csv"


def _base_defaults(command: str) -> dict[str, str]:
    defaults = {
        "command": command,
        "seed": "0",
        "workers": "1",
        "output": f"adasmooth-{command}.csv",
    }
    if command in ("estimate", "select"):
        defaults.update(
            {
                "epsilon": repr(0.05),
                "alpha": repr(0.05),
                "p1": repr(0.25),
                "p2": repr(0.5),
                "kernel": "epanechnikov",
                "kernel.order": "2",
                "anchors": "auto",
                "grid.points": "10",
            }
        )
    elif command == "simulate":
        defaults.update(
            {
                "dgp": "dose_smooth",
                "selectors": "adaptive",
                "n_list": "3162,10000,31623",
                "reps": "100",
                "alpha": repr(0.05),
                "p1": repr(0.25),
                "p2": repr(0.5),
                "kernel": "epanechnikov",
                "kernel.order": "2",
            }
        )
    elif command == "oracle":
        defaults.update(
            {
                "dgp": "dose_smooth",
                "mc": "1000000",
                "kernel": "epanechnikov",
                "kernel.order": "2",
            }
        )
    return defaults


def _canonicalize(command: str, entries: dict[str, str]) -> dict[str, str]:
    canon: dict[str, str] = {}
    for key, raw in entries.items():
        if key in _INT_KEYS:
            canon[key] = str(_parse_int(key, raw))
        elif key in _FLOAT_KEYS:
            canon[key] = repr(_parse_float(key, raw))
        elif key == "selectors":
            canon[key] = _canonical_selectors(raw)
        elif key == "n_list":
            canon[key] = _canonical_int_list(key, raw)
        elif key == "deltas":
            canon[key] = _canonical_float_list(key, raw)
        else:
            canon[key] = raw
    return canon


def _validate(command: str, e: dict[str, str]) -> None:
    if "family" in e and e["family"] not in KINDS:
        raise ConfigError(f"family: unknown family {e['family']!r} (choose from {list(KINDS)})")
    if "dgp" in e and e["dgp"] not in _DGP_NAMES:
        raise ConfigError(f"dgp: unknown sampler {e['dgp']!r} (choose from {list(_DGP_NAMES)})")
    if "anchors" in e and e["anchors"] not in ("auto", "default", "explicit"):
        raise ConfigError(
            f"anchors: expected auto, default, or explicit, got {e['anchors']!r}"
        )
    if "p1" in e or "p2" in e:
        p1 = _parse_float("p1", e["p1"])
        p2 = _parse_float("p2", e["p2"])
        if not 0.0 < p1 < p2 < 1.0:
            raise ConfigError(f"split proportions need 0 < p1 < p2 < 1, got p1={p1:g}, p2={p2:g}")
    if "epsilon" in e and _parse_float("epsilon", e["epsilon"]) <= 0:
        raise ConfigError(f"epsilon: expected a positive width offset, got {e['epsilon']}")
    if "alpha" in e:
        alpha = _parse_float("alpha", e["alpha"])
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha: expected a level strictly inside (0, 1), got {alpha:g}")
    if "seed" in e and _parse_int("seed", e["seed"]) < 0:
        raise ConfigError(f"seed: expected a non-negative integer, got {e['seed']}")
    if "workers" in e and _parse_int("workers", e["workers"]) < 1:
        raise ConfigError(f"workers: expected at least 1, got {e['workers']}")
    if "n" in e and _parse_int("n", e["n"]) < 6:
        raise ConfigError(f"n: need at least 6 rows to split three ways, got {e['n']}")
    if "reps" in e and _parse_int("reps", e["reps"]) < 2:
        raise ConfigError(f"reps: need at least 2 replicates, got {e['reps']}")
    if "mc" in e and _parse_int("mc", e["mc"]) < 2:
        raise ConfigError(f"mc: need at least 2 Monte-Carlo draws, got {e['mc']}")
    if "grid.points" in e and _parse_int("grid.points", e["grid.points"]) < 2:
        raise ConfigError(f"grid.points: need at least 2 grid points, got {e['grid.points']}")
    if "kernel.order" in e:
        order = _parse_int("kernel.order", e["kernel.order"])
        if order < 2 or order % 2 != 0:
            raise ConfigError(f"kernel.order: expected an even order >= 2, got {order}")
    for key in ("anchors.delta1", "anchors.delta2", "anchors.delta3", "anchors.gap",
                "grid.min", "grid.max", "feasible_max"):
        if key in e and _parse_float(key, e[key]) <= 0:
            raise ConfigError(f"{key}: expected a positive value, got {e[key]}")
    if "n_list" in e:
        sizes = [int(tok) for tok in e["n_list"].split(",")]
        if any(n < 6 for n in sizes):
            raise ConfigError(f"n_list: every sample size must be at least 6, got {e['n_list']}")
    if "deltas" in e:
        values = [float(tok) for tok in e["deltas"].split(",")]
        if any(v <= 0 for v in values):
            raise ConfigError(f"deltas: every smoothing level must be positive, got {e['deltas']}")
    for key, dgp_name in (
        ("dgp.mean", "scalar_normal"),
        ("dgp.sd", "scalar_normal"),
        ("dgp.low", "scalar_uniform"),
        ("dgp.high", "scalar_uniform"),
    ):
        if key in e and e.get("dgp") != dgp_name:
            raise ConfigError(f"{key}: only meaningful when dgp={dgp_name}")
    if "dgp.sd" in e and _parse_float("dgp.sd", e["dgp.sd"]) <= 0:
        raise ConfigError(f"dgp.sd: expected a positive spread, got {e['dgp.sd']}")

    anchor_deltas = [k for k in ("anchors.delta1", "anchors.delta2", "anchors.delta3") if k in e]
    if anchor_deltas and len(anchor_deltas) != 3:
        raise ConfigError("explicit anchors need all of anchors.delta1, anchors.delta2, anchors.delta3")
    if e.get("anchors") == "explicit" and not anchor_deltas:
        raise ConfigError("anchors=explicit needs anchors.delta1/2/3 values")

    if command in ("estimate", "select"):
        family = e["family"]
        if "input" not in e and "dgp" not in e:
            raise ConfigError(f"{command} needs either input=<csv path> or dgp=<sampler name>")
        if "input" in e and "dgp" in e:
            raise ConfigError("input and dgp are mutually exclusive: give data or a sampler, not both")
        if "dgp" in e:
            if "n" not in e:
                raise ConfigError("sampling from a dgp needs n=<sample size>")
            implied = _DGP_FAMILY[e["dgp"]]
            if family != implied:
                raise ConfigError(
                    f"family {family!r} does not match dgp {e['dgp']!r} (which yields {implied!r})"
                )
        elif "n" in e:
            raise ConfigError("n: only meaningful when sampling from a dgp")
        if family != KIND_DENSITY and "x" in e:
            raise ConfigError("x: only meaningful for the density family")
        if family != KIND_DOSE_RESPONSE and "a0" in e:
            raise ConfigError("a0: only meaningful for the dose-response family")
        if family in (KIND_COUNTERFACTUAL, KIND_DOSE_RESPONSE) and "dgp" not in e:
            raise ConfigError(
                f"family {family!r} needs a known propensity, so it requires dgp= rather than input="
            )
    if command in ("simulate", "oracle"):
        target_family = _DGP_FAMILY[e["dgp"]]
        if "x" in e and target_family != KIND_DENSITY:
            raise ConfigError("x: only meaningful for density-family samplers")
        if "a0" in e and target_family != KIND_DOSE_RESPONSE:
            raise ConfigError("a0: only meaningful for dose-response samplers")
    if command == "oracle" and "deltas" not in e:
        raise ConfigError("oracle needs deltas=<comma-separated smoothing levels>")
    if command == "bench-report" and "input" not in e:
        raise ConfigError("bench-report needs input=<records csv path>")


def parse_config(
    command: str,
    config_path: str | None = None,
    overrides: dict[str, str] | None = None,
) -> RunConfig:
    """Merge file entries and flag overrides into a validated :class:`RunConfig`.

    Flags win over file entries; unrecognized keys are rejected by name; every
    default the run will use is filled in so the artifact header is complete.
    """
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r} (choose from {list(_COMMANDS)})")
    entries: dict[str, str] = {}
    if config_path is not None:
        entries.update(_read_config_file(config_path))
    if overrides:
        entries.update({k: v for k, v in overrides.items() if v is not None})
    entries["command"] = command

    allowed = _ALLOWED_KEYS[command]
    unknown = sorted(set(entries) - allowed)
    if unknown:
        noun = "key" if len(unknown) == 1 else "keys"
        raise ConfigError(
            f"unknown configuration {noun} for command {command!r}: {', '.join(unknown)}"
        )
    if "x" in entries and "a0" in entries:
        raise ConfigError(
            "x and a0 are mutually exclusive: x targets a density point, a0 an exposure"
        )

    merged = _base_defaults(command)
    merged.update(_canonicalize(command, entries))

    # keys whose defaults depend on other keys are resolved after the merge
    if command in ("estimate", "select"):
        if "family" not in merged:
            merged["family"] = _DGP_FAMILY.get(merged.get("dgp", ""), KIND_DENSITY)
        if merged["family"] == KIND_DENSITY:
            merged.setdefault("x", repr(0.0))
        if merged["family"] == KIND_DOSE_RESPONSE:
            merged.setdefault("a0", repr(0.15))
        if any(k in merged for k in ("anchors.delta1", "anchors.delta2", "anchors.delta3")):
            merged["anchors"] = "explicit"
    if command in ("simulate", "oracle"):
        implied = _DGP_FAMILY[merged["dgp"]]
        if implied == KIND_DENSITY:
            merged.setdefault("x", repr(0.0))
        if implied == KIND_DOSE_RESPONSE:
            merged.setdefault("a0", repr(0.15))
        if merged["dgp"] == "scalar_normal":
            merged.setdefault("dgp.mean", repr(0.0))
            merged.setdefault("dgp.sd", repr(1.0))
        if merged["dgp"] == "scalar_uniform":
            merged.setdefault("dgp.low", repr(0.0))
            merged.setdefault("dgp.high", repr(1.0))
    if command == "simulate":
        merged.setdefault("records", _records_default(merged["output"]))

    _validate(command, merged)
    return RunConfig(command=command, entries=merged)


# ---------------------------------------------------------------------------
# artifact writing


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_artifact(
    path: str,
    config: RunConfig,
    columns: tuple[str, ...],
    rows: list[tuple],
    out_lines: tuple[str, ...] = (),
) -> None:
    buf = io.StringIO()
    buf.write(f"# adasmooth-csv {SCHEMA_VERSION}\n")
    for line in config.header_lines():
        buf.write(line + "\n")
    for line in out_lines:
        buf.write(f"# out {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# shared run-time builders


def _build_kernel(config: RunConfig):
    return kernel_by_name(config.require("kernel"), order=config.get_int("kernel.order"))


def _build_dgp(config: RunConfig):
    name = config.require("dgp")
    if name == "dose_smooth":
        return DoseResponseDGP(variant="smooth")
    if name == "dose_cusp":
        return DoseResponseDGP(variant="cusp")
    if name == "binary":
        return BinaryTreatmentDGP()
    if name == "scalar_normal":
        return ScalarNormalDGP(
            mean=_parse_float("dgp.mean", config.get("dgp.mean", "0.0")),
            sd=_parse_float("dgp.sd", config.get("dgp.sd", "1.0")),
        )
    return ScalarUniformDGP(
        low=_parse_float("dgp.low", config.get("dgp.low", "0.0")),
        high=_parse_float("dgp.high", config.get("dgp.high", "1.0")),
    )


def _build_family(config: RunConfig, dgp) -> SmoothedFamily:
    kernel = _build_kernel(config)
    family = config.get("family") or _DGP_FAMILY[config.require("dgp")]
    if family == KIND_DENSITY:
        return SmoothedFamily(KIND_DENSITY, target_point=config.get_float("x"), kernel=kernel)
    if family == KIND_COUNTERFACTUAL:
        return SmoothedFamily(KIND_COUNTERFACTUAL, propensity=dgp.propensity)
    return SmoothedFamily(
        KIND_DOSE_RESPONSE,
        target_point=config.get_float("a0"),
        kernel=kernel,
        propensity=dgp.propensity,
    )


def _load_data(config: RunConfig, dgp) -> Dataset:
    path = config.get("input")
    if path is not None:
        return read_dataset_csv(path)
    return dgp.sample(config.get_int("n"), seed=(config.get_int("seed"), "cli-sample"))


def _shuffle_seed(config: RunConfig) -> int:
    word = derive_seed(config.get_int("seed"), "cli-shuffle").generate_state(1, np.uint64)[0]
    return int(word)


def _adaptive_config(config: RunConfig, data_n: int) -> AdaptiveConfig:
    anchors: object = config.require("anchors")
    if anchors == "explicit":
        p1 = config.get_float("p1")
        p2 = config.get_float("p2")
        n2 = int(np.floor(data_n * p2)) - int(np.floor(data_n * p1))
        delta2 = config.get_float("anchors.delta2")
        gap_raw = config.get("anchors.gap")
        gap = (
            _parse_float("anchors.gap", gap_raw)
            if gap_raw is not None
            else min(max(n2, 1) ** -0.25, delta2 / 2.0)
        )
        anchors = AnchorConfig(
            delta1=config.get_float("anchors.delta1"),
            delta2=delta2,
            delta3=config.get_float("anchors.delta3"),
            gap=gap,
        )
    fm = config.get("feasible_max")
    gmin = config.get("grid.min")
    gmax = config.get("grid.max")
    return AdaptiveConfig(
        p1=config.get_float("p1"),
        p2=config.get_float("p2"),
        shuffle_seed=_shuffle_seed(config),
        epsilon=config.get_float("epsilon"),
        alpha=config.get_float("alpha"),
        anchors=anchors,
        grid_min=None if gmin is None else _parse_float("grid.min", gmin),
        grid_max=None if gmax is None else _parse_float("grid.max", gmax),
        grid_points=config.get_int("grid.points"),
        feasible_max=None if fm is None else _parse_float("feasible_max", fm),
    )


# ---------------------------------------------------------------------------
# command runners

_ESTIMATE_COLUMNS = (
    "point",
    "point_at_delta_zero",
    "ci_low",
    "ci_high",
    "alt_ci_low",
    "alt_ci_high",
    "alpha",
    "r_hat",
    "c_hat",
    "epsilon",
    "m",
    "delta_eps",
    "delta_zero",
    "beta_hat",
    "gamma_hat",
    "nu_hat",
    "c_bprime",
    "c_sigma",
    "c_sigmaprime",
    "anchor_delta1",
    "anchor_delta2",
    "anchor_delta3",
    "anchor_gap",
    "se_scale",
    "anchor_source",
    "bprime_sign_flip",
    "sigmaprime_sign_flip",
    "delta_clamped",
    "nuisance_degenerate",
)


def _run_estimate(config: RunConfig) -> None:
    dgp = _build_dgp(config) if config.get("dgp") is not None else None
    family = _build_family(config, dgp)
    data = _load_data(config, dgp)
    report = estimate_adaptive(data, family, _adaptive_config(config, data.n))
    sel, rates, diag = report.selection, report.rates, report.diagnostics
    row = (
        report.point,
        report.point_at_delta_zero,
        report.ci_low,
        report.ci_high,
        report.alt_ci_low,
        report.alt_ci_high,
        report.alpha,
        sel.r_hat,
        sel.c_hat,
        sel.epsilon,
        sel.m,
        sel.delta_eps,
        sel.delta_zero,
        rates.beta_hat,
        rates.gamma_hat,
        rates.nu_hat,
        rates.c_bprime,
        rates.c_sigma,
        rates.c_sigmaprime,
        rates.anchors.delta1,
        rates.anchors.delta2,
        rates.anchors.delta3,
        rates.anchors.gap,
        report.se_scale,
        diag.anchor_source,
        diag.bprime_sign_flip,
        diag.sigmaprime_sign_flip,
        diag.delta_clamped,
        diag.nuisance_degenerate,
    )
    _write_artifact(config.require("output"), config, _ESTIMATE_COLUMNS, [row])


_SELECT_COLUMNS = ("delta", "bprime_hat", "sigma_hat", "sigmaprime_hat")


def _run_select(config: RunConfig) -> None:
    """Diagnostics only: anchors, rate fits, selection, and a log-log grid table."""
    dgp = _build_dgp(config) if config.get("dgp") is not None else None
    family = _build_family(config, dgp)
    data = _load_data(config, dgp)
    adaptive = _adaptive_config(config, data.n)

    plan = three_way_split(data.n, adaptive.p1, adaptive.p2, adaptive.shuffle_seed)
    fit1 = fit_nuisance(family, data, plan.s1)
    feasible_max = (
        adaptive.feasible_max
        if adaptive.feasible_max is not None
        else default_feasible_max(family, data)
    )
    anchors, anchor_source = _resolve_anchors(
        family, fit1, data, plan.s2, adaptive, data.n, plan.s1.size,
        plan.s1.size + plan.s2.size, feasible_max,
    )
    rates = estimate_rates(family, fit1, data, plan.s2, anchors)
    selection = select_smoothing(
        rates, m=plan.s3.size, epsilon=adaptive.epsilon, feasible_max=feasible_max
    )

    grid_min = adaptive.grid_min if adaptive.grid_min is not None else feasible_max / 4.0
    grid_max = adaptive.grid_max if adaptive.grid_max is not None else feasible_max
    grid = np.geomspace(grid_min, grid_max, adaptive.grid_points)
    gap_base = plan.s2.size ** -0.25
    rows = []
    for delta in grid:
        gap = min(gap_base, delta / 2.0)
        rows.append(
            (
                float(delta),
                finite_diff_b_prime(family, fit1, data, plan.s2, float(delta), gap),
                sigma_hat(family, fit1, data, plan.s2, float(delta)),
                finite_diff_sigma_prime(family, fit1, data, plan.s2, float(delta), gap),
            )
        )
    out_lines = (
        f"anchor_source={anchor_source}",
        f"anchor_delta1={rates.anchors.delta1!r}",
        f"anchor_delta2={rates.anchors.delta2!r}",
        f"anchor_delta3={rates.anchors.delta3!r}",
        f"anchor_gap={rates.anchors.gap!r}",
        f"beta_hat={rates.beta_hat!r}",
        f"gamma_hat={rates.gamma_hat!r}",
        f"nu_hat={rates.nu_hat!r}",
        f"c_bprime={rates.c_bprime!r}",
        f"c_sigma={rates.c_sigma!r}",
        f"c_sigmaprime={rates.c_sigmaprime!r}",
        f"r_hat={selection.r_hat!r}",
        f"c_hat={selection.c_hat!r}",
        f"m={selection.m}",
        f"delta_eps={selection.delta_eps!r}",
        f"delta_zero={selection.delta_zero!r}",
        f"feasible_max={feasible_max!r}",
    )
    _write_artifact(config.require("output"), config, _SELECT_COLUMNS, rows, out_lines)


_ROW_COLUMNS = (
    "selector",
    "n",
    "replicates",
    "mse",
    "mse_se",
    "coverage",
    "mean_delta",
    "mean_r_hat",
)
_RECORD_COLUMNS = (
    "selector",
    "n",
    "rep",
    "ok",
    "error",
    "delta",
    "r_hat",
    "estimate",
    "sqerr",
    "covered",
    "covered_alt",
)


def _selector_specs(config: RunConfig) -> list[SelectorSpec]:
    specs: list[SelectorSpec] = []
    for token in config.require("selectors").split(","):
        if token == "adaptive":
            specs.append(SelectorSpec(kind="adaptive"))
        elif token == "oracle":
            specs.append(SelectorSpec(kind="oracle_grid"))
        else:
            _, c_raw, r_raw = token.split(":")
            specs.append(SelectorSpec(kind="fixed_rate", c=float(c_raw), r=float(r_raw)))
    return specs


def _run_simulate(config: RunConfig) -> None:
    dgp = _build_dgp(config)
    family = _build_family(config, dgp)
    table = run_benchmark(
        dgp,
        _selector_specs(config),
        n_list=[int(tok) for tok in config.require("n_list").split(",")],
        reps=config.get_int("reps"),
        alpha=config.get_float("alpha"),
        seed=config.get_int("seed"),
        family=family,
        workers=config.get_int("workers"),
        p1=config.get_float("p1"),
        p2=config.get_float("p2"),
    )
    rows = [
        (r.selector, r.n, r.replicates, r.mse, r.mse_se, r.coverage, r.mean_delta, r.mean_r_hat)
        for r in table.rows
    ]
    records_path = config.require("records")
    out_lines = [f"true_psi={table.true_psi!r}", f"records={records_path}"]
    for (selector, n), count in sorted(table.failure_counts().items()):
        out_lines.append(f"failures {count} replicate(s) failed for {selector} at n={n}")
    _write_artifact(config.require("output"), config, _ROW_COLUMNS, rows, tuple(out_lines))

    record_rows = [
        (
            rec.selector,
            rec.n,
            rec.rep,
            rec.ok,
            rec.error,
            rec.delta,
            rec.r_hat,
            rec.estimate,
            rec.sqerr,
            rec.covered,
            rec.covered_alt,
        )
        for rec in table.records
    ]
    _write_artifact(
        records_path,
        config,
        _RECORD_COLUMNS,
        record_rows,
        (f"true_psi={table.true_psi!r}",),
    )


_ORACLE_COLUMNS = ("delta", "psi_delta", "b0", "sigma_inf", "se_sigma")


def _run_oracle(config: RunConfig) -> None:
    dgp = _build_dgp(config)
    implied = _DGP_FAMILY[config.require("dgp")]
    if implied == KIND_DENSITY:
        target = config.get_float("x")
    elif implied == KIND_DOSE_RESPONSE:
        target = config.get_float("a0")
    else:
        target = None
    deltas = [float(tok) for tok in config.require("deltas").split(",")]
    bundle = truth_bundle(
        dgp,
        deltas,
        target_point=target,
        kernel=_build_kernel(config),
        mc_size=config.get_int("mc"),
        seed=config.get_int("seed"),
    )
    rows = [(s.delta, s.psi_delta, s.b0, s.sigma_inf, s.se_sigma) for s in bundle.smoothed]
    out_lines = (f"psi_true={bundle.psi_true!r}", f"mc_size={bundle.mc_size}")
    _write_artifact(config.require("output"), config, _ORACLE_COLUMNS, rows, out_lines)


_REPORT_COLUMNS = (
    "selector",
    "n",
    "replicates",
    "failures",
    "mse",
    "mse_se",
    "coverage",
    "coverage_alt",
    "mean_delta",
    "mean_r_hat",
)


def _read_records_csv(path: str) -> list[dict[str, str]]:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"records file not found: {path}") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# adasmooth-csv"):
        raise SchemaMismatch(f"{path}: missing schema version line")
    _check_artifact_version(lines[0], path)
    body = [line for line in lines[1:] if line and not line.startswith("#")]
    if not body:
        raise SchemaMismatch(f"{path}: no table found")
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader)
    missing = [c for c in _RECORD_COLUMNS if c not in header]
    if missing:
        raise SchemaMismatch(f"{path}: not a records table, missing column(s) {', '.join(missing)}")
    idx = {name: header.index(name) for name in _RECORD_COLUMNS}
    out = []
    for row in reader:
        if len(row) != len(header):
            raise SchemaMismatch(f"{path}: row of width {len(row)} does not match header")
        out.append({name: row[i] for name, i in idx.items()})
    return out


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def _run_bench_report(config: RunConfig) -> None:
    """Re-aggregate a per-replicate records file into a summary table."""
    records = _read_records_csv(config.require("input"))
    cells: dict[tuple[str, str], list[dict[str, str]]] = {}
    order: list[tuple[str, str]] = []
    for rec in records:
        key = (rec["selector"], rec["n"])
        if key not in cells:
            cells[key] = []
            order.append(key)
        cells[key].append(rec)
    rows = []
    for selector, n in order:
        recs = cells[(selector, n)]
        ok = [r for r in recs if r["ok"] == "true"]
        failures = len(recs) - len(ok)
        sqerr = [float(r["sqerr"]) for r in ok if r["sqerr"]]
        covered = [float(r["covered"]) for r in ok if r["covered"]]
        covered_alt = [float(r["covered_alt"]) for r in ok if r["covered_alt"]]
        deltas = [float(r["delta"]) for r in ok if r["delta"]]
        r_hats = [float(r["r_hat"]) for r in ok if r["r_hat"]]
        mse_se = None
        if len(sqerr) >= 2:
            arr = np.asarray(sqerr, dtype=float)
            loo = (arr.sum() - arr) / (arr.size - 1)
            mse_se = _jackknife_se(loo)
        rows.append(
            (
                selector,
                int(n),
                len(ok),
                failures,
                _mean_or_none(sqerr),
                mse_se,
                _mean_or_none(covered),
                _mean_or_none(covered_alt),
                _mean_or_none(deltas),
                _mean_or_none(r_hats),
            )
        )
    _write_artifact(config.require("output"), config, _REPORT_COLUMNS, rows)


_RUNNERS = {
    "estimate": _run_estimate,
    "select": _run_select,
    "simulate": _run_simulate,
    "oracle": _run_oracle,
    "bench-report": _run_bench_report,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated config to its command runner; 0 on success."""
    _RUNNERS[config.command](config)
    return 0


# ---------------------------------------------------------------------------
# argument parsing and exit-code mapping

_CONFIG_ERROR_TYPES = (ConfigError, InvalidProportions, InvalidAlpha, UnsupportedOrder)
_DATA_ERROR_TYPES = (SchemaMismatch, EmptySample, NonBinaryOutcome, SplitTooSmall)


def _exit_code(err: AdaSmoothError) -> int:
    if isinstance(err, _CONFIG_ERROR_TYPES):
        return 2
    if isinstance(err, _DATA_ERROR_TYPES):
        return 3
    return 4


def _error_label(err: Exception) -> str:
    stage = getattr(err, "stage", None)
    if stage:
        return str(stage)
    if isinstance(err, _CONFIG_ERROR_TYPES):
        return "config"
    if isinstance(err, (FileNotFoundError, OSError) + _DATA_ERROR_TYPES):
        return "data"
    return type(err).__name__


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adasmooth",
        description="Adaptive smoothing-level selection: estimation, diagnostics, and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "estimate": "run the adaptive estimator on one dataset and write a one-row report",
        "select": "write selection diagnostics: anchors, rate fits, and a log-log grid table",
        "simulate": "run the Monte-Carlo benchmark and write summary plus per-replicate tables",
        "oracle": "tabulate exact smoothed truths for a synthetic sampler",
        "bench-report": "re-aggregate a per-replicate records file into a summary table",
    }
    for command in _COMMANDS:
        sp = sub.add_parser(command, help=helps[command])
        sp.add_argument("--config", help="key=value config file, or a previously emitted artifact")
        sp.add_argument("--input", help="input CSV path")
        sp.add_argument("--output", help="output CSV path")
        sp.add_argument("--seed", help="root seed (non-negative integer)")
        sp.add_argument("--workers", help="process count for replicate-level parallelism")
        sp.add_argument("--family", help="density_at_point, counterfactual_mean, or dose_response")
        target = sp.add_mutually_exclusive_group()
        target.add_argument("--x", help="density evaluation point")
        target.add_argument("--a0", help="exposure evaluation point")
        sp.add_argument("--epsilon", help="selection width offset")
        sp.add_argument("--alpha", help="interval miscoverage level")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Console entry point; returns the process exit code."""
    ns = _build_parser().parse_args(argv)
    overrides = {
        "input": ns.input,
        "output": ns.output,
        "seed": ns.seed,
        "workers": ns.workers,
        "family": ns.family,
        "x": ns.x,
        "a0": ns.a0,
        "epsilon": ns.epsilon,
        "alpha": ns.alpha,
    }
    try:
        config = parse_config(ns.command, ns.config, overrides)
        return run(config)
    except AdaSmoothError as err:
        label = _error_label(err)
        message = str(err)
        prefix = "" if message.startswith(f"[{label}]") else f"[{label}] "
        print(f"error: {prefix}{message}", file=sys.stderr)
        return _exit_code(err)
    except (FileNotFoundError, OSError) as err:
        print(f"error: [data] {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
