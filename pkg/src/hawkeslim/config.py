"""Experiment configuration: a small sectioned key-value schema.

Two encodings of the same schema are accepted: INI (sections of key = value
pairs, dotted keys inside sections) and JSON (an object whose members are
the sections).  The schema is versioned; ``schema_version`` must appear in
the ``config`` section.

Sections and keys (* = required):

``[config]``
    schema_version*          must equal "hawkeslim.config.v1"

``[model]``
    builtin                  name from the built-in registry (see
                             ``hawkeslim list-models``); excludes kernel.*
                             and phi.* keys
    kernel.kind              exponential | constant | zero | polynomial | table
    kernel.beta, kernel.scale        (exponential; scale default 1.0)
    kernel.value                     (constant)
    kernel.coeffs, kernel.cutoff     (polynomial; coeffs comma-separated,
                                     increasing degree)
    kernel.knots, kernel.values      (table; comma-separated, knots from 0)
    phi.kind                 linear | constant | tanh | table
    phi.nu, phi.slope                (linear; slope default 1.0)
    phi.level                        (constant)
    phi.base, phi.scale, phi.rate    (tanh; scale/rate default 1.0)
    phi.knots, phi.values            (table)
    horizon*                 positive real

``[experiment]``
    kind*                    lln | clt | ldp | mdp | mean-field-equivalence |
                             rate-minimize
    epsilon                  comma-separated list (required for lln, clt,
                             ldp, mdp)
    n_nodes                  comma-separated ints (required for
                             mean-field-equivalence)
    replicas                 default 1000; clt requires >= 1000
    probe_times              comma-separated; default T/4, T/2, T where used
    a_eps_exponent           a(eps) = prefactor * eps**exponent (required
                             for mdp; exponent in (0, 1/2))
    a_eps_prefactor          default 1.0
    x                        target level (required for ldp, mdp,
                             rate-minimize)
    tail_method              auto | exact | plain | importance
                             (default auto: exact when the model has no
                             effective excitation, else importance)
    functional               I | J (rate-minimize; default I)
    constraint               endpoint-equal | endpoint-at-least | tube
                             (rate-minimize; default endpoint-equal)
    tube_radius              required when constraint = tube
    optimizer_n              segment count for minimize_rate (default 256)
    grid_n                   limit-solver grid (default 2048)
    max_events               per-replica event cap (default 10000000)

``[output]``
    seed*                    integer; no wall-clock seeding
    directory                default "out"; HAWKESLIM_OUTPUT_DIR overrides
    formats                  subset of csv,json,svg (default all)
    include_timestamp        default false; when false SVG output carries
                             no timestamp comment
    workers                  default logical-core count; HAWKESLIM_WORKERS
                             overrides

``[thresholds]``  (pass/fail knobs; defaults in DEFAULT_THRESHOLDS)
    lln.decrease_slack       1.0    medians must satisfy m[i+1] < slack*m[i]
    clt.ks_alpha             0.01   KS test level
    clt.cov_rel_err_max      0.05   covariance relative error at smallest eps
    ldp.gap_max              0.15   |eps log p + I*| at smallest eps
    mdp.gap_max              0.1    |scaled log p + J*| at smallest eps
    mfe.ks_alpha             0.01   two-sample KS level
    rate.gtol                1e-8   projected-gradient norm target
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError
from .model import (
    IntensityFn,
    Kernel,
    builtin_models,
    constant_intensity,
    constant_kernel,
    exponential_kernel,
    linear_intensity,
    polynomial_kernel,
    table_intensity,
    table_kernel,
    tanh_intensity,
    zero_kernel,
)

CONFIG_SCHEMA_VERSION = "hawkeslim.config.v1"

EXPERIMENT_KINDS = (
    "lln",
    "clt",
    "ldp",
    "mdp",
    "mean-field-equivalence",
    "rate-minimize",
)

DEFAULT_THRESHOLDS = {
    "lln.decrease_slack": 1.0,
    "clt.ks_alpha": 0.01,
    "clt.cov_rel_err_max": 0.05,
    "ldp.gap_max": 0.15,
    "mdp.gap_max": 0.1,
    "mfe.ks_alpha": 0.01,
    "rate.gtol": 1e-8,
}

_NEEDS_EPSILON = ("lln", "clt", "ldp", "mdp")
_NEEDS_X = ("ldp", "mdp", "rate-minimize")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Parsed and validated experiment description."""

    schema_version: str
    model_items: tuple          # sorted (key, value) pairs; whole [model] section
    kernel: Kernel
    phi: IntensityFn
    horizon: float
    kind: str
    epsilons: tuple = ()
    n_nodes: tuple = ()
    replicas: int = 1000
    probe_times: tuple | None = None
    a_eps_exponent: float | None = None
    a_eps_prefactor: float = 1.0
    x: float | None = None
    tail_method: str = "auto"
    functional: str = "I"
    constraint: str = "endpoint-equal"
    tube_radius: float | None = None
    optimizer_n: int = 256
    grid_n: int = 2048
    max_events: int = 10_000_000
    seed: int = 0
    output_dir: Path = Path("out")
    formats: tuple = ("csv", "json", "svg")
    include_timestamp: bool = False
    workers: int | None = None
    thresholds: dict = field(default_factory=dict)

    def a_eps(self, eps: float) -> float:
        if self.a_eps_exponent is None:
            raise SchemaError(
                "a(eps) requested but experiment.a_eps_exponent is not set",
                field="experiment.a_eps_exponent",
            )
        return self.a_eps_prefactor * eps**self.a_eps_exponent

    def threshold(self, key: str) -> float:
        if key not in DEFAULT_THRESHOLDS:
            raise KeyError(f"unknown threshold {key!r}")
        return self.thresholds.get(key, DEFAULT_THRESHOLDS[key])

    def inputs_echo(self) -> dict:
        echo = {
            "schema_version": self.schema_version,
            "model": dict(self.model_items),
            "horizon": self.horizon,
            "kind": self.kind,
            "replicas": self.replicas,
            "seed": self.seed,
            "thresholds": {k: self.threshold(k) for k in DEFAULT_THRESHOLDS},
        }
        if self.epsilons:
            echo["epsilon"] = list(self.epsilons)
        if self.n_nodes:
            echo["n_nodes"] = list(self.n_nodes)
        if self.probe_times is not None:
            echo["probe_times"] = list(self.probe_times)
        if self.a_eps_exponent is not None:
            echo["a_eps_exponent"] = self.a_eps_exponent
            echo["a_eps_prefactor"] = self.a_eps_prefactor
        if self.x is not None:
            echo["x"] = self.x
        if self.kind in ("ldp", "mdp"):
            echo["tail_method"] = self.tail_method
        if self.kind == "rate-minimize":
            echo["functional"] = self.functional
            echo["constraint"] = self.constraint
        return echo


# ---------------------------------------------------------------------------
# raw parsing


def _read_sections(path) -> dict:
    """Read the file into {section: {key: str-value}} from INI or JSON."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if str(path).endswith(".json") or stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(
                f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
        if not isinstance(obj, dict):
            raise SchemaError("top-level JSON value must be an object of sections")
        out = {}
        for sec, body in obj.items():
            if not isinstance(body, dict):
                raise SchemaError(
                    f"section {sec!r} must be an object", field=str(sec)
                )
            out[str(sec)] = {
                str(k): _json_scalar(sec, k, v) for k, v in body.items()
            }
        return out
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise SchemaError(f"invalid INI config: {exc}") from exc
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}


def _json_scalar(sec, key, v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float, str)):
        return str(v)
    if isinstance(v, list):
        return ",".join(str(item) for item in v)
    raise SchemaError(
        f"value of {sec}.{key} must be a scalar or a flat list", field=f"{sec}.{key}"
    )


class _Section:
    """Typed key access with schema-error diagnostics naming the field."""

    def __init__(self, name: str, items: dict):
        self.name = name
        self.items = dict(items)
        self.seen = set()

    def _field(self, key: str) -> str:
        return f"{self.name}.{key}"

    def raw(self, key: str, default=None, required: bool = False):
        self.seen.add(key)
        if key in self.items:
            return self.items[key]
        if required:
            raise SchemaError(
                f"missing required key {self._field(key)}", field=self._field(key)
            )
        return default

    def string(self, key, default=None, required=False, choices=None):
        v = self.raw(key, default, required)
        if v is None:
            return None
        v = str(v).strip()
        if choices is not None and v not in choices:
            raise SchemaError(
                f"{self._field(key)} must be one of {', '.join(choices)}; got {v!r}",
                field=self._field(key),
            )
        return v

    def number(self, key, default=None, required=False, minimum=None, strict_min=None):
        v = self.raw(key, default, required)
        if v is None:
            return None
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise SchemaError(
                f"{self._field(key)} must be a number; got {v!r}",
                field=self._field(key),
            ) from None
        if minimum is not None and x < minimum:
            raise SchemaError(
                f"{self._field(key)} must be >= {minimum}; got {x}",
                field=self._field(key),
            )
        if strict_min is not None and not x > strict_min:
            raise SchemaError(
                f"{self._field(key)} must be > {strict_min}; got {x}",
                field=self._field(key),
            )
        return x

    def integer(self, key, default=None, required=False, minimum=None):
        v = self.raw(key, default, required)
        if v is None:
            return None
        try:
            x = int(str(v).strip())
        except (TypeError, ValueError):
            raise SchemaError(
                f"{self._field(key)} must be an integer; got {v!r}",
                field=self._field(key),
            ) from None
        if minimum is not None and x < minimum:
            raise SchemaError(
                f"{self._field(key)} must be >= {minimum}; got {x}",
                field=self._field(key),
            )
        return x

    def boolean(self, key, default=False):
        v = self.raw(key, None)
        if v is None:
            return default
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise SchemaError(
            f"{self._field(key)} must be a boolean; got {v!r}", field=self._field(key)
        )

    def float_list(self, key, default=None, required=False, strict_min=None):
        v = self.raw(key, None, required)
        if v is None:
            return default
        parts = [p.strip() for p in str(v).split(",") if p.strip()]
        if not parts:
            raise SchemaError(
                f"{self._field(key)} must be a non-empty list", field=self._field(key)
            )
        out = []
        for p in parts:
            try:
                x = float(p)
            except ValueError:
                raise SchemaError(
                    f"{self._field(key)} has a non-numeric entry {p!r}",
                    field=self._field(key),
                ) from None
            if strict_min is not None and not x > strict_min:
                raise SchemaError(
                    f"entries of {self._field(key)} must be > {strict_min}; got {x}",
                    field=self._field(key),
                )
            out.append(x)
        return tuple(out)

    def int_list(self, key, default=None, required=False, minimum=None):
        v = self.raw(key, None, required)
        if v is None:
            return default
        out = []
        for p in str(v).split(","):
            p = p.strip()
            if not p:
                continue
            try:
                x = int(p)
            except ValueError:
                raise SchemaError(
                    f"{self._field(key)} has a non-integer entry {p!r}",
                    field=self._field(key),
                ) from None
            if minimum is not None and x < minimum:
                raise SchemaError(
                    f"entries of {self._field(key)} must be >= {minimum}; got {x}",
                    field=self._field(key),
                )
            out.append(x)
        if not out:
            raise SchemaError(
                f"{self._field(key)} must be a non-empty list", field=self._field(key)
            )
        return tuple(out)

    def reject_unknown(self):
        unknown = set(self.items) - self.seen
        if unknown:
            k = sorted(unknown)[0]
            raise SchemaError(
                f"unknown key {self._field(k)}", field=self._field(k)
            )


# ---------------------------------------------------------------------------
# model construction (importable by worker processes)


def build_model(model_items: dict) -> tuple:
    """Build (kernel, phi, horizon) from the [model] section key-values.

    Worker processes rebuild models from these plain strings because kernel
    and intensity objects hold closures that do not cross process
    boundaries.
    """
    sec = _Section("model", model_items)
    horizon = sec.number("horizon", required=True, strict_min=0.0)
    builtin = sec.string("builtin")
    if builtin is not None:
        registry = builtin_models()
        if builtin not in registry:
            raise SchemaError(
                f"model.builtin {builtin!r} is not a registered model "
                f"(choices: {', '.join(sorted(registry))})",
                field="model.builtin",
            )
        sec.reject_unknown()
        kernel, phi, _ = registry[builtin]
        return kernel, phi, horizon

    k_kind = sec.string(
        "kernel.kind",
        required=True,
        choices=("exponential", "constant", "zero", "polynomial", "table"),
    )
    if k_kind == "exponential":
        kernel = exponential_kernel(
            beta=sec.number("kernel.beta", required=True, strict_min=0.0),
            scale=sec.number("kernel.scale", default=1.0),
        )
    elif k_kind == "constant":
        kernel = constant_kernel(sec.number("kernel.value", required=True))
    elif k_kind == "zero":
        kernel = zero_kernel()
    elif k_kind == "polynomial":
        kernel = polynomial_kernel(
            coeffs=sec.float_list("kernel.coeffs", required=True),
            cutoff=sec.number("kernel.cutoff", required=True, strict_min=0.0),
        )
    else:
        kernel = table_kernel(
            times=sec.float_list("kernel.knots", required=True),
            values=sec.float_list("kernel.values", required=True),
        )

    p_kind = sec.string(
        "phi.kind", required=True, choices=("linear", "constant", "tanh", "table")
    )
    if p_kind == "linear":
        phi = linear_intensity(
            nu=sec.number("phi.nu", required=True, strict_min=0.0),
            slope=sec.number("phi.slope", default=1.0, minimum=0.0),
        )
    elif p_kind == "constant":
        phi = constant_intensity(sec.number("phi.level", required=True, strict_min=0.0))
    elif p_kind == "tanh":
        phi = tanh_intensity(
            base=sec.number("phi.base", required=True, strict_min=0.0),
            scale=sec.number("phi.scale", default=1.0, strict_min=0.0),
            rate=sec.number("phi.rate", default=1.0, strict_min=0.0),
        )
    else:
        phi = table_intensity(
            xs=sec.float_list("phi.knots", required=True),
            ys=sec.float_list("phi.values", required=True),
        )
    sec.reject_unknown()
    return kernel, phi, horizon


# ---------------------------------------------------------------------------
# full config


def load_config(path) -> ExperimentConfig:
    """Parse, type-check, and cross-validate a config file."""
    sections = _read_sections(path)
    known = {"config", "model", "experiment", "output", "thresholds"}
    for sec in sections:
        if sec not in known:
            raise SchemaError(f"unknown section [{sec}]", field=sec)
    for required in ("config", "model", "experiment", "output"):
        if required not in sections:
            raise SchemaError(f"missing section [{required}]", field=required)

    meta = _Section("config", sections["config"])
    version = meta.string("schema_version", required=True)
    if version != CONFIG_SCHEMA_VERSION:
        raise SchemaError(
            f"config.schema_version must be {CONFIG_SCHEMA_VERSION!r}; got {version!r}",
            field="config.schema_version",
        )
    meta.reject_unknown()

    kernel, phi, horizon = build_model(sections["model"])

    exp = _Section("experiment", sections["experiment"])
    kind = exp.string("kind", required=True, choices=EXPERIMENT_KINDS)
    epsilons = exp.float_list(
        "epsilon", required=(kind in _NEEDS_EPSILON), strict_min=0.0, default=()
    )
    n_nodes = exp.int_list(
        "n_nodes",
        required=(kind == "mean-field-equivalence"),
        minimum=1,
        default=(),
    )
    replicas = exp.integer("replicas", default=1000, minimum=1)
    if kind == "clt" and replicas < 1000:
        raise SchemaError(
            f"experiment.replicas must be >= 1000 for clt; got {replicas}",
            field="experiment.replicas",
        )
    probe_times = exp.float_list("probe_times", default=None, strict_min=0.0)
    if probe_times is not None:
        for t in probe_times:
            if t > horizon * (1 + 1e-12):
                raise SchemaError(
                    f"experiment.probe_times entry {t} exceeds the horizon {horizon}",
                    field="experiment.probe_times",
                )
    a_exp = exp.number("a_eps_exponent", strict_min=0.0)
    if a_exp is not None and not a_exp < 0.5:
        raise SchemaError(
            f"experiment.a_eps_exponent must lie in (0, 1/2); got {a_exp}",
            field="experiment.a_eps_exponent",
        )
    if kind == "mdp" and a_exp is None:
        raise SchemaError(
            "experiment.a_eps_exponent is required for the mdp experiment "
            "(a(eps) = a_eps_prefactor * eps**a_eps_exponent)",
            field="experiment.a_eps_exponent",
        )
    a_pre = exp.number("a_eps_prefactor", default=1.0, strict_min=0.0)
    x = exp.number("x", required=(kind in _NEEDS_X))
    tail_method = exp.string(
        "tail_method", default="auto", choices=("auto", "exact", "plain", "importance")
    )
    functional = exp.string("functional", default="I", choices=("I", "J"))
    constraint = exp.string(
        "constraint",
        default="endpoint-equal",
        choices=("endpoint-equal", "endpoint-at-least", "tube"),
    )
    tube_radius = exp.number("tube_radius", strict_min=0.0)
    if kind == "rate-minimize" and constraint == "tube" and tube_radius is None:
        raise SchemaError(
            "experiment.tube_radius is required for the tube constraint",
            field="experiment.tube_radius",
        )
    optimizer_n = exp.integer("optimizer_n", default=256, minimum=2)
    grid_n = exp.integer("grid_n", default=2048, minimum=8)
    max_events = exp.integer("max_events", default=10_000_000, minimum=1)
    exp.reject_unknown()

    out = _Section("output", sections["output"])
    seed = out.integer("seed", required=True)
    directory = out.string("directory", default="out")
    env_dir = os.environ.get("HAWKESLIM_OUTPUT_DIR")
    if env_dir:
        directory = env_dir
    formats_raw = out.string("formats", default="csv,json,svg")
    formats = tuple(f.strip() for f in formats_raw.split(",") if f.strip())
    for f in formats:
        if f not in ("csv", "json", "svg"):
            raise SchemaError(
                f"output.formats entries must be csv, json, or svg; got {f!r}",
                field="output.formats",
            )
    include_timestamp = out.boolean("include_timestamp", default=False)
    workers = out.integer("workers", minimum=1)
    env_workers = os.environ.get("HAWKESLIM_WORKERS")
    if env_workers:
        try:
            workers = int(env_workers)
        except ValueError:
            raise SchemaError(
                f"HAWKESLIM_WORKERS must be an integer; got {env_workers!r}",
                field="output.workers",
            ) from None
        if workers < 1:
            raise SchemaError(
                "HAWKESLIM_WORKERS must be >= 1", field="output.workers"
            )
    out.reject_unknown()

    thresholds = {}
    if "thresholds" in sections:
        thr = _Section("thresholds", sections["thresholds"])
        for key in DEFAULT_THRESHOLDS:
            v = thr.number(key)
            if v is not None:
                thresholds[key] = v
        thr.reject_unknown()

    return ExperimentConfig(
        schema_version=version,
        model_items=tuple(sorted(sections["model"].items())),
        kernel=kernel,
        phi=phi,
        horizon=horizon,
        kind=kind,
        epsilons=tuple(epsilons),
        n_nodes=tuple(n_nodes),
        replicas=replicas,
        probe_times=probe_times,
        a_eps_exponent=a_exp,
        a_eps_prefactor=a_pre,
        x=x,
        tail_method=tail_method,
        functional=functional,
        constraint=constraint,
        tube_radius=tube_radius,
        optimizer_n=optimizer_n,
        grid_n=grid_n,
        max_events=max_events,
        seed=seed,
        output_dir=Path(directory),
        formats=formats,
        include_timestamp=include_timestamp,
        workers=workers,
        thresholds=thresholds,
    )
