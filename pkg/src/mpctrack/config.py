"""Experiment configuration: JSON schema, validation with field-path errors,
and a defaulting report for omitted values."""

import dataclasses
import json
from dataclasses import dataclass, field

from .metrics import OspaConfig
from .model import ArrayGeometry, HyperParams
from .radio import default_geometry


CONFIG_SCHEMA_VERSION = 1
MODES = ("fully_synthetic", "radio_pipeline")


@dataclass
class ExperimentConfig:
    mode: str = "fully_synthetic"
    scenario: str = "desk"            # builtin name or path to a scenario file
    hyper: HyperParams = field(default_factory=HyperParams)
    geom: ArrayGeometry = field(default_factory=default_geometry)
    runs: int = 1
    base_seed: int = 0
    out_dir: str = "out"
    ospa: OspaConfig = field(default_factory=OspaConfig)
    workers: int = 1
    snapshot_u_de: float = None  # radio mode only; defaults to hyper.u_de
    snr_1m_db: float = None      # radio mode noise level; None = noiseless

    def validate(self) -> list:
        problems = []
        if self.mode not in MODES:
            problems.append(("mode", f"must be one of {MODES}"))
        if self.runs < 1:
            problems.append(("runs", "must be >= 1"))
        if self.workers < 1:
            problems.append(("workers", "must be >= 1"))
        problems.extend((f"hyper.{f}", msg) for f, msg in self.hyper.validate())
        problems.extend((f"ospa.{f}", msg) for f, msg in self.ospa.validate())
        return problems


@dataclass
class ValidationReport:
    ok: bool
    errors: list          # [(field_path, message)]
    defaults_filled: list  # [(field_path, value)] filled from defaults
    config: ExperimentConfig = None

    def to_json(self) -> str:
        return json.dumps({
            "ok": self.ok,
            "errors": [{"field": f, "message": m} for f, m in self.errors],
            "defaults_filled": [{"field": f, "value": v}
                                for f, v in self.defaults_filled],
        }, indent=1)


_GEOM_KEYS = ("element_offsets", "psi", "f_c", "beta_bw_sq", "N_s", "T_s", "c")


def _fill_dataclass(cls, doc: dict, path: str, errors: list, filled: list):
    """Build a dataclass from a dict, recording defaulted fields and unknown
    or mistyped keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in names:
            errors.append((f"{path}.{key}", "unknown field"))
    kwargs = {}
    obj_defaults = cls()
    for f in dataclasses.fields(cls):
        if f.name in doc:
            kwargs[f.name] = doc[f.name]
        else:
            filled.append((f"{path}.{f.name}", getattr(obj_defaults, f.name)))
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append((path, str(exc)))
        return obj_defaults


def config_from_dict(doc: dict) -> ValidationReport:
    errors: list = []
    filled: list = []
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        errors.append(("schema_version",
                       f"unsupported version {version}"))
    body = {k: v for k, v in doc.items() if k != "schema_version"}

    hyper = _fill_dataclass(HyperParams, body.pop("hyper", {}), "hyper",
                            errors, filled)
    ospa = _fill_dataclass(OspaConfig, body.pop("ospa", {}), "ospa",
                           errors, filled)

    geom_doc = body.pop("geom", None)
    if geom_doc is None:
        geom = default_geometry()
        filled.append(("geom", "default 3x3 array"))
    else:
        unknown = set(geom_doc) - set(_GEOM_KEYS)
        for key in sorted(unknown):
            errors.append((f"geom.{key}", "unknown field"))
        try:
            geom = ArrayGeometry(**{k: v for k, v in geom_doc.items()
                                    if k in _GEOM_KEYS})
        except (TypeError, ValueError) as exc:
            errors.append(("geom", str(exc)))
            geom = default_geometry()

    cfg_defaults = ExperimentConfig()
    kwargs = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("hyper", "geom", "ospa"):
            continue
        if f.name in body:
            kwargs[f.name] = body.pop(f.name)
        else:
            filled.append((f.name, getattr(cfg_defaults, f.name)))
    for key in sorted(body):
        errors.append((key, "unknown field"))

    try:
        cfg = ExperimentConfig(hyper=hyper, geom=geom, ospa=ospa, **kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(("", str(exc)))
        cfg = cfg_defaults

    if not isinstance(cfg.scenario, str):
        errors.append(("scenario", "must be a builtin name or a path"))
    errors.extend(cfg.validate())
    return ValidationReport(not errors, errors, filled, cfg)


def validate_config(path: str) -> ValidationReport:
    """Parse and validate a config file; never raises on content problems."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        return ValidationReport(False, [("", f"cannot read config: {exc}")], [])
    except json.JSONDecodeError as exc:
        return ValidationReport(False, [("", f"config is not valid JSON: {exc}")], [])
    if not isinstance(doc, dict):
        return ValidationReport(False, [("", "config root must be an object")], [])
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Round-trippable dict form (the config echo)."""
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "mode": cfg.mode,
        "scenario": cfg.scenario,
        "runs": cfg.runs,
        "base_seed": cfg.base_seed,
        "out_dir": cfg.out_dir,
        "workers": cfg.workers,
        "snapshot_u_de": cfg.snapshot_u_de,
        "snr_1m_db": cfg.snr_1m_db,
        "hyper": dataclasses.asdict(cfg.hyper),
        "geom": {
            "element_offsets": [list(map(float, e))
                                for e in cfg.geom.element_offsets],
            "psi": cfg.geom.psi, "f_c": cfg.geom.f_c,
            "beta_bw_sq": cfg.geom.beta_bw_sq, "N_s": cfg.geom.N_s,
            "T_s": cfg.geom.T_s, "c": cfg.geom.c,
        },
        "ospa": dataclasses.asdict(cfg.ospa),
    }
