"""YAML experiment configuration.

Schema (all keys optional except ``model`` and ``infer``)::

    model: idm                     # sfm | idm
    seed: 0                        # master seed of the sampler
    observation_seed: 1            # seed of the observation noise
    n_samples: 200
    T: 15                          # number of observation steps
    noise_sigma: 0.1
    ess_threshold: null            # null -> n_samples / 2
    reweight: pre_move             # pre_move | post_move
    scenario: {...}                # RoomScenario / HighwayScenario fields
    fixed: {...}                   # SFMParams / IDMParams fields; also the ground truth
    infer:                         # inferred parameters with their uniform priors
      v0: {lower: 5.56, upper: 22.22, proposal_std: null}
    report: {steps: null, grid: 50}
    output: runs/idm-desk

Any scalar can be overridden with ``section.key=value`` strings, e.g.
``fixed.v0=9`` or ``infer.a.upper=4``.
"""

import copy
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

from ..exceptions import InvalidConfig
from ..models import idm, sfm
from ..models.idm import HighwayScenario, IDMParams, IntelligentDriverModel
from ..models.sfm import RoomScenario, SFMParams, SocialForceModel
from ..smcs import REWEIGHT_MODES, PriorBox, ProposalConfig, SMCSConfig

__all__ = [
    "ExperimentConfig",
    "InferredParameter",
    "load_config",
    "parse_config",
    "apply_overrides",
    "builtin_configs",
    "resolve_config_path",
]

_MODELS = {
    "sfm": (SocialForceModel, RoomScenario, SFMParams),
    "idm": (IntelligentDriverModel, HighwayScenario, IDMParams),
}
_INFERABLE = {"sfm": sfm.INFERABLE, "idm": idm.INFERABLE}

_TOP_KEYS = {"model", "seed", "observation_seed", "n_samples", "T", "noise_sigma",
             "ess_threshold", "reweight", "scenario", "fixed", "infer", "report", "output"}


@dataclass(frozen=True)
class InferredParameter:
    name: str
    lower: float
    upper: float
    proposal_std: float = None


@dataclass
class ExperimentConfig:
    model: str
    infer: list
    seed: int = 0
    observation_seed: int = 1
    n_samples: int = 200
    T: int = 15
    noise_sigma: float = 0.0
    ess_threshold: float = None
    reweight: str = "pre_move"
    scenario: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    output: str = None

    # ----------------------------------------------------------- builders
    def build_model(self):
        model_cls, scenario_cls, params_cls = _MODELS[self.model]
        scenario = dict(self.scenario)
        if "exit_center" in scenario:
            scenario["exit_center"] = tuple(scenario["exit_center"])
        try:
            return model_cls(scenario_cls(**scenario), params_cls(**self.fixed))
        except ValueError as exc:
            raise InvalidConfig(f"scenario/fixed: {exc}") from exc

    def prior(self):
        return PriorBox(tuple(p.name for p in self.infer),
                        [p.lower for p in self.infer], [p.upper for p in self.infer])

    def smcs_config(self):
        prior = self.prior()
        default = ProposalConfig.from_prior(prior).stds
        stds = [p.proposal_std if p.proposal_std is not None else d
                for p, d in zip(self.infer, default)]
        return SMCSConfig(prior, self.n_samples, self.ess_threshold, ProposalConfig(stds),
                          self.seed, self.reweight)

    def truth(self):
        """Ground-truth values of the inferred parameters (the fixed table)."""
        params = self.build_model().fixed
        return {p.name: float(getattr(params, p.name)) for p in self.infer}

    def report_steps(self):
        steps = self.report.get("steps")
        if steps is None:
            return sorted({1, math.ceil(self.T / 3), self.T})
        return sorted({int(s) for s in steps})

    def grid_counts(self):
        return int(self.report.get("grid", 50))

    # ------------------------------------------------------ serialization
    def to_dict(self):
        out = {"model": self.model}
        for f in fields(self):
            if f.name in ("model", "infer"):
                continue
            out[f.name] = copy.deepcopy(getattr(self, f.name))
        out["infer"] = {p.name: {"lower": p.lower, "upper": p.upper,
                                 "proposal_std": p.proposal_std} for p in self.infer}
        return out

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=False)


def _num(raw, key, kind=float, minimum=None, allow_none=False):
    if raw is None and allow_none:
        return None
    if isinstance(raw, bool) or raw is None:
        raise InvalidConfig(f"field {key!r}: expected a number, got {raw!r}")
    try:
        value = kind(raw)
    except (TypeError, ValueError):
        raise InvalidConfig(f"field {key!r}: expected a number, got {raw!r}") from None
    if kind is int and value != raw:
        raise InvalidConfig(f"field {key!r}: expected an integer, got {raw!r}")
    if kind is float and not math.isfinite(value):
        raise InvalidConfig(f"field {key!r}: must be finite")
    if minimum is not None and value < minimum:
        raise InvalidConfig(f"field {key!r}: must be >= {minimum}, got {value}")
    return value


def parse_config(data):
    """Validate a config mapping and return an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise InvalidConfig("config must be a mapping at the top level")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise InvalidConfig(f"unknown field(s): {sorted(unknown)}")
    model = data.get("model")
    if model not in _MODELS:
        raise InvalidConfig(f"field 'model': expected one of {sorted(_MODELS)}, got {model!r}")
    _, scenario_cls, params_cls = _MODELS[model]

    for section in ("scenario", "fixed", "report"):
        if data.get(section) is not None and not isinstance(data[section], dict):
            raise InvalidConfig(f"field {section!r}: expected a mapping")
    scenario = dict(data.get("scenario") or {})
    fixed = dict(data.get("fixed") or {})
    report = dict(data.get("report") or {})
    for section, cls, values in (("scenario", scenario_cls, scenario), ("fixed", params_cls, fixed)):
        allowed = {f.name for f in fields(cls)}
        bad = set(values) - allowed
        if bad:
            raise InvalidConfig(f"field {section!r}: unknown key(s) {sorted(bad)}; "
                                f"allowed {sorted(allowed)}")
    bad = set(report) - {"steps", "grid"}
    if bad:
        raise InvalidConfig(f"field 'report': unknown key(s) {sorted(bad)}")

    infer_raw = data.get("infer")
    if not infer_raw:
        raise InvalidConfig("field 'infer': at least one inferred parameter is required")
    if not isinstance(infer_raw, dict):
        raise InvalidConfig("field 'infer': expected a mapping name -> {lower, upper}")
    names = list(_INFERABLE[model])
    infer = []
    for name, spec in infer_raw.items():
        key = f"infer.{name}"
        if name not in names:
            raise InvalidConfig(f"field {key!r}: model {model!r} infers only {names}")
        if not isinstance(spec, dict) or "lower" not in spec or "upper" not in spec:
            raise InvalidConfig(f"field {key!r}: needs 'lower' and 'upper'")
        bad = set(spec) - {"lower", "upper", "proposal_std"}
        if bad:
            raise InvalidConfig(f"field {key!r}: unknown key(s) {sorted(bad)}")
        lo = _num(spec["lower"], key + ".lower")
        hi = _num(spec["upper"], key + ".upper")
        if lo >= hi:
            raise InvalidConfig(f"field {key!r}: lower must be < upper, got {lo} >= {hi}")
        std = _num(spec.get("proposal_std"), key + ".proposal_std", allow_none=True)
        if std is not None and std <= 0:
            raise InvalidConfig(f"field {key + '.proposal_std'!r}: must be > 0")
        infer.append(InferredParameter(str(name), lo, hi, std))

    reweight = data.get("reweight", "pre_move")
    if reweight not in REWEIGHT_MODES:
        raise InvalidConfig(f"field 'reweight': expected one of {REWEIGHT_MODES}")

    cfg = ExperimentConfig(
        model=model,
        infer=infer,
        seed=_num(data.get("seed", 0), "seed", int, 0),
        observation_seed=_num(data.get("observation_seed", 1), "observation_seed", int, 0),
        n_samples=_num(data.get("n_samples", 200), "n_samples", int, 2),
        T=_num(data.get("T", 15), "T", int, 1),
        noise_sigma=_num(data.get("noise_sigma", 0.0), "noise_sigma", float, 0.0),
        ess_threshold=_num(data.get("ess_threshold"), "ess_threshold", float, 0.0, allow_none=True),
        reweight=reweight,
        scenario=scenario,
        fixed=fixed,
        report=report,
        output=data.get("output"),
    )
    steps = report.get("steps")
    if steps is not None:
        if not isinstance(steps, list) or not steps:
            raise InvalidConfig("field 'report.steps': expected a nonempty list")
        for s in steps:
            s = _num(s, "report.steps", int, 1)
            if s > cfg.T:
                raise InvalidConfig(f"field 'report.steps': step {s} exceeds T={cfg.T}")
    if "grid" in report:
        _num(report["grid"], "report.grid", int, 2)
    cfg.build_model()
    return cfg


def apply_overrides(data, overrides):
    """Apply ``section.key=value`` overrides to a raw config mapping (copied)."""
    data = copy.deepcopy(data) if data is not None else {}
    for item in overrides or ():
        if "=" not in item:
            raise InvalidConfig(f"override {item!r}: expected KEY=VALUE")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise InvalidConfig(f"override {item!r}: empty key component")
        node = data
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise InvalidConfig(f"override {item!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = yaml.safe_load(text)
    return data


def builtin_configs():
    """Names of the configs shipped with the package."""
    root = resources.files("wdsmc.harness") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config_path(name_or_path):
    """A filesystem path, or the name of a built-in config."""
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = resources.files("wdsmc.harness") / "configs" / f"{name_or_path}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    raise InvalidConfig(f"config {name_or_path!r} not found (built-ins: {builtin_configs()})")


def load_config(path, overrides=()):
    """Read, override and validate a config file; return ``(config, raw_bytes)``."""
    path = resolve_config_path(path)
    raw = Path(path).read_bytes()
    try:
        data = yaml.safe_load(raw.decode("utf-8"))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise InvalidConfig(f"{path}: invalid YAML{where}: {exc}") from None
    return parse_config(apply_overrides(data, overrides)), raw
