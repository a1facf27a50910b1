"""Experiment configuration: an INI file with one section per concern and one per arm.

Sections::

    [experiment]  seed, out
    [data]        source (synth | stream | criteo), path
    [synth]       SynthConfig fields
    [pipeline]    PipelineConfig fields (criteo ingestion)
    [schedule]    w, T, arms, jobs, delay_gaps
    [registry]    RegistryConfig fields
    [model]       ModelConfig fields
    [arm:<name>]  TrainConfig overrides for one arm (loss fields prefixed ``loss_``)

Arms listed in ``[schedule] arms`` without their own section take the
defaults for their name (see :func:`default_arm`).
"""

import configparser
import io
import typing
from dataclasses import dataclass, field, fields, replace

from .data import PipelineConfig, SynthConfig
from .errors import ConfigError
from .model import LossConfig, ModelConfig
from .registry import RegistryConfig
from .schedule import batch_delay
from .trainer import TrainConfig

SOURCES = ("synth", "stream", "criteo")
INCREMENTAL_MODES = ("ft", "kd_batch", "kd_self")


def default_arm(name):
    """TrainConfig defaults keyed by arm name.

    Batch arms train two epochs over the window; ``batch-0`` tunes its epoch
    count on the last window day and refits. Incremental arms take their mode
    from the name prefix.
    """
    delay = batch_delay(name)
    if delay is not None:
        return TrainConfig(mode="batch", epoch_cap=2, validate_refit=(name == "batch-0"))
    for mode in INCREMENTAL_MODES:
        if name == mode or name.startswith(mode + "_"):
            return TrainConfig(mode=mode)
    raise ConfigError(f"arm {name!r} needs a 'mode' in its [arm:{name}] section")


@dataclass
class ExperimentConfig:
    source: str = "synth"
    path: str = ""
    seed: int = 0
    out: str = "runs/default"
    w: int = 7
    T: int = 23
    arms: dict = field(default_factory=lambda: {a: default_arm(a) for a in ("batch", "ft", "kd_batch", "kd_self")})
    jobs: int = 1
    delay_gaps: int = 5
    synth: SynthConfig = field(default_factory=SynthConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"data source must be one of {SOURCES}, got {self.source!r}")
        if self.source != "synth" and not self.path:
            raise ConfigError(f"data source {self.source!r} needs a path")
        if not 1 <= self.w < self.T:
            raise ConfigError(f"need T > w >= 1, got w={self.w}, T={self.T}")
        if not self.arms:
            raise ConfigError("at least one arm is required")
        if self.jobs < 1 or self.delay_gaps < 0:
            raise ConfigError("jobs must be >= 1 and delay_gaps >= 0")

    def with_seed(self, seed):
        """Apply a global seed to the generator, the pipeline and every arm."""
        return replace(self, seed=seed, synth=replace(self.synth, seed=seed),
                       pipeline=replace(self.pipeline, seed=seed),
                       arms={a: replace(c, seed=seed) for a, c in self.arms.items()})


# ---------------------------------------------------------------- parsing

def _coerce(kind, raw, key):
    origin = typing.get_origin(kind)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        if kind in (tuple, list) or origin in (tuple, list):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            return tuple(int(x) for x in items) if kind in (tuple,) or origin is tuple else [float(x) for x in items]
        if origin is typing.Union:  # Optional[float]
            if raw.strip().lower() in ("", "none"):
                return None
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    raise ConfigError(f"cannot parse {key}")


_HINTS = {
    SynthConfig: {"new_feature_rate_schedule": list, "days": int, "samples_per_day": int, "m": int,
                  "base_vocab_per_field": int, "min_intro_count": int, "interaction_rank": int, "seed": int},
    ModelConfig: {"hidden": tuple, "init_scale": typing.Optional[float]},
}


def _field_types(cls):
    hints = {f.name: (f.type if isinstance(f.type, type) else type(f.default)) for f in fields(cls)}
    hints.update(_HINTS.get(cls, {}))
    return hints


def _build(cls, section, base=None, name=None, skip=()):
    types = _field_types(cls)
    kw = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{name or cls.__name__}]")
        if key == "new_feature_rate_schedule" and raw.strip().lower() in ("", "default", "none"):
            kw[key] = None
            continue
        kw[key] = _coerce(types[key], raw, f"{name}.{key}")
    try:
        return replace(base, **kw) if base is not None else cls(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _arm(name, section):
    mode = section.get("mode")
    base = TrainConfig(mode=mode) if mode else default_arm(name)
    loss_keys = {k: v for k, v in section.items() if k.startswith("loss_")}
    rest = {k: v for k, v in section.items() if not k.startswith("loss_")}
    loss = _build(LossConfig, {k[5:]: v for k, v in loss_keys.items()}, base.loss, f"arm:{name} loss")
    cfg = _build(TrainConfig, rest, base, f"arm:{name}", skip=("loss",))
    try:
        return replace(cfg, loss=loss)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text):
    """Parse INI text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    known = {"experiment", "data", "synth", "pipeline", "schedule", "registry", "model"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("arm:"):
            raise ConfigError(f"unknown section [{sec}]")
    get = lambda sec: dict(cp[sec]) if cp.has_section(sec) else {}

    exp, data, sched = get("experiment"), get("data"), get("schedule")
    for sec, keys, d in (("experiment", {"seed", "out"}, exp), ("data", {"source", "path"}, data),
                         ("schedule", {"w", "t", "arms", "jobs", "delay_gaps"}, sched)):
        extra = set(d) - keys
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)} in [{sec}]")
    names = [a.strip() for a in sched.get("arms", "batch, ft, kd_batch, kd_self").split(",") if a.strip()]
    sections = {s[4:]: dict(cp[s]) for s in cp.sections() if s.startswith("arm:")}
    stray = set(sections) - set(names)
    if stray:
        raise ConfigError(f"arm sections {sorted(stray)} are not listed in [schedule] arms")
    # the experiment seed fills in every component that does not set its own
    seed = _coerce(int, exp.get("seed", "0"), "experiment.seed")
    seeded = lambda sec: {"seed": str(seed), **sec}
    arms = {n: _arm(n, seeded(sections.get(n, {}))) for n in names}
    try:
        return ExperimentConfig(
            source=data.get("source", "synth").strip(), path=data.get("path", "").strip(),
            seed=seed,
            out=exp.get("out", "runs/default").strip(),
            w=_coerce(int, sched.get("w", "7"), "schedule.w"),
            T=_coerce(int, sched.get("t", "23"), "schedule.T"),
            arms=arms,
            jobs=_coerce(int, sched.get("jobs", "1"), "schedule.jobs"),
            delay_gaps=_coerce(int, sched.get("delay_gaps", "5"), "schedule.delay_gaps"),
            synth=_build(SynthConfig, seeded(get("synth")), name="synth"),
            pipeline=_build(PipelineConfig, seeded(get("pipeline")), name="pipeline"),
            registry=_build(RegistryConfig, get("registry"), name="registry"),
            model=_build(ModelConfig, get("model"), name="model"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


# ---------------------------------------------------------------- rendering

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _section(obj, skip=()):
    return {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip}


def dump_config(cfg):
    """Render a config as INI text that :func:`parse_config` reads back unchanged."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {"seed": str(cfg.seed), "out": cfg.out}
    cp["data"] = {"source": cfg.source, "path": cfg.path}
    cp["schedule"] = {"w": str(cfg.w), "T": str(cfg.T), "arms": ", ".join(cfg.arms),
                      "jobs": str(cfg.jobs), "delay_gaps": str(cfg.delay_gaps)}
    cp["synth"] = _section(cfg.synth)
    cp["pipeline"] = _section(cfg.pipeline)
    cp["registry"] = _section(cfg.registry)
    cp["model"] = _section(cfg.model)
    for name, arm in cfg.arms.items():
        sec = _section(arm, skip=("loss",))
        sec.update({f"loss_{k}": v for k, v in _section(arm.loss).items()})
        cp[f"arm:{name}"] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def default_config_text():
    return dump_config(ExperimentConfig())

