"""Run configuration: flat `section.key = value` text, canonical serialization,
and construction of the domain objects a run needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import losses as L
from . import models as nm
from . import spaces as sp
from . import training as tr
from .mixing import MixerParams, build_mixer


class ConfigError(ValueError):
    pass


# key -> (type, default)
SCHEMA: dict[str, tuple[type, object]] = {
    "space.n": (int, 4),
    "space.scenario": (str, sp.BOX_SIMPLE),
    "space.r_inner": (float, 0.5),
    "space.r_outer": (float, 1.0),
    "space.gap": (float, 0.3),
    "space.rho": (float, 0.8),
    "space.mu": (float, 0.5),
    "space.sbar": (float, 0.3),
    "conditional.beta": (float, 1.0),
    "conditional.sigma": (str, "default"),  # "default" or comma-separated floats
    "conditional.q": (str, "constant"),
    "conditional.q_low": (float, 0.1),
    "mixer.layers": (int, 3),
    "mixer.seed": (int, 101),
    "mixer.slope": (float, 0.2),
    "mixer.m": (int, 0),  # 0 means m = n
    "model.dhat": (str, nm.LP_BETA),
    "model.dhat_beta": (float, 0.0),  # 0 means match conditional.beta
    "model.dhat_sigma": (str, "match"),
    "model.alpha_mode": (str, nm.LEARNED),
    "model.head": (str, nm.UNBOUNDED),
    "model.enc_slope": (float, 0.01),
    "loss.kind": (str, L.DELTA_NCE),
    "loss.k": (int, 0),
    "loss.clamp_hi": (float, 20.0),
    "train.batch": (int, 512),
    "train.iterations": (int, 20_000),
    "train.seed": (int, 0),
    "train.lr_encoder": (float, 1e-4),
    "train.lr_alpha": (float, 1e-2),
    "train.negative_source": (str, tr.SECOND_MARGINAL),
    "train.eval_every": (int, 2_000),
    "train.grad_clip": (float, 0.0),
    "eval.pairs": (int, 4_096),
}


@dataclass
class RunConfig:
    values: dict[str, object]

    @classmethod
    def default(cls) -> "RunConfig":
        return cls({k: default for k, (_, default) in SCHEMA.items()})

    def get(self, key: str):
        return self.values[key]

    def with_overrides(self, overrides: dict[str, object]) -> "RunConfig":
        cfg = RunConfig(dict(self.values))
        for key, val in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            cfg.values[key] = SCHEMA[key][0](val)
        return cfg

    # -- serialization ------------------------------------------------------

    def canonical(self) -> str:
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            text = repr(val) if isinstance(val, float) else str(val)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    # -- domain objects -------------------------------------------------------

    def space(self) -> sp.LatentSpaceSpec:
        return sp.LatentSpaceSpec(
            n=self.get("space.n"), scenario=self.get("space.scenario"),
            r_inner=self.get("space.r_inner"), r_outer=self.get("space.r_outer"),
            gap=self.get("space.gap"), rho=self.get("space.rho"),
            mu=self.get("space.mu"), sbar=self.get("space.sbar"))

    def conditional(self) -> sp.ConditionalSpec:
        space = self.space()
        raw = self.get("conditional.sigma")
        if raw == "default":
            sigma = (0.1 * space.diameter,)
        else:
            sigma = tuple(float(x) for x in str(raw).split(","))
        return sp.ConditionalSpec(beta=self.get("conditional.beta"), sigma=sigma,
                                  q=self.get("conditional.q"),
                                  q_low=self.get("conditional.q_low"))

    def mixer(self) -> MixerParams:
        n = self.get("space.n")
        m = self.get("mixer.m") or n
        return build_mixer(n, m, self.get("mixer.layers"),
                           slope=self.get("mixer.slope"),
                           seed=self.get("mixer.seed"))

    def train_config(self) -> tr.TrainConfig:
        return tr.TrainConfig(
            loss_kind=self.get("loss.kind"), batch=self.get("train.batch"),
            iterations=self.get("train.iterations"), seed=self.get("train.seed"),
            lr_encoder=self.get("train.lr_encoder"),
            lr_alpha=self.get("train.lr_alpha"),
            negative_source=self.get("train.negative_source"),
            alpha_mode=self.get("model.alpha_mode"),
            eval_every=self.get("train.eval_every"),
            k_negatives=self.get("loss.k"),
            clamp_hi=self.get("loss.clamp_hi"),
            grad_clip=self.get("train.grad_clip"),
            eval_pairs=self.get("eval.pairs"))

    def model(self) -> nm.Model:
        space = self.space()
        cond = self.conditional()
        mixer = self.mixer()
        dhat_beta = self.get("model.dhat_beta") or None
        raw_sigma = self.get("model.dhat_sigma")
        dhat_sigma = None if raw_sigma == "match" else \
            tuple(float(x) for x in str(raw_sigma).split(","))
        return tr.build_model_for(
            self.train_config(), space, cond, mixer,
            dhat_kind=self.get("model.dhat"), dhat_beta=dhat_beta,
            dhat_sigma=dhat_sigma, head=self.get("model.head"),
            enc_slope=self.get("model.enc_slope"))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse `key = value` lines; errors carry the line number and key path."""
    cfg = RunConfig.default()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        typ = SCHEMA[key][0]
        try:
            parsed = typ(val) if typ is not bool else val.lower() in ("1", "true")
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: key {key!r}: {exc}") from None
        cfg.values[key] = parsed
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), source=str(path))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_DESK = {
    "space.n": 4, "train.batch": 512, "train.iterations": 20_000,
    "conditional.beta": 1.0,
}

PRESETS: dict[str, dict[str, object]] = {
    "box-simple-beta1-nce": {**_DESK, "loss.kind": L.DELTA_NCE},
    "box-simple-beta1-ince": {**_DESK, "loss.kind": L.DELTA_INCE, "loss.k": 32},
    "box-simple-beta1-scl": {**_DESK, "loss.kind": L.DELTA_SCL},
    "box-simple-beta1-nwj": {**_DESK, "loss.kind": L.DELTA_NWJ},
    "hollow-ball-beta1-nce": {**_DESK, "space.scenario": sp.HOLLOW_BALL,
                              "loss.kind": L.DELTA_NCE},
    "cube-grid-beta1-nce": {**_DESK, "space.scenario": sp.CUBE_GRID,
                            "loss.kind": L.DELTA_NCE},
    # figure-2 setup: unit box, n = 2, sigma = 1, negatives from the anchor
    # marginal so the alpha~ ground truth is exactly constant
    "figure2": {"space.n": 2, "conditional.sigma": "1.0",
                "train.batch": 1024, "train.iterations": 25_000,
                "train.negative_source": tr.FIRST_MARGINAL,
                "train.eval_every": 5_000, "mixer.seed": 202},
    # paper-scale opt-in (hours of CPU)
    "table1-full": {"space.n": 10, "train.batch": 5_120,
                    "train.iterations": 300_000, "train.eval_every": 10_000},
}


def preset_config(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return RunConfig.default().with_overrides(PRESETS[name])
