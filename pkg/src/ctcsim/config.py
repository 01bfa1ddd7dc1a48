"""Run configuration: INI sections mirroring the modules, with env and command-line overrides.

Precedence, lowest first: built-in defaults, config file, ``CTCSIM_<SECTION>_<KEY>``
environment variables, ``--set section.key=value`` flags. Unknown sections or
keys are rejected.
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .core import WerBinScheme
from .cps import CpsConfig
from .simulator.model import SimArch
from .simulator.training import TrainConfig
from .teacher import TeacherConfig

ENV_PREFIX = "CTCSIM"


class ConfigError(ValueError):
    pass


SCHEMA: dict = {
    "run": {"seed": (int, 0), "workers": (int, 1)},
    "corpus": {"size": (int, 2000), "vocab_size": (int, 32), "min_len": (int, 4),
               "max_len": (int, 12)},
    "teacher": {"dur_min": (int, 1), "dur_max": (int, 3), "dur_jitter": (float, 0.1),
                "blank_gap_prob": (float, 0.1), "peak_lo": (float, 0.6), "peak_hi": (float, 0.95),
                "variants": (int, 7), "eta_lo": (float, 0.0), "eta_hi": (float, 0.6),
                "q_del": (float, 0.5), "q_ins": (float, 0.5)},
    "cps": {"alpha_lo": (float, 0.6), "alpha_hi": (float, 0.95), "p_del": (float, 0.05),
            "p_ins": (float, 0.05), "ins_blank_frac": (float, 0.5)},
    "bins": {"scheme": (str, "0-6,10-40,50-150")},
    "arch": {"enc_layers": (int, 2), "dec_layers": (int, 2), "d_model": (int, 64),
             "n_heads": (int, 4), "d_ff": (int, 128), "T_train": (int, 64),
             "fusion": (str, "prepend")},
    "train": {"lr": (float, 5e-5), "epochs": (int, 5), "batch_size": (int, 32),
              "clip_norm": (float, 1.0), "beta1": (float, 0.9), "beta2": (float, 0.999),
              "eps": (float, 1e-8), "weight_decay": (float, 0.01), "lam_stop": (float, 0.1),
              "lr_decay": (float, 1.0), "balance_bins": (bool, False)},
    "eval": {"held_out_frac": (float, 0.1), "samples_per_bin": (int, 200),
             "chunk_size": (int, 64)},
}


_BOOLS = {"1": True, "true": True, "yes": True, "on": True,
          "0": False, "false": False, "no": False, "off": False}


def _convert(section: str, key: str, raw) -> object:
    typ = SCHEMA[section][key][0]
    try:
        if typ is bool:
            return raw if isinstance(raw, bool) else _BOOLS[str(raw).strip().lower()]
        return typ(raw)
    except (TypeError, ValueError, KeyError):
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def workers(self) -> int:
        return self.values["run"]["workers"]

    def teacher(self) -> TeacherConfig:
        t = self.values["teacher"]
        return TeacherConfig(vocab_size=self.values["corpus"]["vocab_size"],
                             dur_range=(t["dur_min"], t["dur_max"]), dur_jitter=t["dur_jitter"],
                             blank_gap_prob=t["blank_gap_prob"],
                             peak_range=(t["peak_lo"], t["peak_hi"]), variants=t["variants"],
                             eta_range=(t["eta_lo"], t["eta_hi"]), q_del=t["q_del"],
                             q_ins=t["q_ins"])

    def cps(self) -> CpsConfig:
        c = self.values["cps"]
        return CpsConfig((c["alpha_lo"], c["alpha_hi"]), c["p_del"], c["p_ins"], c["ins_blank_frac"])

    def scheme(self) -> WerBinScheme:
        try:
            return WerBinScheme.parse(self.values["bins"]["scheme"])
        except ValueError as exc:
            raise ConfigError(f"[bins] scheme: {exc}") from None

    def arch(self) -> SimArch:
        a = self.values["arch"]
        return SimArch(V=self.values["corpus"]["vocab_size"], K=self.scheme().K,
                       enc_layers=a["enc_layers"], dec_layers=a["dec_layers"], d_model=a["d_model"],
                       n_heads=a["n_heads"], d_ff=a["d_ff"], max_T=a["T_train"], fusion=a["fusion"])

    def train(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(lr=t["lr"], epochs=t["epochs"], batch_size=t["batch_size"],
                           seed=self.seed, clip_norm=t["clip_norm"], betas=(t["beta1"], t["beta2"]),
                           eps=t["eps"], weight_decay=t["weight_decay"], lam_stop=t["lam_stop"],
                           lr_decay=t["lr_decay"], balance_bins=t["balance_bins"])

    def validate(self) -> "RunConfig":
        """Build every module config once so bad values fail before any work starts."""
        try:
            self.teacher(); self.cps(); self.arch(); self.train()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        c = self.values["corpus"]
        if c["size"] < 1 or not 1 <= c["min_len"] <= c["max_len"]:
            raise ConfigError("[corpus] needs size >= 1 and 1 <= min_len <= max_len")
        return self

    def dumps(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for section, keys in self.values.items():
            cp[section] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def snapshot(self, directory) -> Path:
        path = Path(directory) / "config.resolved.ini"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path


def load_config(path=None, overrides: Iterable[str] = (),
                environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    values = {s: {k: default for k, (_, default) in keys.items()} for s, keys in SCHEMA.items()}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in cp[section].items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                values[section][key] = _convert(section, key, raw)

    environ = os.environ if environ is None else environ
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX + "_"):
            continue
        rest = name[len(ENV_PREFIX) + 1:].lower()
        section, _, key = rest.partition("_")
        match = {k.lower(): k for k in SCHEMA.get(section, {})}
        if key not in match:
            raise ConfigError(f"environment variable {name} names no known setting")
        values[section][match[key]] = _convert(section, match[key], raw)

    for item in overrides:
        lhs, sep, raw = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override {item!r} names no known setting")
        values[section][key] = _convert(section, key, raw.strip())
    return RunConfig(values).validate()
