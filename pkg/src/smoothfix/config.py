"""TOML experiment configs: parsing, schema validation, object builders."""

import math
import re
import sys

import jsonschema
import numpy as np

from .artifacts import load_schema
from .stable import SpectralMeasure, StableLawSpec, sample_stable, stable_cf
from .weights import WeightModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)


def _locate(text, keys):
    """1-based line where the key path ``keys`` is set, or None.

    Looks for the deepest ``[table]`` header on the path, then for the next
    key inside that table; falls back to the header line itself.
    """
    lines = text.splitlines()
    keys = [k for k in keys if isinstance(k, str)]
    if not keys:
        return None

    def header(prefix):
        pat = re.compile(r"^\s*\[{1,2}\s*" + r"\s*\.\s*".join(map(re.escape, prefix))
                         + r"\s*\]{1,2}\s*(#.*)?$")
        return next((i for i, s in enumerate(lines) if pat.match(s)), None)

    def key_line(key, start, end):
        pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
        return next((i + 1 for i in range(start, end) if pat.match(lines[i])), None)

    def table_end(start):
        return next((i for i in range(start, len(lines)) if re.match(r"^\s*\[", lines[i])),
                    len(lines))

    for k in range(len(keys), 0, -1):
        h = header(keys[:k])
        if h is not None:
            if k == len(keys):
                return h + 1
            return key_line(keys[k], h + 1, table_end(h + 1)) or h + 1
    return key_line(keys[0], 0, table_end(0))


def parse_config(text, path=None):
    """Parse TOML text and validate it against the shipped config schema."""
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, path)
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        keys = list(err.absolute_path)
        if err.validator == "additionalProperties":
            bad = re.findall(r"'([^']+)' was unexpected", err.message)
            keys = keys + bad[:1]
        dotted = ".".join(map(str, err.absolute_path)) or "<top level>"
        raise ConfigError(f"{dotted}: {err.message}", _locate(text, keys), path)
    return cfg


def validate_config(cfg):
    """Schema check of an already parsed (and possibly amended) config dict."""
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    err = jsonschema.exceptions.best_match(
        jsonschema.Draft202012Validator(load_schema("config")).iter_errors(clean))
    if err is not None:
        dotted = ".".join(map(str, err.absolute_path)) or "<top level>"
        raise ConfigError(f"{dotted}: {err.message}")
    return cfg


def load_config(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"not UTF-8: {exc}", None, path)
    cfg = parse_config(text, path)
    cfg["_source"] = text
    return cfg


def build_model(cfg, text=None):
    section = dict(cfg["model"])
    try:
        return WeightModel.from_dict(section)
    except (ValueError, TypeError, ImportError, AttributeError) as exc:
        raise ConfigError(f"model: {exc}", _locate(text or "", ["model", "kind"]))


def build_stable(cfg, d, text=None):
    section = cfg.get("stable")
    if section is None:
        return None
    section = dict(section)
    section.setdefault("d", d)
    try:
        return StableLawSpec.from_dict(section)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"stable: {exc}", _locate(text or "", ["stable", "regime"]))


class LawSampler:
    """Named reference laws in d = 1 with samplers and closed-form CFs."""

    def __init__(self, kind, value=0.0, scale=1.0, alpha=None):
        self.kind, self.value, self.scale, self.alpha = kind, float(value), float(scale), alpha
        if kind == "stable":
            self.spec = StableLawSpec(alpha, SpectralMeasure.from_directions(
                [[1.0]], [self.scale ** alpha], True), "symmetric")

    def __call__(self, rng, size):
        if self.kind == "point":
            return np.full((size, 1), self.value)
        if self.kind == "normal":
            return self.value + self.scale * rng.standard_normal((size, 1))
        if self.kind == "uniform":
            return rng.uniform(self.value - self.scale, self.value + self.scale, (size, 1))
        return self.value + sample_stable(self.spec, rng, size)

    def cf(self, pts):
        t = np.asarray(pts, dtype=float)[:, 0]
        shift = np.exp(1j * self.value * t)
        if self.kind == "point":
            return shift
        if self.kind == "normal":
            return shift * np.exp(-0.5 * (self.scale * t) ** 2)
        if self.kind == "uniform":
            return shift * np.sinc(self.scale * t / math.pi)
        return shift * stable_cf(self.spec, t[:, None])

    def to_dict(self):
        out = {"law": self.kind, "value": self.value, "scale": self.scale}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out
