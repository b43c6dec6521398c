"""Experiment configuration: a sectioned ``key = value`` text format.

Example::

    [experiment]
    kind = ss
    seed = 7
    T = 2000

    [class]
    source = file
    file = classes/hard.json

Lines starting with ``#`` or ``;`` are comments. Every problem found is
reported with its line number; parsing never stops at the first error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("ss", "ss-dis", "ss-m", "bandit", "bandit-2q", "il", "il-m", "bc-vs-il", "complexity")
CLASS_SOURCES = ("file", "random", "hard-margin")
ENV_KINDS = ("tree", "chain")
AGGREGATORS = ("random-mix", "majority", "confident-majority")

REQUIRED = object()


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# section -> key -> (attribute, parser, default)
SCHEMA = {
    "experiment": {
        "kind": ("kind", _choice(KINDS), REQUIRED),
        "seed": ("seed", int, REQUIRED),
        "T": ("T", int, None),
        "H": ("H", int, None),
        "K": ("K", int, 2),
        "M": ("M", int, 3),
        "delta": ("delta", float, 0.1),
        "eps_grid": ("eps_grid", _float_list, (0.05, 0.1, 0.2, 0.4)),
        "link": ("link", _choice(("identity", "softmax")), "identity"),
        "lambda": ("lam", float, None),
        "gamma": ("gamma", float, None),
        "runs": ("runs", int, 1),
        "beta": ("beta", float, 0.1),
        "zeta": ("zeta", float, None),
        "eps0": ("eps0", float, 0.1),
    },
    "class": {
        "source": ("class_source", _choice(CLASS_SOURCES), "random"),
        "file": ("class_file", str, None),
        "members": ("members", int, 16),
        "contexts": ("contexts", int, 8),
    },
    "oracle": {
        "eta": ("eta", float, None),
        "reference_widths": ("reference_widths", _bool, False),
        "resolution": ("resolution", float, 0.05),
        "xi_threshold": ("xi_threshold", float, None),
        "aggregator": ("aggregator", _choice(AGGREGATORS), "random-mix"),
        "rho": ("rho", float, 0.2),
    },
    "env": {
        "kind": ("env", _choice(ENV_KINDS), "tree"),
        "bernoulli": ("bernoulli", _bool, False),
        "regions": ("regions", int, 3),
        "demos": ("demos", int, None),
    },
    "output": {
        "dir": ("out_dir", str, "out"),
        "svg": ("svg", _bool, True),
    },
}


class ConfigError(ValueError):
    """All problems found in a configuration, one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class ExperimentConfig:
    kind: str = "ss"
    seed: int = 0
    T: int | None = None
    H: int | None = None
    K: int = 2
    M: int = 3
    delta: float = 0.1
    eps_grid: tuple = (0.05, 0.1, 0.2, 0.4)
    link: str = "identity"
    lam: float | None = None
    gamma: float | None = None
    runs: int = 1
    beta: float = 0.1
    zeta: float | None = None
    eps0: float = 0.1
    class_source: str = "random"
    class_file: str | None = None
    members: int = 16
    contexts: int = 8
    eta: float | None = None
    reference_widths: bool = False
    resolution: float = 0.05
    xi_threshold: float | None = None
    aggregator: str = "random-mix"
    rho: float = 0.2
    env: str = "tree"
    bernoulli: bool = False
    regions: int = 3
    demos: int | None = None
    out_dir: str = "out"
    svg: bool = True
    base_dir: str = "."
    lines: dict = field(default_factory=dict, repr=False)

    def class_path(self) -> Path | None:
        if self.class_file is None:
            return None
        p = Path(self.class_file)
        return p if p.is_absolute() else Path(self.base_dir) / p


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every violation."""
    errors = []
    values = {}
    lines = {}
    bad = set()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {line!r}")
                continue
            section = line[1:-1].strip()
            if section not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, _, value = (s.strip() for s in line.partition("="))
        if section is None:
            errors.append(f"line {lineno}: key {key!r} outside any section")
            continue
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        attr, parser, _ = SCHEMA[section][key]
        if attr in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[attr] = parser(value)
            lines[attr] = lineno
        except ValueError as exc:
            bad.add(attr)
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")

    for sec, keys in SCHEMA.items():
        for key, (attr, _, default) in keys.items():
            if default is REQUIRED and attr not in values and attr not in bad:
                errors.append(f"line 0: missing required key {key!r} in [{sec}]")

    cfg = ExperimentConfig(base_dir=str(base_dir), lines=lines,
                           **{k: v for k, v in values.items()})
    if "kind" in values and "seed" in values:
        errors.extend(_validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate(cfg: ExperimentConfig) -> list:
    errs = []

    def at(attr):
        return f"line {cfg.lines.get(attr, 0)}"

    if cfg.kind != "complexity" and cfg.T is None:
        errs.append(f"line 0: missing required key 'T' in [experiment] for kind={cfg.kind}")
    if cfg.kind in ("il", "il-m", "bc-vs-il") and cfg.H is None:
        errs.append(f"line 0: missing required key 'H' in [experiment] for kind={cfg.kind}")
    if cfg.T is not None and cfg.T < 3:
        errs.append(f"{at('T')}: T must be at least 3")
    if cfg.H is not None and cfg.H < 1:
        errs.append(f"{at('H')}: H must be positive")
    if not 0 < cfg.delta < 1:
        errs.append(f"{at('delta')}: delta must lie in (0, 1)")
    if cfg.seed < 0:
        errs.append(f"{at('seed')}: seed must be nonnegative")
    if cfg.K < 2:
        errs.append(f"{at('K')}: K must be at least 2")
    if cfg.M < 1:
        errs.append(f"{at('M')}: M must be positive")
    if cfg.runs < 1:
        errs.append(f"{at('runs')}: runs must be positive")
    if cfg.eta is not None and cfg.eta < 0:
        errs.append(f"{at('eta')}: eta must be nonnegative")
    if cfg.resolution <= 0:
        errs.append(f"{at('resolution')}: resolution must be positive")
    if any(e < 0 for e in cfg.eps_grid):
        errs.append(f"{at('eps_grid')}: eps values must be nonnegative")
    if cfg.class_source == "file" and cfg.class_file is None:
        errs.append("line 0: missing required key 'file' in [class] for source=file")
    if cfg.kind == "complexity" and cfg.class_source == "hard-margin" and cfg.K != 2:
        errs.append(f"{at('K')}: hard-margin classes need K=2")
    if cfg.link == "softmax" and cfg.kind in ("bandit", "bandit-2q"):
        errs.append(f"{at('link')}: bandit kinds use the identity link")
    if cfg.kind in ("il", "il-m", "bc-vs-il") and cfg.env == "tree" and cfg.H is not None \
            and not 2 <= cfg.H <= 14:
        errs.append(f"{at('H')}: tree environments need 2 <= H <= 14")
    if cfg.kind == "il-m" and cfg.env != "chain":
        errs.append(f"{at('env')}: kind=il-m needs env kind=chain")
    if cfg.kind == "bc-vs-il" and cfg.env != "tree":
        errs.append(f"{at('env')}: kind=bc-vs-il needs env kind=tree")
    return errs
