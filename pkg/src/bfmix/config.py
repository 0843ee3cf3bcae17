"""Run configuration: dotted ``section.key = value`` text, validated all at once.

Example::

    grid.n = 48
    grid.dx = 3.0
    particles.N_B = 40
    particles.N_F = 4
    particles.w = 22.1666666666667
    method.kind = ITP_ITP_GS

Lines starting with ``#`` are comments.  Unset keys take the defaults in
:data:`SCHEMA`; a ``None`` default marks either a required key (see
:data:`REQUIRED`) or a value derived from other keys after parsing.
"""

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from .hobasis import CACHED_3D, ONTHEFLY_1D, STRATEGIES
from .methods import DEFAULT_DT, ConvergenceCriteria, MethodKind
from .physics import MixtureParams


class ConfigError(ValueError):
    """Carries every problem found, each prefixed by its key path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _grid_n(text):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) not in (1, 3):
        raise ValueError("expected one or three integers")
    n = tuple(_int(p) for p in parts)
    return n * 3 if len(n) == 1 else n


def _g_units(text):
    t = text.strip().lower().replace(" ", "")
    if t in ("4pi", "4*pi"):
        return "4pi"
    return repr(float(t))


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _optional_int(text):
    return None if text.strip().lower() in ("", "none") else _int(text)


def _method_kind(text):
    try:
        return MethodKind(text.strip().upper().replace("-", "_")).value
    except ValueError:
        raise ValueError(f"unknown method {text.strip()!r}; choose from {[m.value for m in MethodKind]}") from None


def _strategy(text):
    t = text.strip()
    if t.lower() in ("", "none"):
        return None
    if t not in STRATEGIES:
        raise ValueError(f"unknown strategy {t!r}; choose from {list(STRATEGIES)}")
    return t


# key -> (parser, default)
SCHEMA = {
    "grid.n": (_grid_n, None),
    "grid.dx": (float, None),
    "particles.N_B": (float, None),
    "particles.N_F": (_int, None),
    "particles.w": (float, None),
    "trap.omega_B": (float, 0.04),
    "trap.omega_F": (float, 0.16),
    "interaction.g_B_units": (_g_units, "4pi"),
    "interaction.g_BF_over_gB": (float, 0.0),
    "method.kind": (_method_kind, None),
    "method.dt": (_optional_float, None),
    "method.t_f": (float, 2e4),
    "method.post_ramp_windows": (_int, 20),
    "method.N_shell": (_int, 16),
    "method.strategy": (_strategy, None),
    "method.max_outer": (_int, 200),
    "convergence.energy_tol": (float, 1e-7),
    "convergence.density_tol": (float, 1e-8),
    "convergence.window": (_int, 2000),
    "convergence.max_steps": (_int, 10**6),
    "runtime.threads": (_int, 1),
    "runtime.memory_cap": (_optional_int, None),
    "runtime.output_dir": (str, "bfmix_out"),
    "runtime.checkpoint_every": (_int, 0),
    "runtime.afun_cache": (str, ""),
    "runtime.afun_nodes": (_int, 256),
    "release.enabled": (_bool, False),
    "release.duration": (float, 1000.0),
    "release.dt": (float, 0.05),
    "release.snapshot_every": (_int, 200),
}
REQUIRED = ("grid.n", "grid.dx", "particles.N_B", "particles.N_F", "particles.w", "method.kind")
# runtime knobs that do not change the computed numbers
_NON_PHYSICAL = ("runtime.threads", "runtime.output_dir", "runtime.checkpoint_every", "runtime.afun_cache")


def _attr(key):
    return key.replace(".", "__")


@dataclass(frozen=True)
class RunConfig:
    grid__n: tuple
    grid__dx: float
    particles__N_B: float
    particles__N_F: int
    particles__w: float
    trap__omega_B: float
    trap__omega_F: float
    interaction__g_B_units: str
    interaction__g_BF_over_gB: float
    method__kind: str
    method__dt: float
    method__t_f: float
    method__post_ramp_windows: int
    method__N_shell: int
    method__strategy: str
    method__max_outer: int
    convergence__energy_tol: float
    convergence__density_tol: float
    convergence__window: int
    convergence__max_steps: int
    runtime__threads: int
    runtime__memory_cap: int
    runtime__output_dir: str
    runtime__checkpoint_every: int
    runtime__afun_cache: str
    runtime__afun_nodes: int
    release__enabled: bool
    release__duration: float
    release__dt: float
    release__snapshot_every: int

    def get(self, key):
        return getattr(self, _attr(key))

    def replace(self, **updates):
        """Copy with dotted-key updates, revalidated."""
        values = self.as_dict()
        for key, value in updates.items():
            values[key.replace("__", ".")] = value
        return from_values(values)

    def as_dict(self):
        return {f.name.replace("__", "."): getattr(self, f.name) for f in fields(self)}

    @property
    def kind(self):
        return MethodKind(self.method__kind)

    @property
    def g_B(self):
        u = self.interaction__g_B_units
        return 4.0 * np.pi if u == "4pi" else float(u)

    def params(self):
        return MixtureParams(
            N_B=self.particles__N_B,
            N_F=self.particles__N_F,
            w=self.particles__w,
            omega_B=self.trap__omega_B,
            omega_F=self.trap__omega_F,
            g_BF_over_gB=self.interaction__g_BF_over_gB,
            g_B=self.g_B,
        )

    def criteria(self):
        return ConvergenceCriteria(
            energy_tol=self.convergence__energy_tol,
            density_tol=self.convergence__density_tol,
            window=self.convergence__window,
            max_steps=self.convergence__max_steps,
        )

    def config_hash(self):
        """Digest of every setting that influences the computed state."""
        text = serialize(self, skip=_NON_PHYSICAL)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(config, skip=()):
    """Canonical text form; :func:`parse_config` of it gives back an equal config."""
    return "".join(f"{k} = {_format(v)}\n" for k, v in config.as_dict().items() if k not in skip)


def parse_config(text):
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    raw, errors = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'section.key = value', got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            errors.append(f"{key}: given more than once")
        raw[key] = value
    values = {}
    for key, text_value in raw.items():
        if key not in SCHEMA:
            errors.append(f"{key}: unknown key")
            continue
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(text_value)
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
    return from_values(values, errors)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def from_values(values, errors=None):
    """Fill defaults, derive dependent values and check constraints."""
    errors = list(errors or [])
    v = {k: d for k, (_, d) in SCHEMA.items()}
    v.update({k: val for k, val in values.items() if k in SCHEMA})
    for key in REQUIRED:
        if v[key] is None and not any(e.startswith(key + ":") for e in errors):
            errors.append(f"{key}: required")

    def bad(key, cond, msg):
        if v.get(key) is not None and not any(e.startswith(key + ":") for e in errors) and cond(v[key]):
            errors.append(f"{key}: {msg}")

    bad("grid.n", lambda n: any(x < 4 or x % 2 for x in n), "every axis needs an even count of at least 4")
    bad("grid.dx", lambda x: not x > 0, "must be positive")
    bad("particles.N_B", lambda x: not x > 0, "must be positive")
    bad("particles.N_F", lambda x: x < 1, "must be at least 1")
    bad("particles.w", lambda x: not x > 0, "must be positive")
    bad("trap.omega_B", lambda x: x < 0, "must be non-negative")
    bad("trap.omega_F", lambda x: x < 0, "must be non-negative")
    bad("interaction.g_B_units", lambda x: x != "4pi" and not float(x) > 0, "must be positive")
    bad("method.dt", lambda x: not x > 0, "must be positive")
    bad("method.t_f", lambda x: not x > 0, "must be positive")
    bad("method.post_ramp_windows", lambda x: x < 1, "must be at least 1")
    bad("method.N_shell", lambda x: x < 0, "must be non-negative")
    bad("method.max_outer", lambda x: x < 1, "must be at least 1")
    bad("convergence.energy_tol", lambda x: not x > 0, "must be positive")
    bad("convergence.density_tol", lambda x: not x > 0, "must be positive")
    bad("convergence.window", lambda x: x < 1, "must be at least 1")
    bad("convergence.max_steps", lambda x: x < 1, "must be at least 1")
    bad("runtime.threads", lambda x: x < 1, "must be at least 1")
    bad("runtime.memory_cap", lambda x: x <= 0, "must be positive")
    bad("runtime.checkpoint_every", lambda x: x < 0, "must be non-negative (0 disables checkpoints)")
    bad("runtime.afun_nodes", lambda x: x < 64, "must be at least 64")
    bad("release.duration", lambda x: not x > 0, "must be positive")
    bad("release.dt", lambda x: not x > 0, "must be positive")
    bad("release.snapshot_every", lambda x: x < 1, "must be at least 1")

    kind = v["method.kind"]
    if kind is not None and not any(e.startswith("method.kind:") for e in errors):
        if v["method.dt"] is None:
            v["method.dt"] = DEFAULT_DT[MethodKind(kind)]
        implied = {MethodKind.ITP_IEV_3D.value: CACHED_3D, MethodKind.ITP_IEV_1D.value: ONTHEFLY_1D}.get(kind)
        if implied is not None:
            if v["method.strategy"] is None:
                v["method.strategy"] = implied
            elif v["method.strategy"] != implied:
                errors.append(f"method.strategy: {v['method.strategy']} contradicts method.kind = {kind}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(**{_attr(k): val for k, val in v.items()})
