"""Flat ``key = value`` experiment configuration and the bundled presets.

Recognised keys (``#`` starts a comment)::

    name                 label used in reports
    domain_length        L
    cell_count           N (fine grid cells)
    pulse                hat | step
    potential            zero | gaussian | file
    potential_amplitude  gaussian a in a*exp(-r (x-c)^2)
    potential_center     gaussian c
    potential_rate       gaussian r
    potential_file       CSV of node values (q, or x,q) for potential = file
    final_time           T
    n_values             comma separated snapshot counts
    courant              dt/h, decimal or fraction such as 32/33 (default 1/2)
    tau_rule             exact (tau from T and n, must align) | snap (nearest aligned tau)
    background           discrete (q = 0 solve with the same scheme) | analytic
    sources              comma separated source positions (default 0); >1 means MIMO
    output_dir           where ``run`` writes its files
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

from ..core import PulseFamily, PulseKind, Potential, SpatialGrid, TimeSampling
from ..errors import GridAlignmentError, ValidationError

PRESET_PACKAGE = "romlift.harness.presets"

_KEYS = {
    "name", "domain_length", "cell_count", "pulse", "potential", "potential_amplitude",
    "potential_center", "potential_rate", "potential_file", "final_time", "n_values",
    "courant", "tau_rule", "background", "sources", "output_dir",
}


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"not a number: {text!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    domain_length: float
    cell_count: int
    pulse: PulseKind
    final_time: float
    n_values: tuple
    name: str = "experiment"
    potential: str = "zero"
    potential_amplitude: float = 0.0
    potential_center: float = 0.0
    potential_rate: float = 1.0
    potential_file: str | None = None
    courant: Fraction = Fraction(1, 2)
    tau_rule: str = "exact"
    background: str = "discrete"
    sources: tuple = (0.0,)
    output_dir: str = "out"
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pulse", PulseKind(self.pulse))
        object.__setattr__(self, "courant", Fraction(self.courant).limit_denominator(10**6))
        object.__setattr__(self, "n_values", tuple(sorted(int(v) for v in self.n_values)))
        if self.potential not in ("zero", "gaussian", "file"):
            raise ValidationError(f"unknown potential {self.potential!r}")
        if self.tau_rule not in ("exact", "snap"):
            raise ValidationError(f"unknown tau_rule {self.tau_rule!r}")
        if self.background not in ("discrete", "analytic"):
            raise ValidationError(f"unknown background {self.background!r}")
        if not 0 < self.courant <= 1:
            raise ValidationError(f"courant ratio must lie in (0, 1], got {self.courant}")
        if not self.n_values or min(self.n_values) < 1:
            raise ValidationError("n_values must list positive integers")
        if len(self.sources) > 1 and self.background != "discrete":
            raise ValidationError("multi-source runs need background = discrete")

    # -- derived objects ------------------------------------------------

    @property
    def is_mimo(self) -> bool:
        return len(self.sources) > 1

    def grid(self) -> SpatialGrid:
        return SpatialGrid(float(self.domain_length), int(self.cell_count))

    def build_potential(self, grid: SpatialGrid | None = None) -> Potential:
        grid = grid or self.grid()
        if self.potential == "zero":
            return Potential.zero(grid)
        if self.potential == "gaussian":
            return Potential.gaussian(grid, self.potential_amplitude, self.potential_center,
                                      self.potential_rate)
        if not self.potential_file:
            raise ValidationError("potential = file needs potential_file")
        path = Path(self.potential_file)
        if not path.is_absolute():
            path = self.base_dir / path
        return Potential.from_file(grid, path)

    def pulse_width(self, n: int) -> int:
        """tau/h for snapshot count ``n`` after applying ``tau_rule``."""
        grid = self.grid()
        T = self.final_time
        ideal = T / n if self.pulse is PulseKind.HAT else T / (n - 0.5)
        target = grid.cells_per(ideal)
        # tau/dt = (tau/h) / courant must be an integer
        mult = self.courant.numerator
        odd = self.pulse is PulseKind.STEP

        def ok(m):
            return m >= 2 and m % mult == 0 and (not odd or m % 2 == 1)

        if self.tau_rule == "exact":
            m = round(target)
            if abs(target - m) > 1e-9 * max(1.0, target) or not ok(m):
                need = "an odd integer" if odd else "an integer"
                extra = f" divisible by {mult}" if mult > 1 else ""
                raise GridAlignmentError(
                    f"n={n}: tau/h = {target:.10g} must be {need}{extra} "
                    f"(use tau_rule = snap to round it)"
                )
            return m
        best = None
        for d in range(0, 4 * mult + 4):
            for m in (math.floor(target) - d, math.ceil(target) + d):
                if ok(m) and (best is None or abs(m - target) < abs(best - target)):
                    best = m
            if best is not None and d > 2 * mult:
                break
        if best is None:
            raise GridAlignmentError(f"n={n}: no admissible tau near {ideal:g}")
        return best

    def family(self, n: int) -> PulseFamily:
        return PulseFamily(self.pulse, self.pulse_width(n) * self.grid().step)

    def sampling(self, n: int) -> TimeSampling:
        fam = self.family(n)
        s = TimeSampling.for_pulse(fam, n)
        s.validate(fam, self.grid())
        return s

    def validate(self) -> "ExperimentConfig":
        grid = self.grid()
        self.build_potential(grid)
        for n in self.n_values:
            fam = self.family(n)
            fam.width_nodes(grid)
            self.sampling(n)
            for p in self.sources:
                if p:
                    grid.aligned_count(p, "source position")
        return self

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    # -- text form ------------------------------------------------------

    def to_text(self) -> str:
        lines = [
            f"name = {self.name}",
            f"domain_length = {self.domain_length:g}",
            f"cell_count = {self.cell_count}",
            f"pulse = {self.pulse.value}",
            f"potential = {self.potential}",
        ]
        if self.potential == "gaussian":
            lines += [
                f"potential_amplitude = {self.potential_amplitude:g}",
                f"potential_center = {self.potential_center:g}",
                f"potential_rate = {self.potential_rate:g}",
            ]
        if self.potential == "file":
            lines.append(f"potential_file = {self.potential_file}")
        lines += [
            f"final_time = {self.final_time:g}",
            "n_values = " + ", ".join(str(v) for v in self.n_values),
            f"courant = {self.courant}",
            f"tau_rule = {self.tau_rule}",
            f"background = {self.background}",
            "sources = " + ", ".join(f"{p:g}" for p in self.sources),
            f"output_dir = {self.output_dir}",
        ]
        return "\n".join(lines) + "\n"


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    raw = dict(cp["config"])
    unknown = set(raw) - _KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for req in ("domain_length", "cell_count", "pulse", "final_time", "n_values"):
        if req not in raw:
            raise ValidationError(f"missing config key {req!r}")
    kw = {}
    for key, val in raw.items():
        if key in ("domain_length", "final_time", "potential_amplitude", "potential_center",
                   "potential_rate"):
            kw[key] = _number(val)
        elif key == "cell_count":
            c = _number(val)
            if c != int(c):
                raise ValidationError("cell_count must be an integer")
            kw[key] = int(c)
        elif key == "n_values":
            kw[key] = tuple(int(_number(v)) for v in val.split(",") if v.strip())
        elif key == "sources":
            kw[key] = tuple(_number(v) for v in val.split(",") if v.strip())
        elif key == "courant":
            kw[key] = Fraction(val.strip())
        else:
            kw[key] = val.strip()
    try:
        return ExperimentConfig(base_dir=Path(base_dir), **kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def preset_names():
    files = resources.files(PRESET_PACKAGE).iterdir()
    return sorted(p.name[:-4] for p in files if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    res = resources.files(PRESET_PACKAGE) / f"{name}.cfg"
    if not res.is_file():
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))


def resolve(target: str) -> ExperimentConfig:
    """A path to a config file, or the name of a bundled preset."""
    p = Path(target)
    if p.is_file():
        return load_config(p)
    return load_preset(target)
