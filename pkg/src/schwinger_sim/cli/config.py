"""TOML run configuration: loading, schema validation and object construction."""

from __future__ import annotations

import json
import re
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from ..design import LITHIUM_6_AMU, POTASSIUM_40_AMU, OpticalLatticeParams
from ..dynamics import Localized, ProtocolSchedule, UniformGradient, ZeroProfile, build_schwinger_protocol
from ..errors import ValidationError
from ..lattice import Boundary, LatticeSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "load_schema",
    "validate_output",
    "DEFAULT_DT_NORM",
    "DEFAULT_PRECISION",
]

DEFAULT_DT_NORM = 0.05
DEFAULT_PRECISION = 17
DEFAULT_GRID_POINTS = 201

ATOMS = {"Li6": LITHIUM_6_AMU, "K40": POTASSIUM_40_AMU}


class ConfigError(ValidationError):
    """Invalid configuration; ``messages`` holds one entry per problem."""

    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


def load_schema(name: str) -> dict:
    text = resources.files("schwinger_sim.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_output(document: dict) -> None:
    """Raise ``jsonschema.ValidationError`` unless ``document`` matches the output schema."""
    jsonschema.validate(document, load_schema("output"))


def _line_of(text: str, path: list) -> int | None:
    """Best-effort line number of the key at the end of ``path``."""
    lines = text.splitlines()
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    section = None
    if len(keys) > 1:
        header = re.compile(r"^\s*\[\s*" + re.escape(".".join(keys[:-1])) + r"\s*\]")
        for i, line in enumerate(lines):
            if header.match(line):
                section = i
                break
    key = re.compile(r"^\s*" + re.escape(keys[-1]) + r"\s*=")
    start = 0 if section is None else section + 1
    for i in range(start, len(lines)):
        if section is not None and i > start and lines[i].lstrip().startswith("["):
            if not lines[i].lstrip().startswith("[" + ".".join(keys[:-1]) + "."):
                break
        if key.match(lines[i]):
            return i + 1
    if section is not None:
        return section + 1
    header = re.compile(r"^\s*\[\s*" + re.escape(".".join(keys)) + r"\s*\]")
    for i, line in enumerate(lines):
        if header.match(line):
            return i + 1
    return None


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration document plus the source text it came from."""

    data: dict
    source: str = ""
    path: str = "<config>"

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    def with_overrides(self, **sections: Any) -> "RunConfig":
        data = json.loads(json.dumps(self.data))
        for key, value in sections.items():
            if isinstance(value, dict):
                data.setdefault(key, {}).update(value)
            else:
                data[key] = value
        return RunConfig(data, self.source, self.path)

    # -- builders -------------------------------------------------------

    def lattice_spec(self) -> LatticeSpec:
        lat = self.section("lattice")
        boundary = Boundary(lat["boundary"])
        if "hopping" in lat:
            return LatticeSpec.from_hopping(lat["num_sites"], lat["hopping"], boundary)
        return LatticeSpec.from_lattice_constant(lat["num_sites"], lat["lattice_constant"], boundary)

    def field_profile(self, spec: LatticeSpec, amplitude: float | None = None):
        fld = self.section("protocol")["field"]
        kind = fld["kind"]
        amp = fld.get("amplitude") if amplitude is None else amplitude
        if kind == "zero" or amp == 0.0:
            return ZeroProfile()
        if kind == "uniform":
            return UniformGradient(float(amp), fld.get("origin"))
        return Localized(fld.get("center", spec.center), fld["width"], float(amp),
                         fld.get("envelope", "step"))

    def schedule(self, spec: LatticeSpec | None = None, *, amplitude: float | None = None,
                 durations=None, M_target: float | None = None) -> ProtocolSchedule:
        spec = self.lattice_spec() if spec is None else spec
        proto = self.section("protocol")
        return build_schwinger_protocol(
            spec,
            proto["M_target"] if M_target is None else M_target,
            proto["M_initial"],
            self.field_profile(spec, amplitude),
            proto["durations"] if durations is None else durations,
            proto.get("shapes"),
            proto.get("field_ramp_duration"),
        )

    def dt_for(self, schedule: ProtocolSchedule) -> float:
        """Configured step, or ``DEFAULT_DT_NORM / max ||H||`` when absent."""
        dt = self.section("protocol").get("dt")
        if dt is not None:
            return float(dt)
        return DEFAULT_DT_NORM / schedule.max_norm()

    @property
    def record_every(self) -> int:
        return int(self.section("protocol").get("record_every", 0))

    @property
    def precision(self) -> int:
        return int(self.section("output").get("precision", DEFAULT_PRECISION))

    def optical_params(self) -> OpticalLatticeParams:
        d = self.section("design")
        mass = d["atom_mass"] if "atom_mass" in d else ATOMS[d["atom"]]
        return OpticalLatticeParams(d["W0"], d["dW"], d["wavelength"], mass, d["temperature"],
                                    d.get("convention", "quarter"))


_REQUIRED = {
    "bands": ("lattice", "bands"),
    "simulate": ("lattice", "protocol"),
    "sweep": ("lattice", "protocol", "sweep"),
    "design": ("design",),
    "oracle-check": (),
}


def _cross_checks(data: dict, mode: str | None) -> list[str]:
    problems = []
    if mode is not None:
        for name in _REQUIRED[mode]:
            if name not in data:
                problems.append(f"[{name}] section is required for '{mode}'")
    lat = data.get("lattice", {})
    proto = data.get("protocol")
    if proto is not None:
        if proto["M_initial"] < proto["M_target"]:
            problems.append("protocol: M_initial must be >= M_target")
        fld = proto["field"]
        has_field = fld["kind"] != "zero" and fld.get("amplitude", 0.0) != 0.0
        sweeping_field = data.get("sweep", {}).get("axis") == "field_amplitude" and fld["kind"] != "zero"
        if (has_field or sweeping_field) and lat.get("boundary") == "periodic":
            problems.append("protocol.field: runs with a field need lattice.boundary = \"open\"")
        if fld["kind"] == "zero" and data.get("sweep", {}).get("axis") == "field_amplitude":
            problems.append("sweep: a field_amplitude sweep needs protocol.field.kind other than \"zero\"")
        frd = proto.get("field_ramp_duration")
        if frd is not None and frd > proto["durations"][2]:
            problems.append("protocol.field_ramp_duration exceeds the third stage duration")
    return problems


def parse_config(text: str, mode: str | None = None, path: str = "<config>") -> RunConfig:
    """Parse and validate TOML ``text``; raise :class:`ConfigError` listing every problem."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    if mode is None:
        mode = data.get("mode")
    elif "mode" in data and data["mode"] != mode:
        raise ConfigError([f"{path}: config is for mode '{data['mode']}', not '{mode}'"])
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    problems = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        line = _line_of(text, list(err.absolute_path))
        prefix = f"{path}:{line}" if line else path
        problems.append(f"{prefix}: {where}: {err.message}")
    if problems:
        raise ConfigError(problems)
    problems = [f"{path}: {p}" for p in _cross_checks(data, mode)]
    if problems:
        raise ConfigError(problems)
    return RunConfig(data, text, path)


def load_config(path: str | Path, mode: str | None = None) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"{p}: cannot read config ({exc.strerror})"]) from exc
    return parse_config(text, mode, str(p))
