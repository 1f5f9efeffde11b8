"""Scenario description: array geometry, targets, powers, and LoS channels.

Angles are accepted in degrees at every public boundary and converted to
radians only inside trigonometric kernels.  Powers are stored in linear
milliwatts; dBm is converted once at parse time (P_mW = 10^(dBm/10)).

Channel convention: channels are stored as plain column vectors (gain times
steering vector).  Quadratic forms elsewhere apply the conjugate transpose
at the use site, so ``g^H W g`` is written ``g.conj() @ W @ g``.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import yaml


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario description."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        raise ScenarioError(f"cannot express non-positive power {mw} mW in dBm")
    return 10.0 * np.log10(mw)


def steering_vector(angle_deg: float, num_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Array response of a ULA toward ``angle_deg``.

    Entry m (0-based) is exp(i 2 pi m (d/lambda) sin(angle)); entry 0 is 1.
    """
    if num_antennas < 1:
        raise ScenarioError(f"num_antennas must be >= 1, got {num_antennas}")
    if not -90.0 <= angle_deg <= 90.0:
        raise ScenarioError(f"angle {angle_deg} deg outside [-90, 90]")
    phase = 2.0 * np.pi * spacing_ratio * np.sin(np.deg2rad(angle_deg))
    return np.exp(1j * phase * np.arange(num_antennas))


@dataclass(frozen=True)
class LambdaGridSpec:
    """Logarithmic grid for the 1D search over the eavesdropper-SINR cap."""

    lo: float = 1e-3
    hi: float = 1e3
    count: int = 25

    def points(self) -> np.ndarray:
        return np.logspace(np.log10(self.lo), np.log10(self.hi), self.count)

    def validate(self) -> None:
        if not (0 < self.lo <= self.hi):
            raise ScenarioError(f"lambda grid bounds must satisfy 0 < lo <= hi, got ({self.lo}, {self.hi})")
        if self.count < 1:
            raise ScenarioError(f"lambda grid needs at least one point, got {self.count}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable description of one secure ISAC design problem.

    ``untrusted_indices`` are 0-based positions into ``target_angles``.
    Scenario files use the 1-based convention instead; ``parse_scenario``
    converts.
    """

    num_antennas: int
    num_rf_links: int
    target_angles: tuple[float, ...]
    untrusted_indices: tuple[int, ...]
    total_power_mw: float
    noise_user_mw: float
    secrecy_floor: float
    user_angle: float = 0.0
    spacing_ratio: float = 0.5
    user_channel_gain: complex = 1.0 + 0.0j
    target_gains: tuple[complex, ...] | None = None
    per_antenna_cap_mw: float | None = None
    noise_targets_mw: tuple[float, ...] | None = None
    beam_halfwidth: float = 5.0
    grid_size: int = 181
    penalty: float = 0.0
    lambda_grid: LambdaGridSpec = field(default_factory=LambdaGridSpec)

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_angles", tuple(float(a) for a in self.target_angles))
        object.__setattr__(self, "untrusted_indices", tuple(int(i) for i in self.untrusted_indices))
        if self.target_gains is not None:
            object.__setattr__(self, "target_gains", tuple(complex(g) for g in self.target_gains))
        if self.noise_targets_mw is not None:
            object.__setattr__(self, "noise_targets_mw", tuple(float(v) for v in self.noise_targets_mw))
        object.__setattr__(self, "user_channel_gain", complex(self.user_channel_gain))
        self.validate()

    # --- resolved views of optional fields -------------------------------
    @property
    def num_targets(self) -> int:
        return len(self.target_angles)

    def gains(self) -> tuple[complex, ...]:
        if self.target_gains is None:
            return tuple(1.0 + 0.0j for _ in self.target_angles)
        return self.target_gains

    def antenna_cap_mw(self) -> float:
        return self.total_power_mw if self.per_antenna_cap_mw is None else self.per_antenna_cap_mw

    def target_noise_mw(self) -> tuple[float, ...]:
        if self.noise_targets_mw is None:
            return tuple(self.noise_user_mw for _ in self.target_angles)
        return self.noise_targets_mw

    def grid_angles(self) -> np.ndarray:
        return np.linspace(-90.0, 90.0, self.grid_size)

    def validate(self) -> None:
        M, G = self.num_antennas, self.num_rf_links
        if M < 1:
            raise ScenarioError(f"num_antennas must be positive, got {M}")
        if not 1 <= G <= M:
            raise ScenarioError(f"need 1 <= num_rf_links <= num_antennas, got G={G}, M={M}")
        if self.num_targets == 0:
            raise ScenarioError("at least one target required")
        if not self.untrusted_indices:
            raise ScenarioError("untrusted_indices must be nonempty for the secrecy constraint to bind")
        bad = [i for i in self.untrusted_indices if not 0 <= i < self.num_targets]
        if bad:
            raise ScenarioError(f"untrusted indices {bad} outside target range 0..{self.num_targets - 1}")
        if len(set(self.untrusted_indices)) != len(self.untrusted_indices):
            raise ScenarioError("untrusted_indices contains duplicates")
        for name, ang in [("user_angle", self.user_angle)] + [
            (f"target_angles[{i}]", a) for i, a in enumerate(self.target_angles)
        ]:
            if not -90.0 <= ang <= 90.0:
                raise ScenarioError(f"{name} = {ang} deg outside [-90, 90]")
        if self.spacing_ratio <= 0:
            raise ScenarioError(f"spacing_ratio must be positive, got {self.spacing_ratio}")
        if self.total_power_mw <= 0:
            raise ScenarioError(f"total_power_mw must be positive, got {self.total_power_mw}")
        if self.antenna_cap_mw() <= 0:
            raise ScenarioError(f"per_antenna_cap_mw must be positive, got {self.antenna_cap_mw()}")
        if self.antenna_cap_mw() * G < self.total_power_mw * (1 - 1e-12):
            raise ScenarioError(
                f"per_antenna_cap_mw * G = {self.antenna_cap_mw() * G} cannot carry "
                f"total_power_mw = {self.total_power_mw}"
            )
        if self.noise_user_mw <= 0:
            raise ScenarioError(f"noise_user_mw must be positive, got {self.noise_user_mw}")
        if any(v <= 0 for v in self.target_noise_mw()):
            raise ScenarioError("all target noise powers must be positive")
        if self.target_gains is not None and len(self.target_gains) != self.num_targets:
            raise ScenarioError(
                f"target_gains has {len(self.target_gains)} entries for {self.num_targets} targets"
            )
        if self.noise_targets_mw is not None and len(self.noise_targets_mw) != self.num_targets:
            raise ScenarioError(
                f"noise_targets_mw has {len(self.noise_targets_mw)} entries for {self.num_targets} targets"
            )
        if self.beam_halfwidth <= 0:
            raise ScenarioError(f"beam_halfwidth must be positive, got {self.beam_halfwidth}")
        if self.grid_size < 2:
            raise ScenarioError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.penalty < 0:
            raise ScenarioError(f"penalty must be >= 0, got {self.penalty}")
        self.lambda_grid.validate()

    def scaled_powers(self, factor: float) -> "ScenarioConfig":
        """Copy with every power and noise multiplied by ``factor``.

        SINRs and the secrecy rate are invariant under this scaling; the
        optimizer uses it to solve in units of the total power budget.
        """
        return replace(
            self,
            total_power_mw=self.total_power_mw * factor,
            per_antenna_cap_mw=self.antenna_cap_mw() * factor,
            noise_user_mw=self.noise_user_mw * factor,
            noise_targets_mw=tuple(v * factor for v in self.target_noise_mw()),
        )


@dataclass(eq=False)
class ChannelSet:
    """LoS channels: user vector (M,) and per-target matrix (T, M)."""

    user: np.ndarray
    targets: np.ndarray
    user_angle: float
    target_angles: tuple[float, ...]

    def __post_init__(self) -> None:
        self.user = np.asarray(self.user, dtype=complex)
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=complex))
        self.user.setflags(write=False)
        self.targets.setflags(write=False)

    @property
    def num_antennas(self) -> int:
        return self.user.shape[0]


def build_channels(cfg: ScenarioConfig) -> ChannelSet:
    """LoS channels: user gain times a(user angle), per-target gain times a(theta_j)."""
    M = cfg.num_antennas
    user = cfg.user_channel_gain * steering_vector(cfg.user_angle, M, cfg.spacing_ratio)
    targets = np.stack(
        [g * steering_vector(a, M, cfg.spacing_ratio) for g, a in zip(cfg.gains(), cfg.target_angles)]
    )
    return ChannelSet(user=user, targets=targets, user_angle=cfg.user_angle, target_angles=cfg.target_angles)


# --- flat YAML scenario documents ----------------------------------------
#
# Keys match the field names above.  Powers carry an explicit unit suffix:
# either "<name>_dbm" or "<name>_mw".  ``untrusted_indices`` are 1-based in
# the file (first listed target is 1).  Complex gains may be written as a
# real number, as "a+bj", or as a [re, im] pair.

_POWER_FIELDS = ("total_power", "per_antenna_cap", "noise_user", "noise_targets")


def _parse_complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise ScenarioError(f"cannot parse complex value {value!r}") from exc
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ScenarioError(f"cannot parse complex value {value!r}")


def _take_power(doc: dict, name: str):
    """Pop ``<name>_dbm`` or ``<name>_mw`` from doc, return mW (scalar or list)."""
    key_dbm, key_mw = f"{name}_dbm", f"{name}_mw"
    if key_dbm in doc and key_mw in doc:
        raise ScenarioError(f"give exactly one of {key_dbm} / {key_mw}")
    if key_dbm in doc:
        raw = doc.pop(key_dbm)
        if isinstance(raw, (list, tuple)):
            return [dbm_to_mw(float(v)) for v in raw]
        return dbm_to_mw(float(raw))
    if key_mw in doc:
        raw = doc.pop(key_mw)
        if isinstance(raw, (list, tuple)):
            return [float(v) for v in raw]
        return float(raw)
    return None


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse a flat YAML scenario document into a validated config."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario document is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping of keys to values")
    doc = dict(doc)

    def need(key):
        if key not in doc:
            raise ScenarioError(f"missing required key {key!r}")
        return doc.pop(key)

    M = int(need("num_antennas"))
    G = int(need("num_rf_links"))
    if G >= M:
        # scenario files describe the limited-RF-link setting; G < M required
        raise ScenarioError(f"G < M required (got num_rf_links={G}, num_antennas={M})")
    target_angles = [float(a) for a in need("target_angles")]
    untrusted_1based = need("untrusted_indices")
    untrusted = []
    for j in untrusted_1based:
        j = int(j)
        if not 1 <= j <= len(target_angles):
            raise ScenarioError(f"untrusted index {j} outside 1..{len(target_angles)} (indices are 1-based)")
        untrusted.append(j - 1)

    total_power = _take_power(doc, "total_power")
    if total_power is None:
        raise ScenarioError("missing required key 'total_power_dbm' or 'total_power_mw'")
    noise_user = _take_power(doc, "noise_user")
    if noise_user is None:
        raise ScenarioError("missing required key 'noise_user_dbm' or 'noise_user_mw'")
    per_antenna_cap = _take_power(doc, "per_antenna_cap")
    noise_targets = _take_power(doc, "noise_targets")
    if isinstance(noise_targets, (int, float)):
        noise_targets = [noise_targets] * len(target_angles)

    kwargs = {}
    if "user_angle" in doc:
        kwargs["user_angle"] = float(doc.pop("user_angle"))
    if "spacing_ratio" in doc:
        kwargs["spacing_ratio"] = float(doc.pop("spacing_ratio"))
    if "user_channel_gain" in doc:
        kwargs["user_channel_gain"] = _parse_complex(doc.pop("user_channel_gain"))
    if "target_gains" in doc:
        kwargs["target_gains"] = tuple(_parse_complex(g) for g in doc.pop("target_gains"))
    if "beam_halfwidth" in doc:
        kwargs["beam_halfwidth"] = float(doc.pop("beam_halfwidth"))
    if "grid_size" in doc:
        kwargs["grid_size"] = int(doc.pop("grid_size"))
    if "penalty" in doc:
        kwargs["penalty"] = float(doc.pop("penalty"))
    if "lambda_grid" in doc:
        raw = doc.pop("lambda_grid")
        if not isinstance(raw, (list, tuple)) or len(raw) != 3:
            raise ScenarioError("lambda_grid must be a [lo, hi, count] triple")
        kwargs["lambda_grid"] = LambdaGridSpec(float(raw[0]), float(raw[1]), int(raw[2]))
    secrecy_floor = float(need("secrecy_floor"))
    if doc:
        raise ScenarioError(f"unrecognized keys in scenario document: {sorted(doc)}")

    try:
        return ScenarioConfig(
            num_antennas=M,
            num_rf_links=G,
            target_angles=tuple(target_angles),
            untrusted_indices=tuple(untrusted),
            total_power_mw=float(total_power),
            noise_user_mw=float(noise_user),
            secrecy_floor=secrecy_floor,
            per_antenna_cap_mw=None if per_antenna_cap is None else float(per_antenna_cap),
            noise_targets_mw=None if noise_targets is None else tuple(noise_targets),
            **kwargs,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario field: {exc}") from exc


def _yaml_complex(z: complex):
    return [z.real, z.imag]


def serialize_scenario(cfg: ScenarioConfig) -> str:
    """Emit a YAML document that parses back to an identical config.

    Powers are written with the ``_mw`` suffix so the round trip is exact.
    """
    doc = {
        "num_antennas": cfg.num_antennas,
        "num_rf_links": cfg.num_rf_links,
        "target_angles": list(cfg.target_angles),
        "untrusted_indices": [j + 1 for j in cfg.untrusted_indices],
        "user_angle": cfg.user_angle,
        "spacing_ratio": cfg.spacing_ratio,
        "user_channel_gain": _yaml_complex(cfg.user_channel_gain),
        "total_power_mw": cfg.total_power_mw,
        "noise_user_mw": cfg.noise_user_mw,
        "secrecy_floor": cfg.secrecy_floor,
        "beam_halfwidth": cfg.beam_halfwidth,
        "grid_size": cfg.grid_size,
        "penalty": cfg.penalty,
        "lambda_grid": [cfg.lambda_grid.lo, cfg.lambda_grid.hi, cfg.lambda_grid.count],
    }
    if cfg.target_gains is not None:
        doc["target_gains"] = [_yaml_complex(g) for g in cfg.target_gains]
    if cfg.per_antenna_cap_mw is not None:
        doc["per_antenna_cap_mw"] = cfg.per_antenna_cap_mw
    if cfg.noise_targets_mw is not None:
        doc["noise_targets_mw"] = list(cfg.noise_targets_mw)
    return yaml.safe_dump(doc, sort_keys=False)


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def paper_scenario(**overrides) -> ScenarioConfig:
    """Default simulation setup: 16-element half-wavelength ULA, six targets
    at +-60/+-40/+-20 degrees with the +-60 pair untrusted, user at 0 degrees,
    -60 dBm noise, 30 dBm budget, 5 bps/Hz secrecy floor, 12 RF links."""
    base = dict(
        num_antennas=16,
        num_rf_links=12,
        target_angles=(-60.0, 60.0, -40.0, 40.0, -20.0, 20.0),
        untrusted_indices=(0, 1),
        total_power_mw=dbm_to_mw(30.0),
        noise_user_mw=dbm_to_mw(-60.0),
        secrecy_floor=5.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)
