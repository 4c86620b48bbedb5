"""Hardware boundary: abstract drive interface plus two backends.

``SimulatedDrive`` closes a discrete-time PI loop around a first-order
d-axis electrical model (R-L plant, voltage-limited with conditional
integration as anti-windup).  ``StubDrive`` documents the register workflow
of a real drive -- gains are written to addresses looked up in a register-map
file -- without implementing any bus framing.
"""

from __future__ import annotations

import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .metrics import ObjectiveVector, evaluate_objectives
from .records import PHASE_MODEL, ParameterPoint, TrialRecord
from .signals import ExcitationProfile, SignalTrace, render_profile

# A run is declared diverged once |y| exceeds this multiple of the reference
# span; the voltage clamp keeps the default plant far below it.
DIVERGENCE_FACTOR = 100.0

# Worst finite objectives handed to the optimizer for diverged runs: 10x the
# worst values observed in the build-time grid sweep over the full gain box
# on both excitation profiles (see scripts/plant_landscape.py), rounded up.
UNSTABLE_SENTINEL = ObjectiveVector(iae=6.0, itae=4800.0, os=6.5, osc=6.5)


@dataclass(frozen=True)
class PlantModel:
    """First-order d-axis electrical model plus loop plumbing.

    ``gain_scale`` maps the drive's integer gains to physical PI gains
    (kp/scale in V/A, ki/scale in V/(A*s)).  The default of 25 places the
    closed loop's interesting region and its stability boundary inside the
    [500, 10000]^2 gain box (verified by scripts/plant_landscape.py).
    """

    resistance: float = 6.0          # ohm
    inductance: float = 9e-3         # henry
    v_max: float = 325.0             # volt, supply limit (230 V line peak)
    sample_period: float = 50e-6     # second
    noise_std: float = 0.0127        # ampere, 0.5% of rated peak on the recording
    gain_scale: float = 25.0
    latency_samples: int = 2

    def __post_init__(self):
        for name in ("resistance", "inductance", "v_max", "sample_period", "gain_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.latency_samples < 0:
            raise ValueError("latency_samples must be >= 0")

    def with_overrides(self, **kwargs) -> "PlantModel":
        return replace(self, **kwargs)


def simulate_trial(
    plant: PlantModel,
    gains: ParameterPoint,
    profile: ExcitationProfile,
    rng: np.random.Generator | None = None,
) -> tuple[SignalTrace, bool]:
    """Run one closed-loop excitation; returns (trace, stable).

    Per sample i (reference delayed by the communication latency):

        e_i = r[i - latency] - y_i            (r before the window is 0)
        u_i = (kp/S) e_i + (ki/S) Ts sum(e)   clamped to +-v_max,
                                              integrator frozen while clamped
        y_{i+1} = y_i + (Ts/L) (u_i - R y_i)

    Gaussian measurement noise is added to the recorded response only.  If
    |y| exceeds DIVERGENCE_FACTOR times the reference span the trace is
    truncated after the diverged sample and flagged unstable.
    """
    if abs(profile.sample_period - plant.sample_period) > 1e-12:
        raise ValueError(
            f"profile sample_period {profile.sample_period} does not match "
            f"plant sample_period {plant.sample_period}"
        )
    reference = render_profile(profile)
    n = len(reference)
    ref = reference.tolist()
    d = float(reference.max() - reference.min())
    limit = DIVERGENCE_FACTOR * d if d > 0 else np.inf

    kp = gains.kp / plant.gain_scale
    ki = gains.ki / plant.gain_scale
    ts = plant.sample_period
    gain_u = ts / plant.inductance
    r_coeff = plant.resistance
    v_max = plant.v_max
    lat = plant.latency_samples

    y = 0.0
    acc = 0.0
    out = [0.0] * n
    stable = True
    cut = n
    for i in range(n):
        r = ref[i - lat] if i >= lat else 0.0
        e = r - y
        acc_new = acc + e
        u = kp * e + ki * ts * acc_new
        if u > v_max:
            u = v_max
        elif u < -v_max:
            u = -v_max
        else:
            acc = acc_new
        out[i] = y
        y = y + gain_u * (u - r_coeff * y)
        if abs(y) > limit:
            stable = False
            if i + 1 < n:
                out[i + 1] = y  # keep the diverged sample so the trace shows it
                cut = i + 2
            else:
                cut = n
            break

    response = np.array(out[:cut])
    if plant.noise_std > 0 and rng is not None:
        response = response + rng.normal(0.0, plant.noise_std, len(response))
    trace = SignalTrace(reference[:cut], response, plant.sample_period)
    return trace, stable


class DriveInterface(ABC):
    """Write gains, excite, acquire -- the full per-trial hardware contract."""

    sample_period: float = 50e-6
    last_excitation_stable: bool = True

    @abstractmethod
    def write_parameters(self, gains: ParameterPoint) -> None: ...

    @abstractmethod
    def run_excitation(self, profile: ExcitationProfile) -> SignalTrace: ...


class SimulatedDrive(DriveInterface):
    def __init__(self, plant: PlantModel | None = None, rng=None):
        self.plant = plant or PlantModel()
        self.sample_period = self.plant.sample_period
        if rng is None or isinstance(rng, (int, np.random.SeedSequence)):
            rng = np.random.Generator(np.random.PCG64(rng))
        self.rng = rng
        self._gains: ParameterPoint | None = None

    def write_parameters(self, gains: ParameterPoint) -> None:
        self._gains = gains

    def run_excitation(self, profile: ExcitationProfile) -> SignalTrace:
        if self._gains is None:
            raise RuntimeError("no gains written before excitation")
        trace, stable = simulate_trial(self.plant, self._gains, profile, self.rng)
        self.last_excitation_stable = stable
        return trace


class RegisterMapError(ValueError):
    """Malformed or inconsistent register-map file."""


@dataclass(frozen=True)
class RegisterEntry:
    name: str
    address: int
    width_bits: int

    @property
    def byte_range(self) -> range:
        return range(self.address, self.address + self.width_bits // 8)


@dataclass(frozen=True)
class RegisterMap:
    entries: tuple[RegisterEntry, ...]

    def __getitem__(self, name: str) -> RegisterEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(entry.name == name for entry in self.entries)


_REGISTER_LINE = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<address>0[xX][0-9a-fA-F]+|\d+)"
    r"\s*:\s*(?P<width>\d+)$"
)


def load_register_map(path: str | Path) -> RegisterMap:
    """Parse a ``name = address:width_bits`` register map; '#' starts a comment."""
    entries: list[RegisterEntry] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _REGISTER_LINE.match(line)
        if match is None:
            raise RegisterMapError(f"{path}:{lineno}: expected 'name = address:width', got {raw!r}")
        name = match["name"]
        address = int(match["address"], 0)
        width = int(match["width"])
        if width <= 0 or width % 8 != 0:
            raise RegisterMapError(f"{path}:{lineno}: width must be a positive multiple of 8 bits")
        if any(entry.name == name for entry in entries):
            raise RegisterMapError(f"{path}:{lineno}: duplicate register name {name!r}")
        new = RegisterEntry(name, address, width)
        for entry in entries:
            if set(entry.byte_range) & set(new.byte_range):
                raise RegisterMapError(
                    f"{path}:{lineno}: register {name!r} overlaps {entry.name!r}"
                )
        entries.append(new)
    return RegisterMap(entries=tuple(entries))


class StubDrive(DriveInterface):
    """Register-workflow stand-in for real hardware.

    Records every register write (kp first, then ki, as on the wire) in
    ``write_log`` and echoes the rendered reference back as the response --
    the point where a real backend would issue Modbus frames and read the
    drive oscilloscope.
    """

    def __init__(self, register_map: RegisterMap, sample_period: float = 50e-6):
        for name in ("kp", "ki"):
            if name not in register_map:
                raise RegisterMapError(f"register map needs a {name!r} entry")
        self.register_map = register_map
        self.sample_period = sample_period
        self.write_log: list[tuple[str, int, int, int]] = []

    def write_parameters(self, gains: ParameterPoint) -> None:
        for name, value in (("kp", gains.kp), ("ki", gains.ki)):
            entry = self.register_map[name]
            self.write_log.append((name, entry.address, entry.width_bits, value))

    def run_excitation(self, profile: ExcitationProfile) -> SignalTrace:
        reference = render_profile(profile)
        return SignalTrace(reference, reference.copy(), self.sample_period)


class TrialError(RuntimeError):
    """A trial step failed; ``step`` records where (write / excite / acquire)."""

    def __init__(self, step: str, cause: Exception):
        super().__init__(f"trial failed during {step}: {cause}")
        self.step = step


def run_trial(
    drive: DriveInterface,
    gains: ParameterPoint,
    profile: ExcitationProfile,
    *,
    trial_index: int = 0,
    phase: str = PHASE_MODEL,
) -> TrialRecord:
    """One full trial: write gains, excite, acquire, compute objectives.

    Diverged runs get the UNSTABLE_SENTINEL objectives so the optimizer sees
    a well-ordered (finite, very bad) value instead of an error.
    """
    start = time.perf_counter()
    try:
        drive.write_parameters(gains)
    except Exception as exc:
        raise TrialError("write", exc) from exc
    try:
        trace = drive.run_excitation(profile)
    except Exception as exc:
        raise TrialError("excite", exc) from exc
    stable = getattr(drive, "last_excitation_stable", True)
    if stable:
        try:
            objectives = evaluate_objectives(trace)
        except Exception as exc:
            raise TrialError("acquire", exc) from exc
    else:
        objectives = UNSTABLE_SENTINEL
    duration_ms = (time.perf_counter() - start) * 1e3
    return TrialRecord(
        trial_index=trial_index,
        point=gains,
        objectives=objectives,
        phase=phase,
        stable=stable,
        duration_ms=duration_ms,
    )
