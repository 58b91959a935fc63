"""V-Q droop setpoints and inverter line power-flow formulas.

Units at this interface: volts, kW, kVar, kVA. Per-unit conversion is left
to the caller.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from edgeboost.errors import DataError, ParameterError

# Nominal 220 V band of +-10 %.
DEFAULT_U_MIN = 198.0
DEFAULT_U_MAX = 242.0

PARAM_COLUMNS = ("id", "s_rate", "q_min", "q_max", "u_min", "u_max")


@dataclass(frozen=True)
class DroopParams:
    s_rate: float
    q_min: float
    q_max: float
    u_min: float = DEFAULT_U_MIN
    u_max: float = DEFAULT_U_MAX
    id: str = ""

    def violations(self) -> list[str]:
        out = []
        values = (self.s_rate, self.q_min, self.q_max, self.u_min, self.u_max)
        if not all(math.isfinite(v) for v in values):
            return ["parameters must be finite"]
        if self.s_rate <= 0:
            out.append(f"s_rate must be positive (got {self.s_rate})")
        if not self.q_min < self.q_max:
            out.append(f"q_min {self.q_min} must be below q_max {self.q_max}")
        if not self.u_min < self.u_max:
            out.append(f"u_min {self.u_min} must be below u_max {self.u_max}")
        if max(abs(self.q_min), abs(self.q_max)) > self.s_rate:
            out.append(f"reactive limits [{self.q_min}, {self.q_max}] exceed s_rate {self.s_rate}")
        return out

    def check(self) -> "DroopParams":
        problems = self.violations()
        if problems:
            label = f"inverter {self.id}: " if self.id else ""
            raise ParameterError(label + "; ".join(problems))
        return self

    @classmethod
    def from_power_factor(cls, s_rate: float, power_factor: float, *,
                          u_min: float = DEFAULT_U_MIN, u_max: float = DEFAULT_U_MAX,
                          id: str = "") -> "DroopParams":
        """Symmetric limits ``+-s_rate * sin(arccos(power_factor))``."""
        q = s_rate * math.sin(math.acos(power_factor))
        return cls(s_rate, -q, q, u_min, u_max, id)


@dataclass(frozen=True)
class Setpoint:
    p_ref: float
    q_ref: float
    k_q: float


@dataclass(frozen=True)
class LineModel:
    u_g: float
    u: float
    z: float = 1.0
    theta: float = math.pi / 2
    delta: float = 0.0
    x: float = 1.0


def droop_gain(params: DroopParams) -> float:
    """Droop coefficient ``(q_max - q_min) / (u_max - u_min)`` in kVar/V."""
    if params.u_max == params.u_min:
        raise ParameterError("degenerate voltage band: u_max equals u_min")
    params.check()
    return (params.q_max - params.q_min) / (params.u_max - params.u_min)


def droop_setpoints(params: DroopParams, u_meas: float) -> Setpoint:
    k_q = droop_gain(params)
    if not math.isfinite(u_meas):
        raise ParameterError(f"measured voltage must be finite, got {u_meas!r}")
    if u_meas <= params.u_min:
        # the line reaches q_max here; rounding in k_q must not leave it short
        q_ref = params.q_max
    else:
        q_ref = params.q_min + k_q * (params.u_max - u_meas)
        q_ref = min(max(q_ref, params.q_min), params.q_max)
    s = params.s_rate
    # (s - q)(s + q) avoids the cancellation in s*s - q*q
    p_ref = math.sqrt((s - q_ref) * (s + q_ref))
    assert 0.0 <= p_ref <= s, (p_ref, s)
    return Setpoint(p_ref, q_ref, k_q)


def recover_voltage(params: DroopParams, q_ref: float) -> float:
    """Voltage that makes the unclamped droop line produce ``q_ref``."""
    return params.u_max - (q_ref - params.q_min) / droop_gain(params)


def power_flow_exact(line: LineModel) -> tuple[float, float]:
    """Active and reactive power through an impedance ``z`` at angle ``theta``."""
    if line.z <= 0:
        raise ParameterError(f"impedance magnitude must be positive, got {line.z}")
    a = line.u_g * line.u / line.z
    b = a * math.cos(line.delta) - line.u_g ** 2 / line.z
    sd = a * math.sin(line.delta)
    p = b * math.cos(line.theta) + sd * math.sin(line.theta)
    q = b * math.sin(line.theta) - sd * math.cos(line.theta)
    return p, q


def power_flow_approx(line: LineModel) -> tuple[float, float]:
    """Small-angle, inductive-line approximation of :func:`power_flow_exact`."""
    if line.x <= 0:
        raise ParameterError(f"reactance must be positive, got {line.x}")
    p = line.u_g * line.u / line.x * line.delta
    q = line.u_g * (line.u - line.u_g) / line.x
    return p, q


def read_droop_params(path) -> list[DroopParams]:
    """Parse a parameter file.

    The file is CSV with the header ``id,s_rate,q_min,q_max,u_min,u_max``,
    one inverter per row. Lines starting with ``#`` are comments. Invariants
    are not checked here so that callers can report them per inverter.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)), skipinitialspace=True)
    missing = set(PARAM_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append(DroopParams(float(row["s_rate"]), float(row["q_min"]),
                                   float(row["q_max"]), float(row["u_min"]),
                                   float(row["u_max"]), row["id"].strip()))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: record {lineno}: {exc}") from exc
    return out


def write_droop_params(params: list[DroopParams], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PARAM_COLUMNS)
        for pr in params:
            w.writerow([pr.id, repr(pr.s_rate), repr(pr.q_min), repr(pr.q_max),
                        repr(pr.u_min), repr(pr.u_max)])


def _fixed(v: float, width: int = 0) -> str:
    s = f"{v:.5f}"
    if s.lstrip("-").strip("0.") == "":
        s = s.lstrip("-")  # no "-0.00000"
    return s.rjust(width)


def format_setpoints(setpoints: list[Setpoint]) -> str:
    """Two-column table with the headers ``Pref:`` and ``Qref:``, five decimals."""
    rows = ["Pref:          Qref:"]
    rows += [f"{_fixed(sp.p_ref)}{_fixed(sp.q_ref, 13)}" for sp in setpoints]
    return "\n".join(rows) + "\n"


def setpoints_csv(ids: list[str], voltages: list[float], setpoints: list[Setpoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "u_meas", "p_ref", "q_ref", "k_q"])
    for i, u, sp in zip(ids, voltages, setpoints):
        w.writerow([i, repr(u), repr(sp.p_ref), repr(sp.q_ref), repr(sp.k_q)])
    return buf.getvalue()
