"""Per-radio power states and the battery energy ledger."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

BATTERY_BUDGET_J = 19980.0


class Lane(enum.Enum):
    WIFI = "wifi"
    CELLULAR = "cellular"
    LOCATOR = "locator"
    SYSTEM = "system"


class RadioState(enum.Enum):
    WIFI_OFF = "wifi_off"
    WIFI_IDLE = "wifi_idle"
    WIFI_ACTIVE = "wifi_active"
    WIFI_SCAN = "wifi_scan"
    GPRS_IDLE = "gprs_idle"
    GPRS_ACTIVE = "gprs_active"
    GPS_FIX = "gps_fix"
    AGPS_FIX = "agps_fix"
    GSM_LOC = "gsm_loc"
    MONITOR = "monitor"

    @property
    def lane(self) -> Lane:
        return _LANES[self]


_LANES = {
    RadioState.WIFI_OFF: Lane.WIFI,
    RadioState.WIFI_IDLE: Lane.WIFI,
    RadioState.WIFI_ACTIVE: Lane.WIFI,
    RadioState.WIFI_SCAN: Lane.WIFI,
    RadioState.GPRS_IDLE: Lane.CELLULAR,
    RadioState.GPRS_ACTIVE: Lane.CELLULAR,
    RadioState.GPS_FIX: Lane.LOCATOR,
    RadioState.AGPS_FIX: Lane.LOCATOR,
    RadioState.GSM_LOC: Lane.LOCATOR,
    RadioState.MONITOR: Lane.SYSTEM,
}


@dataclass(frozen=True, kw_only=True)
class PowerProfile:
    """Average power draw per state, in watts.

    The cellular and A-GPS values have no measured defaults and must be
    supplied. ``monitor_w`` is the CPU cost of the rate monitor.
    """

    gprs_active_w: float
    gprs_idle_w: float
    agps_fix_w: float
    wifi_scan_w: float = 1.4260
    wifi_active_w: float = 0.890
    wifi_idle_w: float = 0.256
    wifi_off_w: float = 0.0
    gps_fix_w: float = 0.400
    gsm_loc_w: float = 0.060
    monitor_w: float = 0.0
    scan_duration_s: float = 2.0
    fix_duration_s: float = 5.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a finite non-negative number, got {value}")
        if not self.agps_fix_w < self.gps_fix_w:
            raise ValueError(
                f"agps_fix_w ({self.agps_fix_w}) must be below gps_fix_w ({self.gps_fix_w})"
            )

    def power(self, state: RadioState) -> float:
        return getattr(self, f"{state.value}_w")

    @property
    def max_power_w(self) -> float:
        """Worst-case simultaneous draw across all lanes."""
        lanes: dict[Lane, float] = {}
        for state in RadioState:
            lanes[state.lane] = max(lanes.get(state.lane, 0.0), self.power(state))
        return sum(lanes.values())


@dataclass
class EnergyLedger:
    """Accumulated time and energy per radio state.

    Seconds are stored per state and joules derived from them, so
    splitting an accrual into pieces never changes a bucket.
    """

    profile: PowerProfile
    budget_j: float = BATTERY_BUDGET_J
    seconds: dict[RadioState, float] = field(default_factory=lambda: {s: 0.0 for s in RadioState})

    def __post_init__(self):
        if not self.budget_j > 0:
            raise ValueError(f"budget_j must be positive, got {self.budget_j}")

    def accrue(self, state: RadioState, duration_s: float) -> "EnergyLedger":
        if duration_s < 0 or math.isnan(duration_s):
            raise ValueError(f"negative duration {duration_s} for {state.value}")
        self.seconds[state] += duration_s
        return self

    def joules(self, state: RadioState) -> float:
        return self.profile.power(state) * self.seconds[state]

    def buckets(self) -> dict[RadioState, float]:
        return {s: self.joules(s) for s in RadioState}

    @property
    def total_j(self) -> float:
        return math.fsum(self.joules(s) for s in RadioState)

    @property
    def remaining_j(self) -> float:
        return self.budget_j - self.total_j

    @property
    def depleted(self) -> bool:
        return self.total_j >= self.budget_j

    def lane_joules(self, lane: Lane) -> float:
        return math.fsum(self.joules(s) for s in RadioState if s.lane is lane)

    def copy(self) -> "EnergyLedger":
        return EnergyLedger(self.profile, self.budget_j, dict(self.seconds))


def accrue(ledger: EnergyLedger, state: RadioState, duration_s: float) -> EnergyLedger:
    return ledger.accrue(state, duration_s)


def time_to_depletion(profile: PowerProfile, state: RadioState, budget_j: float = BATTERY_BUDGET_J) -> float | None:
    """Seconds a full battery lasts in ``state`` alone; ``None`` means never."""
    p = profile.power(state)
    if p <= 0:
        return None
    return budget_j / p


def energy_efficiency(bytes_delivered: float, joules_consumed: float) -> float:
    """Payload bytes delivered per joule spent."""
    if not joules_consumed > 0:
        raise ValueError(f"joules_consumed must be positive, got {joules_consumed}")
    return bytes_delivered / joules_consumed
