"""Energy simulator for location-aware Wi-Fi/GPRS interface switching."""

from .config import ConfigError, default_scenario, load_config
from .geo import Distance, GeoPoint, Speed, haversine_distance, switch_time
from .power import BATTERY_BUDGET_J, EnergyLedger, PowerProfile, RadioState
from .registry import ApRecord, NoKnownAp, Registry, in_range, nearest_ap
from .sim import Scenario, SchemeKind, SimReport, compare, run
from .traffic import RateSample, Threshold, UserProfile, should_switch

__all__ = [
    "ApRecord", "BATTERY_BUDGET_J", "ConfigError", "Distance", "EnergyLedger", "GeoPoint",
    "NoKnownAp", "PowerProfile", "RadioState", "RateSample", "Registry", "Scenario", "SchemeKind",
    "SimReport", "Speed", "Threshold", "UserProfile", "compare", "default_scenario", "haversine_distance",
    "in_range", "load_config", "nearest_ap", "run", "should_switch", "switch_time",
]
__version__ = "0.1.0"
