"""Scenario configuration documents (TOML).

Every unit lives in the key name. Validation is total: a document is
checked field by field and all problems are reported together, each
prefixed by its field path (``aps[2].range_m``, ``power.gprs_idle_w``).
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geo import GeoPoint
from .power import BATTERY_BUDGET_J, PowerProfile
from .registry import ApRecord, RegistryParseError, canonical_bssid, load
from .sim import ALL_SCHEMES, Scenario, SchemeKind
from .traffic import STANDARD_THRESHOLDS, USER_KINDS, Threshold, WorkloadParams

SEED_ENV = "HANDOFF_SIM_SEED"
DEFAULT_CONFIG = "campus.toml"


class ConfigError(ValueError):
    """One or more invalid fields; ``problems`` holds every message."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated document: the base scenario plus the grid axes."""

    scenario: Scenario
    scheme: SchemeKind
    schemes: tuple[SchemeKind, ...]
    users: tuple[str, ...]
    thresholds: tuple[Threshold, ...]
    source: str

    def with_overrides(
        self,
        *,
        scheme: str | None = None,
        user: str | None = None,
        threshold_kbps: float | None = None,
        seed: int | None = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides; narrows the grid axes too."""
        from dataclasses import replace

        problems = []
        cfg = self
        sc = self.scenario
        if scheme is not None:
            try:
                kind = SchemeKind.parse(scheme)
                cfg = replace(cfg, scheme=kind, schemes=(kind,))
            except ValueError as exc:
                problems.append(f"--scheme: {exc}")
        if user is not None:
            if user not in USER_KINDS and user != "idle":
                problems.append(f"--user: unknown user kind {user!r}; expected one of {list(USER_KINDS)}")
            else:
                sc = replace(sc, user=user, demand_csv=None)
                cfg = replace(cfg, users=(user,))
        if threshold_kbps is not None:
            if not (math.isfinite(threshold_kbps) and threshold_kbps > 0):
                problems.append(f"--threshold-kbps: must be positive, got {threshold_kbps}")
            else:
                th = make_threshold(threshold_kbps)
                sc = replace(sc, threshold=th)
                cfg = replace(cfg, thresholds=(th,))
        if seed is not None:
            sc = replace(sc, seed=seed)
        if problems:
            raise ConfigError(problems)
        return replace(cfg, scenario=sc)


def make_threshold(kbps: float) -> Threshold:
    for name, value in STANDARD_THRESHOLDS.items():
        if value == kbps:
            return Threshold(value, name)
    return Threshold(float(kbps))


class _Checker:
    """Collects problems while pulling typed values out of nested tables."""

    def __init__(self):
        self.problems: list[str] = []

    def fail(self, path: str, message: str) -> None:
        self.problems.append(f"{path}: {message}")

    def table(self, doc: Mapping, key: str, path: str, allowed: set[str]) -> dict:
        value = doc.get(key, {})
        if not isinstance(value, dict):
            self.fail(path, "must be a table")
            return {}
        for extra in sorted(set(value) - allowed):
            self.fail(f"{path}.{extra}", "unknown key")
        return value

    def number(self, tbl: Mapping, key: str, path: str, default: Any = None, *,
               positive: bool = False, non_negative: bool = False, integer: bool = False,
               lo: float | None = None, hi: float | None = None) -> Any:
        if key not in tbl:
            if default is _REQUIRED:
                self.fail(path, "required")
            return None if default is _REQUIRED else default
        v = tbl[key]
        kinds = (int,) if integer else (int, float)
        if isinstance(v, bool) or not isinstance(v, kinds):
            self.fail(path, f"must be {'an integer' if integer else 'a number'}, got {v!r}")
            return None
        if not math.isfinite(v):
            self.fail(path, f"must be finite, got {v!r}")
            return None
        if positive and not v > 0:
            self.fail(path, f"must be positive, got {v!r}")
            return None
        if non_negative and v < 0:
            self.fail(path, f"must be non-negative, got {v!r}")
            return None
        if lo is not None and v < lo or hi is not None and v > hi:
            self.fail(path, f"must lie in [{lo}, {hi}], got {v!r}")
            return None
        return v if integer else float(v)

    def boolean(self, tbl: Mapping, key: str, path: str, default: bool) -> bool:
        v = tbl.get(key, default)
        if not isinstance(v, bool):
            self.fail(path, f"must be true or false, got {v!r}")
            return default
        return v

    def string(self, tbl: Mapping, key: str, path: str, default: str | None = None) -> str | None:
        v = tbl.get(key, default)
        if v is not None and not isinstance(v, str):
            self.fail(path, f"must be a string, got {v!r}")
            return default
        return v

    def string_list(self, tbl: Mapping, key: str, path: str, default: list[str]) -> list[str]:
        v = tbl.get(key, default)
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            self.fail(path, "must be a list of strings")
            return []
        if not v:
            self.fail(path, "must not be empty")
        return v


_REQUIRED = object()


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw).expanduser()
    return p if p.is_absolute() else base / p


def _parse_aps(ck: _Checker, doc: Mapping) -> list[ApRecord]:
    raw = doc.get("aps", [])
    if not isinstance(raw, list):
        ck.fail("aps", "must be an array of tables")
        return []
    allowed = {"t", "ssid", "bssid", "lat_deg", "lon_deg", "range_m", "auth"}
    out = []
    seen: dict[str, int] = {}
    for i, entry in enumerate(raw):
        path = f"aps[{i}]"
        if not isinstance(entry, dict):
            ck.fail(path, "must be a table")
            continue
        for extra in sorted(set(entry) - allowed):
            ck.fail(f"{path}.{extra}", "unknown key")
        before = len(ck.problems)
        t = ck.number(entry, "t", f"{path}.t", 0, integer=True, non_negative=True)
        lat = ck.number(entry, "lat_deg", f"{path}.lat_deg", _REQUIRED, lo=-90.0, hi=90.0)
        lon = ck.number(entry, "lon_deg", f"{path}.lon_deg", _REQUIRED, lo=-180.0, hi=180.0)
        rng = ck.number(entry, "range_m", f"{path}.range_m", _REQUIRED, positive=True)
        ssid = ck.string(entry, "ssid", f"{path}.ssid")
        auth = ck.string(entry, "auth", f"{path}.auth")
        bssid = ck.string(entry, "bssid", f"{path}.bssid")
        if not ssid:
            ck.fail(f"{path}.ssid", "required non-empty string")
        if bssid is None:
            ck.fail(f"{path}.bssid", "required")
        else:
            try:
                bssid = canonical_bssid(bssid)
            except ValueError as exc:
                ck.fail(f"{path}.bssid", str(exc))
            else:
                if bssid in seen:
                    ck.fail(f"{path}.bssid", f"duplicates aps[{seen[bssid]}]")
                seen[bssid] = i
        if len(ck.problems) == before:
            out.append(ApRecord(t, ssid, bssid, GeoPoint.from_degrees(lat, lon), rng, auth))
    return out


def parse_document(doc: Mapping, base_dir: Path, source: str = "<config>",
                   env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Validate a decoded TOML document and build the experiment."""
    ck = _Checker()
    top_allowed = {"seed", "duration_s", "run_to_depletion", "budget_j", "user", "decision",
                   "schemes", "intervals", "power", "links", "localization", "toggles",
                   "workload", "registry", "aps"}
    for extra in sorted(set(doc) - top_allowed):
        ck.fail(extra, "unknown key")

    seed = ck.number(doc, "seed", "seed", 0, integer=True, non_negative=True)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
            if seed < 0:
                raise ValueError
        except ValueError:
            ck.fail(SEED_ENV, f"must be a non-negative integer, got {env[SEED_ENV]!r}")
    duration = ck.number(doc, "duration_s", "duration_s", 3600.0, positive=True)
    to_depletion = ck.boolean(doc, "run_to_depletion", "run_to_depletion", False)
    budget = ck.number(doc, "budget_j", "budget_j", BATTERY_BUDGET_J, positive=True)

    user = ck.table(doc, "user", "user", {"kind", "kinds", "start_lat_deg", "start_lon_deg",
                                          "v_user_mps", "demand_csv"})
    kind = ck.string(user, "kind", "user.kind", "U4")
    kinds = ck.string_list(user, "kinds", "user.kinds", list(USER_KINDS))
    for i, k in enumerate([kind] + kinds):
        if k not in USER_KINDS and k != "idle":
            ck.fail("user.kind" if i == 0 else f"user.kinds[{i - 1}]",
                    f"unknown user kind {k!r}; expected one of {list(USER_KINDS)}")
    start_lat = ck.number(user, "start_lat_deg", "user.start_lat_deg", _REQUIRED, lo=-90.0, hi=90.0)
    start_lon = ck.number(user, "start_lon_deg", "user.start_lon_deg", _REQUIRED, lo=-180.0, hi=180.0)
    v_user = ck.number(user, "v_user_mps", "user.v_user_mps", 1.4, positive=True)
    demand_csv = ck.string(user, "demand_csv", "user.demand_csv")
    if demand_csv is not None:
        demand_path = _resolve(base_dir, demand_csv)
        if not demand_path.is_file():
            ck.fail("user.demand_csv", f"file not found: {demand_path}")
        demand_csv = str(demand_path)

    decision = ck.table(doc, "decision", "decision", {"threshold_kbps", "thresholds_kbps", "t_measure_s"})
    th = ck.number(decision, "threshold_kbps", "decision.threshold_kbps", 20.0, positive=True)
    ths_raw = decision.get("thresholds_kbps", list(STANDARD_THRESHOLDS.values()))
    thresholds: list[Threshold] = []
    if not isinstance(ths_raw, list) or not ths_raw:
        ck.fail("decision.thresholds_kbps", "must be a non-empty list of numbers")
    else:
        for i, v in enumerate(ths_raw):
            got = ck.number({"v": v}, "v", f"decision.thresholds_kbps[{i}]", positive=True)
            if got is not None:
                thresholds.append(make_threshold(got))
    t_measure = ck.number(decision, "t_measure_s", "decision.t_measure_s", 30.0, positive=True)

    schemes_tbl = ck.table(doc, "schemes", "schemes", {"run", "grid"})
    scheme_names = [ck.string(schemes_tbl, "run", "schemes.run", SchemeKind.AGPS_SWITCHING.value)]
    scheme_names += ck.string_list(schemes_tbl, "grid", "schemes.grid", [s.value for s in ALL_SCHEMES])
    parsed: list[SchemeKind] = []
    for i, name in enumerate(scheme_names):
        if name is None:
            continue
        try:
            parsed.append(SchemeKind.parse(name))
        except ValueError as exc:
            ck.fail("schemes.run" if i == 0 else f"schemes.grid[{i - 1}]", str(exc))
    run_scheme = parsed[0] if parsed else SchemeKind.AGPS_SWITCHING
    grid_schemes = tuple(parsed[1:])

    intervals = ck.table(doc, "intervals", "intervals",
                         {"scan_interval_s", "rescan_interval_s", "fix_duration_s", "scan_duration_s"})
    scan_interval = ck.number(intervals, "scan_interval_s", "intervals.scan_interval_s", 60.0, positive=True)
    rescan_interval = ck.number(intervals, "rescan_interval_s", "intervals.rescan_interval_s", 60.0, positive=True)
    fix_duration = ck.number(intervals, "fix_duration_s", "intervals.fix_duration_s", 5.0, non_negative=True)
    scan_duration = ck.number(intervals, "scan_duration_s", "intervals.scan_duration_s", 2.0, non_negative=True)

    power_fields = [f.name for f in fields(PowerProfile) if f.name.endswith("_w")]
    power_tbl = ck.table(doc, "power", "power", set(power_fields))
    power_kwargs: dict[str, float] = {}
    for name in power_fields:
        required = name in ("gprs_active_w", "gprs_idle_w", "agps_fix_w")
        v = ck.number(power_tbl, name, f"power.{name}", _REQUIRED if required else None, non_negative=True)
        if v is not None:
            power_kwargs[name] = v
    power = None
    if fix_duration is not None and scan_duration is not None:
        try:
            power = PowerProfile(**power_kwargs, fix_duration_s=fix_duration, scan_duration_s=scan_duration)
        except (TypeError, ValueError) as exc:
            if not any(p.startswith("power.") for p in ck.problems):
                ck.fail("power", str(exc))

    links = ck.table(doc, "links", "links", {"gprs_capacity_kbps", "wifi_capacity_kbps"})
    gprs_cap = ck.number(links, "gprs_capacity_kbps", "links.gprs_capacity_kbps", 30.0, positive=True)
    wifi_cap = ck.number(links, "wifi_capacity_kbps", "links.wifi_capacity_kbps", 5000.0, positive=True)

    loc = ck.table(doc, "localization", "localization", {"agps_accuracy_m", "gsm_accuracy_m", "error_model"})
    agps_acc = ck.number(loc, "agps_accuracy_m", "localization.agps_accuracy_m", 10.0, non_negative=True)
    gsm_acc = ck.number(loc, "gsm_accuracy_m", "localization.gsm_accuracy_m", 400.0, non_negative=True)
    error_model = ck.string(loc, "error_model", "localization.error_model", "uniform")
    if error_model not in ("uniform", "gaussian"):
        ck.fail("localization.error_model", f"must be 'uniform' or 'gaussian', got {error_model!r}")

    toggles = ck.table(doc, "toggles", "toggles", {"idle_unused_wifi", "gsm_heads_to_truth",
                                                   "use_sharing_service", "endpoint", "query_payload_bytes"})
    idle_unused = ck.boolean(toggles, "idle_unused_wifi", "toggles.idle_unused_wifi", False)
    heads_truth = ck.boolean(toggles, "gsm_heads_to_truth", "toggles.gsm_heads_to_truth", False)
    use_service = ck.boolean(toggles, "use_sharing_service", "toggles.use_sharing_service", False)
    endpoint = ck.string(toggles, "endpoint", "toggles.endpoint")
    payload = ck.number(toggles, "query_payload_bytes", "toggles.query_payload_bytes", 256,
                        integer=True, non_negative=True)
    if use_service and not endpoint:
        ck.fail("toggles.endpoint", "required when use_sharing_service is true")

    wl_fields = {f.name: f.default for f in fields(WorkloadParams)}
    wl_tbl = ck.table(doc, "workload", "workload", set(wl_fields))
    wl_kwargs = {}
    for name, default in wl_fields.items():
        v = ck.number(wl_tbl, name, f"workload.{name}", default, positive=name != "text_mean_kbps",
                      non_negative=True)
        if v is not None:
            wl_kwargs[name] = v
    if wl_kwargs.get("browse_on_s", 1) > wl_kwargs.get("browse_period_s", math.inf):
        ck.fail("workload.browse_on_s", "must not exceed workload.browse_period_s")

    reg_tbl = ck.table(doc, "registry", "registry", {"log_path", "cell_deg"})
    cell_deg = ck.number(reg_tbl, "cell_deg", "registry.cell_deg", 0.01, positive=True)
    if cell_deg is not None and abs(180.0 / cell_deg - round(180.0 / cell_deg)) > 1e-9:
        ck.fail("registry.cell_deg", f"must divide 180 evenly, got {cell_deg}")
    log: tuple[ApRecord, ...] | None = None
    log_path = ck.string(reg_tbl, "log_path", "registry.log_path")
    if log_path is not None:
        p = _resolve(base_dir, log_path)
        if not p.is_file():
            ck.fail("registry.log_path", f"file not found: {p}")
        else:
            try:
                log = tuple(load(p))
            except (RegistryParseError, ValueError, OSError) as exc:
                ck.fail("registry.log_path", str(exc))

    aps = _parse_aps(ck, doc)
    if not aps and "aps" not in doc:
        ck.fail("aps", "at least one AP is required")

    if ck.problems:
        raise ConfigError(ck.problems)

    try:
        scenario = Scenario(
            aps=tuple(aps),
            log=log,
            user_start=GeoPoint.from_degrees(start_lat, start_lon),
            power=power,
            v_user_mps=v_user,
            user=kind,
            demand_csv=demand_csv,
            workload=WorkloadParams(**wl_kwargs),
            threshold=make_threshold(th),
            duration_s=duration,
            run_to_depletion=to_depletion,
            budget_j=budget,
            seed=seed,
            t_measure_s=t_measure,
            scan_interval_s=scan_interval,
            rescan_interval_s=rescan_interval,
            gprs_capacity_kbps=gprs_cap,
            wifi_capacity_kbps=wifi_cap,
            agps_accuracy_m=agps_acc,
            gsm_accuracy_m=gsm_acc,
            error_model=error_model,
            idle_unused_wifi=idle_unused,
            gsm_heads_to_truth=heads_truth,
            use_sharing_service=use_service,
            endpoint=endpoint,
            query_payload_bytes=payload,
            cell_deg=cell_deg,
        )
    except ValueError as exc:
        raise ConfigError([f"scenario: {exc}"]) from exc
    return ExperimentConfig(scenario, run_scheme, grid_schemes, tuple(kinds), tuple(thresholds), source)


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Read and validate a config file; ``None`` loads the packaged campus scenario."""
    if path is None:
        ref = resources.files("handoff_sim") / "data" / DEFAULT_CONFIG
        with resources.as_file(ref) as p:
            return load_config(p, env)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror or exc})"]) from exc
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return parse_document(doc, path.parent, str(path), env)


def default_scenario(**overrides) -> Scenario:
    """The packaged campus scenario, ignoring the seed environment variable."""
    from dataclasses import replace

    sc = load_config(None, env={}).scenario
    return replace(sc, **overrides) if overrides else sc
