"""Network configuration file: ``key = value`` lines with ``#`` comments.

One file carries the topology, the engine knobs and the routing knobs.
Bandwidths are given in GiB/s (GiB = 2**30 bytes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .routing import FPAR, MINIMAL_ONLY, RoutingConfig
from .simcore.plan import EngineConfig
from .topology import GIB, MINI_PARAMS, FULL_PARAMS, TopologyParams

TOPOLOGY_KEYS = (
    "num_groups",
    "spines_per_group",
    "leaves_per_group",
    "terminals_per_leaf",
    "global_links_per_spine",
)
BANDWIDTH_KEYS = ("bw_global_GiBps", "bw_local_GiBps", "bw_terminal_GiBps")
ENGINE_KEYS = ("chunk_bytes", "buffer_bytes", "router_delay_ns", "sample_interval_ns")
ROUTING_KEYS = ("routing_mode", "threshold_T", "allow_spine_divert")
ALL_KEYS = TOPOLOGY_KEYS + BANDWIDTH_KEYS + ENGINE_KEYS + ROUTING_KEYS

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class NetworkConfig:
    topology: TopologyParams
    engine: EngineConfig = field(default_factory=EngineConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)


def _int(key, raw, path, line):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {raw!r}", path, line) from None


def _float(key, raw, path, line):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}", path, line) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"{key} must be finite, got {raw!r}", path, line)
    return value


def _bool(key, raw, path, line):
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"{key} must be a boolean, got {raw!r}", path, line)


def parse_network(text, path="<network>"):
    """Parse network-file text into a :class:`NetworkConfig`."""
    values = {}
    where = {}
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {where[key]})", path, lineno)
        if not raw:
            raise ConfigError(f"missing value for {key!r}", path, lineno)
        if key in TOPOLOGY_KEYS or key in ENGINE_KEYS:
            values[key] = _int(key, raw, path, lineno)
        elif key in BANDWIDTH_KEYS or key == "threshold_T":
            values[key] = _float(key, raw, path, lineno)
        elif key == "allow_spine_divert":
            values[key] = _bool(key, raw, path, lineno)
        else:
            if raw not in (FPAR, MINIMAL_ONLY):
                raise ConfigError(f"routing_mode must be 'fpar' or 'minimal', got {raw!r}", path, lineno)
            values[key] = raw
        where[key] = lineno

    missing = [k for k in TOPOLOGY_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}", path)

    def err_line(keys):
        lines = [where[k] for k in keys if k in where]
        return min(lines) if lines else None

    bw = {}
    for key, name in zip(BANDWIDTH_KEYS, ("bw_global", "bw_local", "bw_terminal")):
        if key in values:
            bw[name] = values[key] * GIB
    params = TopologyParams(**{k: values[k] for k in TOPOLOGY_KEYS}, **bw)
    try:
        params.check()
    except ConfigError as exc:
        raise ConfigError(exc.message, path, err_line(TOPOLOGY_KEYS + BANDWIDTH_KEYS)) from None
    try:
        engine = EngineConfig(**{k: values[k] for k in ENGINE_KEYS if k in values})
    except ConfigError as exc:
        raise ConfigError(exc.message, path, err_line(ENGINE_KEYS)) from None
    routing_kwargs = {}
    if "routing_mode" in values:
        routing_kwargs["mode"] = values["routing_mode"]
    if "threshold_T" in values:
        routing_kwargs["threshold_T"] = values["threshold_T"]
    if "allow_spine_divert" in values:
        routing_kwargs["allow_spine_divert"] = values["allow_spine_divert"]
    try:
        routing = RoutingConfig(**routing_kwargs)
    except ConfigError as exc:
        raise ConfigError(exc.message, path, err_line(ROUTING_KEYS)) from None
    return NetworkConfig(params, engine, routing)


def load_network(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read network file: {exc.strerror}", str(path)) from None
    return parse_network(text, str(path))


def format_network(config):
    """Canonical text for ``config``; :func:`parse_network` reads it back exactly."""
    p, e, r = config.topology, config.engine, config.routing
    lines = [f"{k} = {getattr(p, k)}" for k in TOPOLOGY_KEYS]
    for key, name in zip(BANDWIDTH_KEYS, ("bw_global", "bw_local", "bw_terminal")):
        lines.append(f"{key} = {getattr(p, name) / GIB!r}")
    lines += [f"{k} = {getattr(e, k)}" for k in ENGINE_KEYS]
    lines += [
        f"routing_mode = {r.mode}",
        f"threshold_T = {r.threshold_T!r}",
        f"allow_spine_divert = {str(r.allow_spine_divert).lower()}",
    ]
    return "\n".join(lines) + "\n"


FULL_NETWORK = NetworkConfig(FULL_PARAMS)
MINI_NETWORK = NetworkConfig(MINI_PARAMS)
