"""Scenario configuration for the sliced base-station simulator.

The JSON keys follow the SCOPE radio configuration (``network-slicing``,
``slice-allocation``, ``slice-scheduling-policy``, ``slice-users``) plus a few
simulator-only keys (``rbg-count``, ``ues``, ``tti-ms``, ``kpm-window-ms``,
``seed``, ``bs-id``, ``node-id``, ``fading-sigma``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

DEFAULT_RBG_COUNT = 17  # 50 PRBs / 10 MHz with 3-PRB groups
DEFAULT_EFFICIENCY = 2000  # bits per RBG per TTI
DEFAULT_NODE_ID = "gnb:311-048-01000501"

POLICY_ROUND_ROBIN = 0
POLICY_WATERFILLING = 1
POLICY_PROPORTIONAL_FAIR = 2
POLICY_CODES = (POLICY_ROUND_ROBIN, POLICY_WATERFILLING, POLICY_PROPORTIONAL_FAIR)
POLICY_NAMES = {0: "round-robin", 1: "waterfilling", 2: "proportional-fair"}


class ConfigError(ValueError):
    """Invalid scenario configuration or control directive.

    ``code`` is the error name carried in control acks, ``key`` the offending
    configuration key.
    """

    code = "ConfigError"

    def __init__(self, key: str, detail: str = ""):
        self.key = key
        self.detail = detail
        msg = f"{self.code} at {key!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class MalformedJson(ConfigError):
    code = "MalformedJson"


class OverlappingRbgRanges(ConfigError):
    code = "OverlappingRbgRanges"


class UnknownPolicyCode(ConfigError):
    code = "UnknownPolicyCode"


class DuplicateUe(ConfigError):
    code = "DuplicateUe"


class RangeOutOfBounds(ConfigError):
    code = "RangeOutOfBounds"


class UnknownUe(ConfigError):
    code = "UnknownUe"


class SliceMismatch(ConfigError):
    code = "SliceMismatch"


@dataclass(frozen=True)
class UeSpec:
    ue_id: int
    efficiency: float = DEFAULT_EFFICIENCY  # bits per RBG per TTI
    rate_bps: float = 0.0
    saturated: bool = True

    def to_json(self) -> dict:
        return {
            "id": self.ue_id,
            "efficiency": self.efficiency,
            "rate-bps": self.rate_bps,
            "saturated": self.saturated,
        }


@dataclass
class ScenarioConfig:
    network_slicing: bool = True
    rbg_count: int = DEFAULT_RBG_COUNT
    slice_allocation: dict[int, tuple[int, int]] = field(default_factory=dict)
    slice_scheduling_policy: list[int] = field(default_factory=list)
    slice_users: dict[int, list[int]] = field(default_factory=dict)
    ues: list[UeSpec] = field(default_factory=list)
    tti_ms: int = 1
    kpm_window_ms: int = 100
    seed: int = 0
    bs_id: str = "bs0"
    node_id: str = DEFAULT_NODE_ID
    fading_sigma: float = 0.0

    @property
    def slice_ids(self) -> list[int]:
        return sorted(self.slice_allocation)

    def slice_of(self) -> dict[int, int]:
        """UE id -> slice id."""
        return {ue: s for s, users in self.slice_users.items() for ue in users}

    def ue(self, ue_id: int) -> UeSpec:
        for spec in self.ues:
            if spec.ue_id == ue_id:
                return spec
        raise KeyError(ue_id)

    def idle_rbgs(self) -> list[int]:
        covered = set()
        for first, last in self.slice_allocation.values():
            covered.update(range(first, last + 1))
        return [r for r in range(self.rbg_count) if r not in covered]

    def to_json(self) -> dict:
        return {
            "network-slicing": self.network_slicing,
            "rbg-count": self.rbg_count,
            "slice-allocation": {str(s): list(r) for s, r in sorted(self.slice_allocation.items())},
            "slice-scheduling-policy": list(self.slice_scheduling_policy),
            "slice-users": {str(s): list(u) for s, u in sorted(self.slice_users.items())},
            "ues": [u.to_json() for u in self.ues],
            "tti-ms": self.tti_ms,
            "kpm-window-ms": self.kpm_window_ms,
            "seed": self.seed,
            "bs-id": self.bs_id,
            "node-id": self.node_id,
            "fading-sigma": self.fading_sigma,
        }


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    try:
        return int(value)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {value!r}") from None


def validate_allocation(
    allocation: Mapping[Any, Sequence[Any]], rbg_count: int, key: str = "slice-allocation"
) -> dict[int, tuple[int, int]]:
    """Normalize ``{slice: [first, last]}`` and check bounds and disjointness."""
    if not isinstance(allocation, Mapping):
        raise ConfigError(key, "expected an object of slice -> [first, last]")
    table: dict[int, tuple[int, int]] = {}
    owner: dict[int, int] = {}
    for raw_slice, rng in allocation.items():
        sid = _as_int(raw_slice, key)
        sub = f"{key}.{sid}"
        if not isinstance(rng, (list, tuple)) or len(rng) != 2:
            raise ConfigError(sub, "expected [first_rbg, last_rbg]")
        first, last = _as_int(rng[0], sub), _as_int(rng[1], sub)
        if first > last or first < 0 or last >= rbg_count:
            raise RangeOutOfBounds(sub, f"[{first},{last}] outside [0,{rbg_count - 1}]")
        for rbg in range(first, last + 1):
            if rbg in owner:
                raise OverlappingRbgRanges(sub, f"RBG {rbg} already owned by slice {owner[rbg]}")
            owner[rbg] = sid
        table[sid] = (first, last)
    return dict(sorted(table.items()))


def validate_policies(policies: Any, n_slices: int, key: str = "slice-scheduling-policy") -> list[int]:
    if not isinstance(policies, (list, tuple)):
        raise ConfigError(key, "expected a list of policy codes")
    codes = []
    for i, code in enumerate(policies):
        if isinstance(code, bool) or not isinstance(code, int) or code not in POLICY_CODES:
            raise UnknownPolicyCode(f"{key}[{i}]", f"{code!r} not in {POLICY_CODES}")
        codes.append(code)
    if len(codes) != n_slices:
        raise ConfigError(key, f"{len(codes)} codes for {n_slices} slices")
    return codes


def even_allocation(slice_ids: Sequence[int], rbg_count: int) -> dict[int, tuple[int, int]]:
    """Contiguous near-even split; the remainder goes to the lowest slice ids."""
    n = len(slice_ids)
    base, extra = divmod(rbg_count, n)
    table, start = {}, 0
    for i, sid in enumerate(sorted(slice_ids)):
        size = base + (1 if i < extra else 0)
        table[sid] = (start, start + size - 1)
        start += size
    return table


def _parse_ues(raw: Any) -> list[UeSpec]:
    if not isinstance(raw, list):
        raise ConfigError("ues", "expected a list")
    ues, seen = [], set()
    for i, item in enumerate(raw):
        key = f"ues[{i}]"
        if isinstance(item, (int, str)) and not isinstance(item, bool):
            item = {"id": item}
        if not isinstance(item, Mapping) or "id" not in item:
            raise ConfigError(key, "expected an object with an 'id'")
        ue_id = _as_int(item["id"], key)
        if ue_id in seen:
            raise DuplicateUe(key, f"UE {ue_id} listed twice")
        seen.add(ue_id)
        eff = float(item.get("efficiency", DEFAULT_EFFICIENCY))
        rate = float(item.get("rate-bps", 0.0))
        saturated = bool(item.get("saturated", "rate-bps" not in item))
        if eff <= 0 or rate < 0:
            raise ConfigError(key, "efficiency must be > 0 and rate-bps >= 0")
        ues.append(UeSpec(ue_id, eff, rate, saturated))
    return ues


def config_from_dict(raw: Mapping[str, Any]) -> ScenarioConfig:
    if not isinstance(raw, Mapping):
        raise MalformedJson("<root>", "top level must be an object")
    rbg_count = _as_int(raw.get("rbg-count", DEFAULT_RBG_COUNT), "rbg-count")
    if rbg_count <= 0:
        raise ConfigError("rbg-count", "must be positive")
    tti_ms = _as_int(raw.get("tti-ms", 1), "tti-ms")
    window = _as_int(raw.get("kpm-window-ms", 100), "kpm-window-ms")
    if tti_ms <= 0 or window <= 0 or window % tti_ms:
        raise ConfigError("kpm-window-ms", "must be a positive multiple of tti-ms")
    slicing = bool(raw.get("network-slicing", True))

    raw_users = raw.get("slice-users", {})
    if not isinstance(raw_users, Mapping):
        raise ConfigError("slice-users", "expected an object of slice -> [ue, ...]")
    users: dict[int, list[int]] = {}
    assigned: dict[int, int] = {}
    for raw_slice, ue_list in raw_users.items():
        sid = _as_int(raw_slice, "slice-users")
        key = f"slice-users.{sid}"
        if not isinstance(ue_list, list):
            raise ConfigError(key, "expected a list of UE ids")
        ids = []
        for ue in ue_list:
            ue_id = _as_int(ue, key)
            if ue_id in assigned:
                raise DuplicateUe(key, f"UE {ue_id} already in slice {assigned[ue_id]}")
            assigned[ue_id] = sid
            ids.append(ue_id)
        users[sid] = ids

    if "ues" in raw:
        ues = _parse_ues(raw["ues"])
    else:
        # one default saturated UE per id named in slice-users
        ues = [UeSpec(u) for u in sorted(assigned)]
    known = {u.ue_id for u in ues}
    for ue_id, sid in assigned.items():
        if ue_id not in known:
            raise UnknownUe(f"slice-users.{sid}", f"UE {ue_id} not defined in 'ues'")

    if not slicing:
        allocation = {0: (0, rbg_count - 1)}
        users = {0: sorted(known)}
    elif "slice-allocation" in raw:
        allocation = validate_allocation(raw["slice-allocation"], rbg_count)
    elif users:
        allocation = even_allocation(list(users), rbg_count)
    else:
        allocation = {0: (0, rbg_count - 1)}
        users = {0: sorted(known)}
    for sid in users:
        if sid not in allocation:
            raise SliceMismatch(f"slice-users.{sid}", f"slice {sid} has no RBG allocation")
    for sid in allocation:
        users.setdefault(sid, [])

    if "slice-scheduling-policy" in raw:
        policies = raw["slice-scheduling-policy"]
        if not slicing and isinstance(policies, list) and policies:
            policies = policies[:1]
        policies = validate_policies(policies, len(allocation))
    else:
        policies = [POLICY_ROUND_ROBIN] * len(allocation)

    return ScenarioConfig(
        network_slicing=slicing,
        rbg_count=rbg_count,
        slice_allocation=allocation,
        slice_scheduling_policy=policies,
        slice_users=dict(sorted(users.items())),
        ues=sorted(ues, key=lambda u: u.ue_id),
        tti_ms=tti_ms,
        kpm_window_ms=window,
        seed=_as_int(raw.get("seed", 0), "seed"),
        bs_id=str(raw.get("bs-id", "bs0")),
        node_id=str(raw.get("node-id", DEFAULT_NODE_ID)),
        fading_sigma=float(raw.get("fading-sigma", 0.0)),
    )


def parse_radio_config(json_text: str) -> ScenarioConfig:
    """Parse and validate a SCOPE-style radio configuration.

    Raises a :class:`ConfigError` subclass naming the offending key.
    """
    try:
        raw = json.loads(json_text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedJson("<root>", str(exc)) from None
    return config_from_dict(raw)
