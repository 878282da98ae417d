"""VM allocation policies.

Each policy ranks the eligible hosts (enough free memory, not failed) by
a key and takes the top one. Worst-Fit prefers the host with the MOST of
the ranked quantity (spreading); Best-Fit ("-inv") the least (packing).
The replay policy re-issues recorded placements, falling back to memory
worst-fit first within the recorded host's cluster, then globally.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from capelin.engine import HostState
    from capelin.trace import VmSpec

log = logging.getLogger("capelin.scheduler")

POLICY_MEM = "mem"
POLICY_CORE_MEM = "core-mem"
POLICY_ACTIVE_SERVERS = "active-servers"
POLICY_REPLAY = "replay"
POLICY_RANDOM = "random"

RANKED_BASES = (POLICY_MEM, POLICY_CORE_MEM, POLICY_ACTIVE_SERVERS)
ALL_BASES = RANKED_BASES + (POLICY_REPLAY, POLICY_RANDOM)


@dataclass(frozen=True)
class PolicyId:
    base: str
    inverted: bool = False  # Best-Fit when true, Worst-Fit when false

    def __post_init__(self):
        if self.base not in ALL_BASES:
            raise ValueError(f"unknown policy base {self.base!r}")

    def __str__(self) -> str:
        return f"{self.base}-inv" if self.inverted else self.base


def parse_policy(text: str) -> PolicyId:
    """Parse a policy name like "mem", "core-mem-inv", "replay"."""
    name = text.strip()
    inverted = False
    if name.endswith("-inv"):
        inverted = True
        name = name[: -len("-inv")]
    if name not in ALL_BASES:
        raise ValueError(f"unknown allocation policy {text!r}")
    if inverted and name in (POLICY_REPLAY, POLICY_RANDOM):
        # replay and random have no meaningful inversion
        raise ValueError(f"policy {name!r} does not support the -inv variant")
    return PolicyId(name, inverted)


def _rank_key(base: str, host: "HostState") -> float:
    if base == POLICY_MEM:
        return host.free_memory_mb
    if base == POLICY_CORE_MEM:
        return host.free_memory_mb / host.spec.core_count
    if base == POLICY_ACTIVE_SERVERS:
        # fewest active VMs = "most available"
        return -len(host.resident)
    raise ValueError(f"policy {base!r} has no ranking key")


def rank_hosts(
    policy: PolicyId,
    hosts: list["HostState"],
    vm: "VmSpec",
    rng: random.Random | None = None,
) -> list["HostState"]:
    """Order eligible hosts by the policy; ties break on host_id."""
    if policy.base == POLICY_RANDOM:
        ordered = sorted(hosts, key=lambda h: h.spec.host_id)
        if rng is None:
            raise ValueError("random policy requires an rng stream")
        rng.shuffle(ordered)
        return ordered
    if policy.base == POLICY_REPLAY:
        raise ValueError("replay is not a ranking policy; use place()")
    if policy.inverted:
        return sorted(hosts, key=lambda h: (_rank_key(policy.base, h), h.spec.host_id))
    return sorted(hosts, key=lambda h: (-_rank_key(policy.base, h), h.spec.host_id))


def place(
    policy: PolicyId,
    hosts: list["HostState"],
    vm: "VmSpec",
    placement_map: dict[str, str] | None = None,
    rng: random.Random | None = None,
    cluster_by_host: dict[str, str] | None = None,
) -> str | None:
    """Choose a host for the VM, or None to queue it.

    `hosts` must already be filtered to live hosts with enough free memory.
    `cluster_by_host` maps every host in the topology to its cluster and is
    required for replay's same-cluster fallback when the mapped host is
    currently ineligible.
    """
    if not hosts:
        return None
    if policy.base == POLICY_REPLAY:
        return _place_replay(hosts, vm, placement_map or {}, cluster_by_host or {})
    return rank_hosts(policy, hosts, vm, rng)[0].spec.host_id


def _place_replay(
    hosts: list["HostState"],
    vm: "VmSpec",
    placement_map: dict[str, str],
    cluster_by_host: dict[str, str],
) -> str:
    mem_worst_fit = PolicyId(POLICY_MEM)
    mapped = placement_map.get(vm.vm_id)
    if mapped is None:
        log.warning("replay: no recorded placement for vm %s; using mem worst-fit", vm.vm_id)
        return rank_hosts(mem_worst_fit, hosts, vm)[0].spec.host_id
    if any(h.spec.host_id == mapped for h in hosts):
        return mapped
    # Mapped host is full, failed, or gone: stay within its cluster if possible.
    mapped_cluster = cluster_by_host.get(mapped)
    if mapped_cluster is not None:
        same_cluster = [h for h in hosts if h.cluster_id == mapped_cluster]
        if same_cluster:
            return rank_hosts(mem_worst_fit, same_cluster, vm)[0].spec.host_id
    else:
        log.warning("replay: recorded host %s not in topology for vm %s", mapped, vm.vm_id)
    return rank_hosts(mem_worst_fit, hosts, vm)[0].spec.host_id
