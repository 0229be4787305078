"""Replication throughput limits and multi-pair transfer planning.

The end-to-end limit for one node pair is the smallest of: source disk
read rate, destination disk write rate, path capacity, and both NICs.
Disk rates are decimal MB/s as storage vendors quote them; data sizes
elsewhere in the toolkit are binary (GiB); reported bandwidths are
decimal Mbps.  That unit mix reproduces the shipped testbed figures.

Planning assigns every fragment of a file to one (source, destination)
node pair, sizes socket buffers (bandwidth-delay product by default),
and attaches per-stream rate caps from the policy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .catalog import LogicalPath, ReplicaCatalog


class PlanningError(Exception):
    pass


class NoRoute(PlanningError):
    """No path connects the requested sites."""


class NoDestinationNodes(PlanningError):
    """The destination site offers no nodes to replicate onto."""


@dataclass(frozen=True)
class NodeSpec:
    """A storage node: disk rates (decimal MB/s), NIC rate, site, agent address."""

    id: str
    disk_read_MBps: float
    disk_write_MBps: float
    nic_bps: float
    site: str = ""
    address: str | None = None

    def __post_init__(self) -> None:
        if min(self.disk_read_MBps, self.disk_write_MBps, self.nic_bps) <= 0:
            raise ValueError("node rates must be positive")
        if not self.site:
            object.__setattr__(self, "site", self.id.split("-")[0])


@dataclass(frozen=True)
class PathSpec:
    """An end-to-end path between two sites."""

    src_site: str
    dst_site: str
    capacity_bps: float
    rtt_s: float
    route_tag: str = ""

    def __post_init__(self) -> None:
        if self.capacity_bps <= 0 or self.rtt_s <= 0:
            raise ValueError("capacity_bps and rtt_s must be positive")


@dataclass(frozen=True)
class PairAssignment:
    fragment_index: int
    src_node: str
    dst_node: str
    path: PathSpec
    streams: int
    socket_buffer_bytes: int
    rate_cap_bps: float | None = None
    aggregate_cap_bps: float | None = None

    def __post_init__(self) -> None:
        if self.streams < 1:
            raise ValueError("streams must be >= 1")


@dataclass(frozen=True)
class TransferPlan:
    file: str
    assignments: tuple[PairAssignment, ...]
    expected_bw_bps: float


@dataclass(frozen=True)
class PlanPolicy:
    """Knobs for plan_replication.

    socket_buffer_bytes None means size each buffer to the
    bandwidth-delay product of the pair's target rate (the per-stream
    cap when set, otherwise the path capacity).  rate_cap_bps applies
    per stream; aggregate_cap_bps per node pair.
    """

    streams_per_pair: int = 1
    socket_buffer_bytes: int | None = None
    rate_cap_bps: float | None = None
    aggregate_cap_bps: float | None = None
    route_tag: str | None = None


def replication_limit(src: NodeSpec, dst: NodeSpec, path: PathSpec) -> float:
    """Peak one-pair replication rate in decimal MB/s.

    min(source read, destination write, path, source NIC, destination NIC).
    """
    return min(
        src.disk_read_MBps,
        dst.disk_write_MBps,
        path.capacity_bps / 8.0 / 1e6,
        src.nic_bps / 8.0 / 1e6,
        dst.nic_bps / 8.0 / 1e6,
    )


def site_limits(node: NodeSpec, lan_path: PathSpec) -> tuple[float, float]:
    """One site's (incoming, outgoing) replication limit in MB/s.

    The one-sided bound an ideally fast peer on the same LAN would see:
    incoming is write-side, outgoing read-side, each also bounded by the
    node NIC and the LAN path.
    """
    shared = min(lan_path.capacity_bps / 8.0 / 1e6, node.nic_bps / 8.0 / 1e6)
    return min(node.disk_write_MBps, shared), min(node.disk_read_MBps, shared)


def average_bandwidth(data_bytes: int, transfer_time_s: float) -> float:
    """Average transfer rate in bits/s (divide by 1e6 for decimal Mbps)."""
    if transfer_time_s <= 0:
        raise ValueError("transfer_time_s must be positive")
    return data_bytes * 8.0 / transfer_time_s


def bdp_bytes(rate_bps: float, rtt_s: float) -> int:
    """Bandwidth-delay product: the buffer needed to keep a path full."""
    return int(rate_bps * rtt_s / 8.0)


class PathTable:
    """Site-pair path lookup over a list of PathSpec entries."""

    def __init__(self, paths: list[PathSpec]):
        self.paths = list(paths)

    def lookup(
        self, src_site: str, dst_site: str, route_tag: str | None = None
    ) -> PathSpec:
        """Best (highest-capacity) path between two sites, optionally by route tag."""
        candidates = [
            p
            for p in self.paths
            if p.src_site == src_site
            and p.dst_site == dst_site
            and (route_tag is None or p.route_tag == route_tag)
        ]
        if not candidates:
            raise NoRoute(f"no path {src_site} -> {dst_site}"
                          + (f" via {route_tag}" if route_tag else ""))
        return max(candidates, key=lambda p: (p.capacity_bps, -p.rtt_s))

    def links_for(
        self,
        nodes: dict[str, NodeSpec],
        src_node_ids: list[str],
        dst: NodeSpec,
        route_tag: str | None = None,
    ) -> dict[tuple[str, str], PathSpec]:
        """Node-pair link map for source selection; skips unroutable sources."""
        links = {}
        for src_id in src_node_ids:
            src = nodes[src_id]
            try:
                links[(src_id, dst.id)] = self.lookup(src.site, dst.site, route_tag)
            except NoRoute:
                continue
        return links


def plan_replication(
    catalog: "ReplicaCatalog",
    path: "LogicalPath",
    dest_nodes: list[NodeSpec],
    table: PathTable,
    policy: PlanPolicy = PlanPolicy(),
) -> TransferPlan:
    """Assign every fragment of a file to one node pair.

    Destination nodes are used round-robin (wrapping only when there are
    more fragments than nodes); sources come from select_source, so each
    fragment is pulled from its fastest-reachable replica.
    """
    from .catalog import ReplicaLocation  # noqa: F401  (local import breaks the cycle)

    if not dest_nodes:
        raise NoDestinationNodes(f"no destination nodes for {path}")
    entry = catalog.get(path)
    assignments = []
    expected = 0.0
    for frag in entry.fragments:
        dst = dest_nodes[frag.index % len(dest_nodes)]
        replica_nodes = sorted({loc.node for loc in entry.replicas[frag.index]})
        links = table.links_for(catalog.nodes, replica_nodes, dst, policy.route_tag)
        src_loc = catalog.select_source(path, frag.index, dst, links)
        pair_path = links[(src_loc.node, dst.id)]
        target_bps = (
            policy.rate_cap_bps
            if policy.rate_cap_bps is not None
            else pair_path.capacity_bps
        )
        buffer_bytes = (
            policy.socket_buffer_bytes
            if policy.socket_buffer_bytes is not None
            else bdp_bytes(target_bps, pair_path.rtt_s)
        )
        assignments.append(
            PairAssignment(
                fragment_index=frag.index,
                src_node=src_loc.node,
                dst_node=dst.id,
                path=pair_path,
                streams=policy.streams_per_pair,
                socket_buffer_bytes=buffer_bytes,
                rate_cap_bps=policy.rate_cap_bps,
                aggregate_cap_bps=policy.aggregate_cap_bps,
            )
        )
        pair_bps = replication_limit(catalog.nodes[src_loc.node], dst, pair_path) * 8e6
        if policy.rate_cap_bps is not None:
            pair_bps = min(pair_bps, policy.streams_per_pair * policy.rate_cap_bps)
        if policy.aggregate_cap_bps is not None:
            pair_bps = min(pair_bps, policy.aggregate_cap_bps)
        expected += pair_bps
    return TransferPlan(str(path), tuple(assignments), expected)


def plan_to_dict(plan: TransferPlan) -> dict:
    return {
        "file": plan.file,
        "expected_bw_bps": plan.expected_bw_bps,
        "assignments": [
            {
                "fragment_index": a.fragment_index,
                "src_node": a.src_node,
                "dst_node": a.dst_node,
                "path": {
                    "src_site": a.path.src_site,
                    "dst_site": a.path.dst_site,
                    "capacity_bps": a.path.capacity_bps,
                    "rtt_s": a.path.rtt_s,
                    "route_tag": a.path.route_tag,
                },
                "streams": a.streams,
                "socket_buffer_bytes": a.socket_buffer_bytes,
                "rate_cap_bps": a.rate_cap_bps,
                "aggregate_cap_bps": a.aggregate_cap_bps,
            }
            for a in plan.assignments
        ],
    }


def plan_from_dict(doc: dict) -> TransferPlan:
    assignments = tuple(
        PairAssignment(
            fragment_index=int(a["fragment_index"]),
            src_node=a["src_node"],
            dst_node=a["dst_node"],
            path=PathSpec(
                src_site=a["path"]["src_site"],
                dst_site=a["path"]["dst_site"],
                capacity_bps=float(a["path"]["capacity_bps"]),
                rtt_s=float(a["path"]["rtt_s"]),
                route_tag=a["path"].get("route_tag", ""),
            ),
            streams=int(a["streams"]),
            socket_buffer_bytes=int(a["socket_buffer_bytes"]),
            rate_cap_bps=(
                float(a["rate_cap_bps"]) if a.get("rate_cap_bps") is not None else None
            ),
            aggregate_cap_bps=(
                float(a["aggregate_cap_bps"])
                if a.get("aggregate_cap_bps") is not None
                else None
            ),
        )
        for a in doc["assignments"]
    )
    return TransferPlan(doc["file"], assignments, float(doc["expected_bw_bps"]))


def node_from_dict(node_id: str, d: dict) -> NodeSpec:
    return NodeSpec(
        id=node_id,
        disk_read_MBps=float(d["disk_read_MBps"]),
        disk_write_MBps=float(d["disk_write_MBps"]),
        nic_bps=float(d["nic_bps"]),
        site=d.get("site", ""),
        address=d.get("address"),
    )


def load_nodes(path: str) -> dict[str, NodeSpec]:
    """Read a {node_id: spec} JSON document."""
    with open(path) as fh:
        doc = json.load(fh)
    return {node_id: node_from_dict(node_id, d) for node_id, d in doc.items()}


def load_paths(path: str) -> PathTable:
    """Read a JSON list of path specs."""
    with open(path) as fh:
        doc = json.load(fh)
    return PathTable(
        [
            PathSpec(
                src_site=p["src_site"],
                dst_site=p["dst_site"],
                capacity_bps=float(p["capacity_bps"]),
                rtt_s=float(p["rtt_s"]),
                route_tag=p.get("route_tag", ""),
            )
            for p in doc
        ]
    )


def load_fixtures(fixtures_dir: str) -> tuple[dict[str, NodeSpec], PathTable]:
    """Load nodes.json and paths.json from a fixtures directory."""
    import os

    return (
        load_nodes(os.path.join(fixtures_dir, "nodes.json")),
        load_paths(os.path.join(fixtures_dir, "paths.json")),
    )
