"""Lane-level map model and matching geometry.

Holds the on-board map (lane polylines with speed limits and signal
locations) and the math that locates the truck on the nearest lane and
measures the true along-road distance to the next signal, so that lateral
GNSS drift does not inflate the distance estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

EARTH_RADIUS_M = 6_371_008.8  # mean Earth radius


class MapLoadError(ValueError):
    """Raised when a map document violates the map schema or its invariants."""


class MatchError(Exception):
    """Base class for map-matching failures."""


class NoMatchError(MatchError):
    """No heading-consistent lane segment within the match radius."""


class NoSignalAheadError(MatchError):
    """The matched lane chain has no downstream signal."""


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic position in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class LaneNode:
    id: str
    position: GeoPoint


@dataclass(frozen=True)
class LaneSegment:
    id: str
    from_node: str
    to_node: str
    length_m: float  # derived from node coordinates at load time
    speed_limit_mps: float
    road_name: str
    heading_deg: float


@dataclass(frozen=True)
class SignalNode:
    node_id: str
    intersection_id: str
    signal_group_id: str


@dataclass(frozen=True)
class MatchResult:
    """Outcome of locating the truck on the map.

    lateral_error_m is the perpendicular offset from the lane (the GNSS
    drift estimate); along_segment_remaining_m the distance from the
    projection point to the segment's downstream node; distance_to_signal_m
    the along-road distance to the next signal stop line.
    """

    segment_id: str
    lateral_error_m: float
    along_segment_remaining_m: float
    distance_to_signal_m: float
    signal: SignalNode
    out_of_segment: bool = False


@dataclass
class MapGraph:
    """Immutable-after-load directed lane map.

    Safe to share across threads: nothing mutates it after load_map
    returns, and all module operations are pure functions of their inputs.
    """

    nodes: dict[str, LaneNode]
    segments: dict[str, LaneSegment]
    signals_by_node: dict[str, SignalNode]
    out_segments: dict[str, tuple[str, ...]] = field(default_factory=dict)
    in_segments: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def node_point(self, node_id: str) -> GeoPoint:
        return self.nodes[node_id].position


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points.

    Uses the haversine form on a sphere of radius EARTH_RADIUS_M, which is
    numerically stable for the short distances a lane map deals in.
    """

    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    d_phi = math.radians(b.lat - a.lat)
    d_lambda = math.radians(b.lon - a.lon)
    h = math.sin(d_phi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(d_lambda / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from a to b, degrees clockwise from north."""

    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    d_lambda = math.radians(b.lon - a.lon)
    y = math.sin(d_lambda) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(d_lambda)
    return math.degrees(math.atan2(y, x)) % 360.0


def heading_to_unit(heading_deg: float) -> tuple[float, float]:
    """Unit vector (east, north) for a compass heading (0 = north, clockwise)."""

    rad = math.radians(heading_deg)
    return (math.sin(rad), math.cos(rad))


def unit_vector_between(a: GeoPoint, b: GeoPoint) -> tuple[float, float]:
    """Unit direction from a to b in the local east-north frame at a."""

    east = math.radians(b.lon - a.lon) * math.cos(math.radians(a.lat))
    north = math.radians(b.lat - a.lat)
    norm = math.hypot(east, north)
    if norm < 1e-15:
        raise ValueError("coincident points have no direction")
    return (east / norm, north / norm)


def heading_consistent(truck_heading_deg: float, direction_to_signal_unit: tuple[float, float]) -> bool:
    """True when the truck heading points the same way as the lane direction.

    The test is a strictly positive inner product between the heading unit
    vector and the given east-north direction; exactly perpendicular
    headings are treated as inconsistent.
    """

    if not math.isfinite(truck_heading_deg):
        raise ValueError("non-finite heading")
    ue, un = direction_to_signal_unit
    norm = math.hypot(ue, un)
    if norm < 1e-12:
        raise ValueError("zero-length direction vector")
    he, hn = heading_to_unit(truck_heading_deg)
    return (he * ue + hn * un) / norm > 0.0


def angular_difference_deg(a_deg: float, b_deg: float) -> float:
    """Absolute difference between two headings, folded into [0, 180]."""

    d = abs(a_deg - b_deg) % 360.0
    return min(d, 360.0 - d)


@dataclass(frozen=True)
class SegmentProjection:
    lateral_error_m: float
    remaining_to_end_m: float
    out_of_segment: bool
    side: str  # "interior", "before", "beyond"


def project_onto_segment(truck: GeoPoint, n1: GeoPoint, n2: GeoPoint) -> SegmentProjection:
    """Project the truck onto the n1->n2 lane segment.

    The triangle (truck, n1, n2) gives the lane-drift height h via Heron's
    area, and the Pythagorean theorem then yields the distance from the
    projection point to the downstream node n2. A degenerate (collinear)
    triangle is not an error: h is 0 and the remaining distance is the
    direct truck->n2 distance. Projections falling outside the segment are
    clamped and flagged.
    """

    d_tn1 = haversine_distance(truck, n1)
    d_tn2 = haversine_distance(truck, n2)
    d_n1n2 = haversine_distance(n1, n2)
    if d_n1n2 <= 0.0:
        raise ValueError("segment endpoints coincide")

    s = (d_tn1 + d_tn2 + d_n1n2) / 2.0
    area_sq = s * (s - d_tn1) * (s - d_tn2) * (s - d_n1n2)
    area = math.sqrt(max(0.0, area_sq))
    h = 2.0 * area / d_n1n2
    remaining = math.sqrt(max(0.0, d_tn2 * d_tn2 - h * h))

    # Obtuse angle at an endpoint means the foot of the perpendicular lies
    # off the segment on that side.
    if d_tn1 * d_tn1 > d_tn2 * d_tn2 + d_n1n2 * d_n1n2:
        return SegmentProjection(h, 0.0, True, "beyond")
    if d_tn2 * d_tn2 > d_tn1 * d_tn1 + d_n1n2 * d_n1n2:
        return SegmentProjection(h, d_n1n2, True, "before")
    return SegmentProjection(h, min(remaining, d_n1n2), False, "interior")


def _segment_candidate_distance(proj: SegmentProjection, d_tn1: float, d_tn2: float) -> float:
    if proj.side == "interior":
        return proj.lateral_error_m
    return min(d_tn1, d_tn2)


def distance_to_next_signal(mapgraph: MapGraph, segment_id: str, remaining_on_segment_m: float) -> tuple[float, SignalNode]:
    """Along-road distance from a point on a segment to the next signal.

    Walks downstream from the segment's end node, accumulating segment
    lengths, until a signal node is reached. Raises NoSignalAheadError when
    the chain ends, branches, or loops back without passing a signal.
    """

    seg = mapgraph.segments[segment_id]
    dist = remaining_on_segment_m
    node = seg.to_node
    visited = {seg.from_node}
    while True:
        sig = mapgraph.signals_by_node.get(node)
        if sig is not None:
            return dist, sig
        if node in visited:
            raise NoSignalAheadError(f"lane chain loops at node {node!r} without a signal")
        visited.add(node)
        outs = mapgraph.out_segments.get(node, ())
        if len(outs) != 1:
            raise NoSignalAheadError(f"no signal downstream of node {node!r}")
        nxt = mapgraph.segments[outs[0]]
        dist += nxt.length_m
        node = nxt.to_node


def match_to_map(truck: GeoPoint, heading_deg: float, mapgraph: MapGraph, max_match_radius_m: float = 25.0) -> MatchResult:
    """Locate the truck on the nearest heading-consistent lane segment.

    Candidates are filtered by the inner-product heading test, ranked by
    lateral distance (endpoint distance for off-segment projections), and
    tie-broken by heading difference then segment id so that matching is
    deterministic. The returned distance_to_signal_m uses the projection
    point, not the raw GNSS fix, so lateral drift does not inflate it.
    """

    best: Optional[tuple[float, float, str, SegmentProjection]] = None
    for seg_id in sorted(mapgraph.segments):
        seg = mapgraph.segments[seg_id]
        if not heading_consistent(heading_deg, heading_to_unit(seg.heading_deg)):
            continue
        n1 = mapgraph.node_point(seg.from_node)
        n2 = mapgraph.node_point(seg.to_node)
        proj = project_onto_segment(truck, n1, n2)
        dist = _segment_candidate_distance(proj, haversine_distance(truck, n1), haversine_distance(truck, n2))
        if dist > max_match_radius_m:
            continue
        key = (dist, angular_difference_deg(heading_deg, seg.heading_deg), seg_id)
        if best is None or key < (best[0], best[1], best[2]):
            best = (key[0], key[1], seg_id, proj)

    if best is None:
        raise NoMatchError(
            f"no heading-consistent lane within {max_match_radius_m:.0f} m of "
            f"({truck.lat:.6f}, {truck.lon:.6f}) heading {heading_deg:.1f}"
        )

    seg_id, proj = best[2], best[3]
    # Walk to the neighboring segment when the projection falls off an end
    # and a continuation exists there; clamp at chain ends.
    hops = 0
    while proj.out_of_segment and hops < len(mapgraph.segments):
        seg = mapgraph.segments[seg_id]
        if proj.side == "beyond":
            outs = mapgraph.out_segments.get(seg.to_node, ())
            nxt_id = _pick_consistent(outs, heading_deg, mapgraph)
        else:
            ins = mapgraph.in_segments.get(seg.from_node, ())
            nxt_id = _pick_consistent(ins, heading_deg, mapgraph)
        if nxt_id is None:
            break
        nxt = mapgraph.segments[nxt_id]
        nxt_proj = project_onto_segment(truck, mapgraph.node_point(nxt.from_node), mapgraph.node_point(nxt.to_node))
        if nxt_proj.side == proj.side:
            # Still off the same end on the neighbor: keep walking.
            seg_id, proj = nxt_id, nxt_proj
            hops += 1
            continue
        if not nxt_proj.out_of_segment:
            seg_id, proj = nxt_id, nxt_proj
        break

    d_sig, signal = distance_to_next_signal(mapgraph, seg_id, proj.remaining_to_end_m)
    return MatchResult(
        segment_id=seg_id,
        lateral_error_m=proj.lateral_error_m,
        along_segment_remaining_m=proj.remaining_to_end_m,
        distance_to_signal_m=d_sig,
        signal=signal,
        out_of_segment=proj.out_of_segment,
    )


def _pick_consistent(seg_ids: Iterable[str], heading_deg: float, mapgraph: MapGraph) -> Optional[str]:
    candidates = [
        sid for sid in seg_ids
        if heading_consistent(heading_deg, heading_to_unit(mapgraph.segments[sid].heading_deg))
    ]
    if not candidates:
        return None
    candidates.sort(key=lambda sid: (angular_difference_deg(heading_deg, mapgraph.segments[sid].heading_deg), sid))
    return candidates[0]


# -- map loading ------------------------------------------------------------

_NODE_KEYS = {"id", "lat", "lon"}
_SEGMENT_KEYS = {"id", "from", "to", "speed_limit_mps", "road_name", "heading_deg"}
_SIGNAL_KEYS = {"node_id", "intersection_id", "signal_group_id"}


def load_map(source: str | dict) -> MapGraph:
    """Parse and validate a map document (JSON text or an already-parsed tree).

    Segment lengths are always derived from node coordinates, never read
    from the document. Violations are reported with the offending element
    named so bad maps fail loudly at load time rather than mid-run.
    """

    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise MapLoadError(f"map document is not valid JSON: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise MapLoadError("map document root must be an object")
    for key in ("nodes", "segments", "signals"):
        if key not in doc or not isinstance(doc[key], list):
            raise MapLoadError(f"map document missing array {key!r}")

    nodes: dict[str, LaneNode] = {}
    for raw in doc["nodes"]:
        _require_keys(raw, _NODE_KEYS, "node")
        nid = str(raw["id"])
        if nid in nodes:
            raise MapLoadError(f"duplicate node id {nid!r}")
        try:
            pos = GeoPoint(float(raw["lat"]), float(raw["lon"]))
        except (TypeError, ValueError) as exc:
            raise MapLoadError(f"node {nid!r}: {exc}") from exc
        nodes[nid] = LaneNode(nid, pos)

    segments: dict[str, LaneSegment] = {}
    for raw in doc["segments"]:
        _require_keys(raw, _SEGMENT_KEYS, "segment")
        sid = str(raw["id"])
        if sid in segments:
            raise MapLoadError(f"duplicate segment id {sid!r}")
        frm, to = str(raw["from"]), str(raw["to"])
        for endpoint in (frm, to):
            if endpoint not in nodes:
                raise MapLoadError(f"segment {sid!r} references missing node {endpoint!r}")
        if frm == to:
            raise MapLoadError(f"segment {sid!r} starts and ends at node {frm!r}")
        length = haversine_distance(nodes[frm].position, nodes[to].position)
        if length <= 0.0:
            raise MapLoadError(f"segment {sid!r} has zero length (coincident nodes)")
        limit = float(raw["speed_limit_mps"])
        if not (math.isfinite(limit) and limit > 0.0):
            raise MapLoadError(f"segment {sid!r} speed_limit_mps must be > 0")
        heading = float(raw["heading_deg"])
        if not (0.0 <= heading < 360.0):
            raise MapLoadError(f"segment {sid!r} heading_deg must be in [0, 360)")
        segments[sid] = LaneSegment(sid, frm, to, length, limit, str(raw["road_name"]), heading)

    signals: dict[str, SignalNode] = {}
    seen_pairs: set[tuple[str, str]] = set()
    for raw in doc["signals"]:
        _require_keys(raw, _SIGNAL_KEYS, "signal")
        node_id = str(raw["node_id"])
        if node_id not in nodes:
            raise MapLoadError(f"signal references missing node {node_id!r}")
        if node_id in signals:
            raise MapLoadError(f"duplicate signal at node {node_id!r}")
        pair = (str(raw["intersection_id"]), str(raw["signal_group_id"]))
        if pair in seen_pairs:
            raise MapLoadError(f"duplicate (intersection_id, signal_group_id) pair {pair!r}")
        seen_pairs.add(pair)
        signals[node_id] = SignalNode(node_id, pair[0], pair[1])

    out_segments: dict[str, list[str]] = {}
    in_segments: dict[str, list[str]] = {}
    for sid in sorted(segments):
        seg = segments[sid]
        out_segments.setdefault(seg.from_node, []).append(sid)
        in_segments.setdefault(seg.to_node, []).append(sid)

    graph = MapGraph(
        nodes=nodes,
        segments=segments,
        signals_by_node=signals,
        out_segments={k: tuple(v) for k, v in out_segments.items()},
        in_segments={k: tuple(v) for k, v in in_segments.items()},
    )
    _check_simple_chains(graph)
    return graph


def _require_keys(raw, keys: set[str], kind: str):
    if not isinstance(raw, dict):
        raise MapLoadError(f"{kind} entries must be objects")
    missing = keys - set(raw)
    if missing:
        raise MapLoadError(f"{kind} {raw.get('id', raw.get('node_id', '?'))!r} missing fields {sorted(missing)}")


def _check_simple_chains(graph: MapGraph):
    """Reject maps where a lane path between a point and a signal branches.

    A node with more than one outgoing segment is fine only if no signal is
    reachable downstream of it; otherwise the distance-to-signal walk would
    be ambiguous.
    """

    for node_id in sorted(graph.out_segments):
        outs = graph.out_segments[node_id]
        if len(outs) <= 1:
            continue
        reachable = _reachable_signal(graph, node_id)
        if reachable is not None:
            raise MapLoadError(
                f"node {node_id!r} branches into {len(outs)} lanes on a path to "
                f"signal at node {reachable!r}; chains to a signal must be simple"
            )


def _reachable_signal(graph: MapGraph, start_node: str) -> Optional[str]:
    stack = [start_node]
    seen: set[str] = set()
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        for sid in graph.out_segments.get(node, ()):
            to = graph.segments[sid].to_node
            if to in graph.signals_by_node:
                return to
            stack.append(to)
    return None


def load_map_file(path: str) -> MapGraph:
    with open(path, encoding="utf-8") as f:
        return load_map(f.read())


def dump_map(graph: MapGraph) -> dict:
    """Serialize a MapGraph back to the document schema (lengths omitted)."""

    return {
        "nodes": [
            {"id": n.id, "lat": n.position.lat, "lon": n.position.lon}
            for n in sorted(graph.nodes.values(), key=lambda n: n.id)
        ],
        "segments": [
            {
                "id": s.id,
                "from": s.from_node,
                "to": s.to_node,
                "speed_limit_mps": s.speed_limit_mps,
                "road_name": s.road_name,
                "heading_deg": s.heading_deg,
            }
            for s in sorted(graph.segments.values(), key=lambda s: s.id)
        ],
        "signals": [
            {
                "node_id": sig.node_id,
                "intersection_id": sig.intersection_id,
                "signal_group_id": sig.signal_group_id,
            }
            for sig in sorted(graph.signals_by_node.values(), key=lambda s: s.node_id)
        ],
    }


# -- driving along a lane chain ----------------------------------------------


def point_along_segment(mapgraph: MapGraph, segment_id: str, dist_from_start_m: float) -> GeoPoint:
    """Interpolate a position on a segment at a given distance from its start."""

    seg = mapgraph.segments[segment_id]
    f = min(1.0, max(0.0, dist_from_start_m / seg.length_m))
    a = mapgraph.node_point(seg.from_node)
    b = mapgraph.node_point(seg.to_node)
    return GeoPoint(a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f)


class ChainCursor:
    """Mutable position on a lane chain used to drive a vehicle along the map.

    Advancing past a segment end hops to the single downstream continuation;
    at a chain end the cursor clamps and reports that the road ran out.
    """

    def __init__(self, mapgraph: MapGraph, segment_id: str, dist_from_start_m: float):
        self._map = mapgraph
        self.segment_id = segment_id
        self.dist_from_start_m = max(0.0, dist_from_start_m)
        self.at_chain_end = False

    @classmethod
    def at_point(cls, mapgraph: MapGraph, point: GeoPoint, heading_deg: float) -> "ChainCursor":
        m = match_to_map(point, heading_deg, mapgraph)
        seg = mapgraph.segments[m.segment_id]
        return cls(mapgraph, m.segment_id, seg.length_m - m.along_segment_remaining_m)

    @property
    def segment(self) -> LaneSegment:
        return self._map.segments[self.segment_id]

    @property
    def position(self) -> GeoPoint:
        return point_along_segment(self._map, self.segment_id, self.dist_from_start_m)

    @property
    def heading_deg(self) -> float:
        return self.segment.heading_deg

    @property
    def speed_limit_mps(self) -> float:
        return self.segment.speed_limit_mps

    def advance(self, distance_m: float) -> float:
        """Move the cursor forward, returning the distance actually covered."""

        moved = 0.0
        left = max(0.0, distance_m)
        while left > 0.0:
            seg = self.segment
            room = seg.length_m - self.dist_from_start_m
            if left < room:
                self.dist_from_start_m += left
                moved += left
                break
            moved += room
            left -= room
            outs = self._map.out_segments.get(seg.to_node, ())
            if len(outs) != 1:
                self.dist_from_start_m = seg.length_m
                self.at_chain_end = True
                break
            self.segment_id = outs[0]
            self.dist_from_start_m = 0.0
        return moved
