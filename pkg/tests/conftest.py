"""Shared helpers: planar map construction and fixture paths."""

import math
import os

import pytest

from ecodrive import geomap

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def fixture_path(*parts: str) -> str:
    return os.path.abspath(os.path.join(FIXTURES, *parts))


def offset_point(lat: float, lon: float, east_m: float, north_m: float) -> tuple[float, float]:
    """Coordinates displaced by small planar offsets, on the same sphere
    the package uses. Good to sub-mm for offsets under a few km."""

    dlat = math.degrees(north_m / geomap.EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (geomap.EARTH_RADIUS_M * math.cos(math.radians(lat))))
    return lat + dlat, lon + dlon


def chain_map(
    lengths_m: list[float],
    signal_nodes: list[int],
    lat0: float = 0.0,
    lon0: float = 0.0,
    speed_limit_mps: float = 15.0,
    heading_deg: float = 90.0,
) -> dict:
    """East-running chain of segments with the given lengths; signals sit at
    the node indices listed in signal_nodes."""

    cum = [0.0]
    for length in lengths_m:
        cum.append(cum[-1] + length)
    nodes = []
    for i, d in enumerate(cum):
        lat, lon = offset_point(lat0, lon0, d, 0.0)
        nodes.append({"id": f"N{i}", "lat": lat, "lon": lon})
    segments = [
        {
            "id": f"S{i}",
            "from": f"N{i}",
            "to": f"N{i+1}",
            "speed_limit_mps": speed_limit_mps,
            "road_name": "Test Rd",
            "heading_deg": heading_deg,
        }
        for i in range(len(lengths_m))
    ]
    signals = [
        {"node_id": f"N{i}", "intersection_id": f"I{k+1}", "signal_group_id": "SG1"}
        for k, i in enumerate(signal_nodes)
    ]
    return {"nodes": nodes, "segments": segments, "signals": signals}


@pytest.fixture(scope="session")
def mainline_map():
    return geomap.load_map_file(fixture_path("maps", "mainline.json"))


@pytest.fixture(scope="session")
def corridor_map():
    return geomap.load_map_file(fixture_path("maps", "corridor.json"))
