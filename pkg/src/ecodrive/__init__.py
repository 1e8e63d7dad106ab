"""Connected eco-driving toolkit: lane-map matching, streamed signal phase
and timing, recommended speed bands, and a deterministic corridor simulator."""

__version__ = "0.1.0"
