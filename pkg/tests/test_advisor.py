"""Speed-band advisory tests: the core band rules, lead handling, message
aging, and the tick loop."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecodrive import advisor, geomap, spatnet
from ecodrive.advisor import (
    GATING_ACTIVE,
    GATING_CAPPED_BY_LEAD,
    GATING_NO_SIGNAL,
    GATING_SUPPRESSED_TTC,
    AdvisoryConfig,
    AdvisoryEngine,
    AdvisoryInput,
    LeadVehicleObservation,
    advise,
    advisory_loop,
    reference_speed,
    time_to_collision,
)
from ecodrive.spatnet import AMBER, GREEN, RED, SpatMessage

from conftest import chain_map, offset_point


def band_of(phase, d, t, v_lim, lead=None, red_after=0.0):
    inp = AdvisoryInput(d_sig_m=d, phase=phase, t_current_s=t, v_lim_mps=v_lim, lead=lead)
    return advise(inp, red_time_after_amber_s=red_after)


# -- reference speed -------------------------------------------------------------


def test_reference_speed_examples():
    assert reference_speed(100.0, 10.0) == pytest.approx(10.0)
    assert reference_speed(0.0, 10.0) == pytest.approx(0.0)
    assert reference_speed(100.0, 0.0) == math.inf


def test_reference_speed_tiny_residual_is_infinite():
    # below the epsilon guard the division is not attempted
    assert reference_speed(50.0, 0.05) == math.inf


# -- band rules -------------------------------------------------------------------


def test_red_band_bounded_by_reference_speed():
    band = band_of(RED, 100.0, 10.0, 15.0)
    assert (band.v_lower_mps, band.v_upper_mps) == pytest.approx((0.0, 10.0))
    assert band.gating == GATING_ACTIVE


def test_red_band_clipped_to_speed_limit():
    band = band_of(RED, 200.0, 10.0, 15.0)
    assert (band.v_lower_mps, band.v_upper_mps) == pytest.approx((0.0, 15.0))


def test_green_band_lower_bounded_by_reference_speed():
    band = band_of(GREEN, 100.0, 10.0, 15.0)
    assert (band.v_lower_mps, band.v_upper_mps) == pytest.approx((10.0, 15.0))


def test_green_band_collapses_when_unreachable():
    band = band_of(GREEN, 200.0, 10.0, 15.0)
    assert (band.v_lower_mps, band.v_upper_mps) == (0.0, 0.0)
    assert band.gating == GATING_ACTIVE


def test_amber_is_red_extended_by_following_red():
    # amber residual 4 plus 26 of red: release in 30 s
    band = band_of(AMBER, 150.0, 4.0, 15.0, red_after=26.0)
    ref = band_of(RED, 150.0, 30.0, 15.0)
    assert band == ref
    assert band.v_upper_mps == pytest.approx(5.0)


def test_lead_caps_upper_bound():
    lead = LeadVehicleObservation(gap_m=40.0, lead_speed_mps=12.0, relative_speed_mps=0.0)
    band = band_of(GREEN, 100.0, 10.0, 15.0, lead=lead)
    assert (band.v_lower_mps, band.v_upper_mps) == pytest.approx((10.0, 12.0))
    assert band.gating == GATING_CAPPED_BY_LEAD


def test_lead_cap_pulls_lower_bound_down_with_it():
    lead = LeadVehicleObservation(gap_m=40.0, lead_speed_mps=8.0, relative_speed_mps=0.0)
    band = band_of(GREEN, 100.0, 10.0, 15.0, lead=lead)
    assert (band.v_lower_mps, band.v_upper_mps) == pytest.approx((8.0, 8.0))
    assert band.gating == GATING_CAPPED_BY_LEAD


def test_faster_lead_does_not_cap():
    lead = LeadVehicleObservation(gap_m=40.0, lead_speed_mps=20.0, relative_speed_mps=-1.0)
    band = band_of(GREEN, 100.0, 10.0, 15.0, lead=lead)
    assert band.gating == GATING_ACTIVE
    assert band.v_upper_mps == pytest.approx(15.0)


def test_closing_fast_suppresses_display():
    lead = LeadVehicleObservation(gap_m=20.0, lead_speed_mps=5.0, relative_speed_mps=10.0)
    band = band_of(GREEN, 100.0, 10.0, 15.0, lead=lead)
    assert band.gating == GATING_SUPPRESSED_TTC
    assert not band.displayable


def test_suppression_dominates_lead_cap():
    lead = LeadVehicleObservation(gap_m=10.0, lead_speed_mps=2.0, relative_speed_mps=8.0)
    band = band_of(GREEN, 100.0, 10.0, 15.0, lead=lead)
    assert band.gating == GATING_SUPPRESSED_TTC


# -- time to collision --------------------------------------------------------------


def test_ttc_examples():
    assert time_to_collision(LeadVehicleObservation(50.0, 10.0, 10.0)) == pytest.approx(5.0)
    assert time_to_collision(LeadVehicleObservation(50.0, 10.0, 0.0)) is None
    assert time_to_collision(LeadVehicleObservation(50.0, 10.0, -3.0)) is None


def test_ttc_exactly_at_threshold_is_not_suppressed():
    # ttc = 2 / 0.5 = 4.0 against the 4.0 s default: strictly-below rule
    lead = LeadVehicleObservation(gap_m=2.0, lead_speed_mps=1.0, relative_speed_mps=0.5)
    band = band_of(RED, 100.0, 10.0, 15.0, lead=lead)
    assert band.gating != GATING_SUPPRESSED_TTC


@settings(max_examples=200)
@given(
    gap_a=st.floats(min_value=1.0, max_value=200.0),
    gap_b=st.floats(min_value=1.0, max_value=200.0),
    closing=st.floats(min_value=0.1, max_value=20.0),
)
def test_ttc_monotone_in_gap(gap_a, gap_b, closing):
    ttc_a = time_to_collision(LeadVehicleObservation(gap_a, 5.0, closing))
    ttc_b = time_to_collision(LeadVehicleObservation(gap_b, 5.0, closing))
    if gap_a <= gap_b:
        assert ttc_a <= ttc_b
    else:
        assert ttc_a >= ttc_b


# -- band invariants ------------------------------------------------------------------


phases = st.sampled_from([GREEN, AMBER, RED])
maybe_lead = st.one_of(
    st.none(),
    st.builds(
        LeadVehicleObservation,
        gap_m=st.floats(min_value=0.5, max_value=300.0),
        lead_speed_mps=st.floats(min_value=0.0, max_value=30.0),
        relative_speed_mps=st.floats(min_value=-10.0, max_value=20.0),
    ),
)


@settings(max_examples=500)
@given(
    phase=phases,
    d=st.floats(min_value=0.0, max_value=2000.0),
    t=st.floats(min_value=0.0, max_value=180.0),
    v_lim=st.floats(min_value=1.0, max_value=35.0),
    lead=maybe_lead,
    red_after=st.floats(min_value=0.0, max_value=60.0),
)
def test_band_always_well_formed(phase, d, t, v_lim, lead, red_after):
    band = band_of(phase, d, t, v_lim, lead=lead, red_after=red_after)
    assert 0.0 <= band.v_lower_mps <= band.v_upper_mps
    assert band.v_upper_mps <= v_lim + 1e-9
    if band.gating == GATING_ACTIVE and lead is not None:
        # an uncapped band means the lead was not slower than the cap point
        assert lead.lead_speed_mps >= band.v_upper_mps - 1e-9


@settings(max_examples=300)
@given(
    phase=phases,
    d=st.floats(min_value=1.0, max_value=2000.0),
    t=st.floats(min_value=0.0, max_value=180.0),
    v_lim=st.floats(min_value=1.0, max_value=35.0),
    lead_speed=st.floats(min_value=0.0, max_value=30.0),
)
def test_lead_cap_never_raises_upper_bound(phase, d, t, v_lim, lead_speed):
    free = band_of(phase, d, t, v_lim)
    lead = LeadVehicleObservation(gap_m=100.0, lead_speed_mps=lead_speed, relative_speed_mps=0.0)
    capped = band_of(phase, d, t, v_lim, lead=lead)
    assert capped.v_upper_mps <= free.v_upper_mps + 1e-9
    assert capped.v_lower_mps <= free.v_lower_mps + 1e-9


# -- message tracking and aging ----------------------------------------------------------


def _engine_on_chain(d_sig: float = 200.0, staleness_s: float = 2.5):
    doc = chain_map([500.0], signal_nodes=[1], speed_limit_mps=15.0)
    graph = geomap.load_map(doc)
    lat, lon = offset_point(0.0, 0.0, 500.0 - d_sig, 0.0)
    pos = geomap.GeoPoint(lat, lon)
    cfg = AdvisoryConfig(staleness_s=staleness_s)
    return AdvisoryEngine(graph, cfg), pos


def test_aging_subtracts_elapsed_time():
    engine, pos = _engine_on_chain(d_sig=100.0)
    engine.receive(SpatMessage("I1", "SG1", RED, 10, timestamp_ms=0))
    rec = engine.advise_at(400, pos, 90.0, 10.0)
    assert rec.t_used_s == pytest.approx(9.6)
    assert rec.phase == RED
    assert rec.band.v_upper_mps == pytest.approx(100.0 / 9.6, abs=1e-4)


def test_aging_floors_at_zero():
    engine, pos = _engine_on_chain()
    engine.receive(SpatMessage("I1", "SG1", RED, 1, timestamp_ms=0))
    rec = engine.advise_at(2400, pos, 90.0, 10.0)
    assert rec.t_used_s == 0.0
    # residual gone: release is imminent, no upper cap below the limit
    assert rec.band.v_upper_mps == pytest.approx(15.0)


def test_silence_past_staleness_goes_no_signal():
    engine, pos = _engine_on_chain(staleness_s=2.5)
    engine.receive(SpatMessage("I1", "SG1", RED, 20, timestamp_ms=0))
    rec = engine.advise_at(3000, pos, 90.0, 10.0)
    assert rec.band.gating == GATING_NO_SIGNAL
    assert rec.phase is None
    assert rec.t_used_s == 0.0
    # the map match still worked, so the distance is real
    assert rec.d_sig_m == pytest.approx(200.0, abs=1e-2)


def test_message_exactly_at_staleness_still_used():
    engine, pos = _engine_on_chain(staleness_s=2.5)
    engine.receive(SpatMessage("I1", "SG1", RED, 20, timestamp_ms=0))
    rec = engine.advise_at(2500, pos, 90.0, 10.0)
    assert rec.band.gating == GATING_ACTIVE
    assert rec.t_used_s == pytest.approx(17.5)


def test_no_message_at_all_is_no_signal():
    engine, pos = _engine_on_chain()
    rec = engine.advise_at(0, pos, 90.0, 10.0)
    assert rec.band.gating == GATING_NO_SIGNAL
    assert rec.input is None


def test_tracker_ignores_out_of_order_arrivals():
    engine, pos = _engine_on_chain()
    engine.receive(SpatMessage("I1", "SG1", GREEN, 8, timestamp_ms=2000))
    engine.receive(SpatMessage("I1", "SG1", RED, 25, timestamp_ms=1000))  # late straggler
    rec = engine.advise_at(2100, pos, 90.0, 10.0)
    assert rec.phase == GREEN
    assert rec.t_used_s == pytest.approx(7.9)


def test_aging_identity_when_residual_positive():
    engine, pos = _engine_on_chain()
    engine.receive(SpatMessage("I1", "SG1", RED, 12, timestamp_ms=5000))
    for t_ms in (5000, 5300, 6000, 7500):
        rec = engine.advise_at(t_ms, pos, 90.0, 10.0)
        if rec.t_used_s > 0.0:
            age_s = (t_ms - 5000) / 1000.0
            assert rec.t_used_s + age_s == pytest.approx(12.0)


def test_offline_recompute_reproduces_band():
    # the logged input context is sufficient to recompute the band exactly
    engine, pos = _engine_on_chain()
    engine.receive(SpatMessage("I1", "SG1", AMBER, 3, timestamp_ms=0))
    engine.red_times_after_amber[("I1", "SG1")] = 26.0
    rec = engine.advise_at(700, pos, 90.0, 9.0)
    assert rec.input is not None
    again = advise(rec.input, red_time_after_amber_s=26.0)
    assert again == rec.band


# -- the tick loop -----------------------------------------------------------------------


def test_advisory_loop_drains_messages_and_ends_on_lost_localization():
    doc = chain_map([500.0], signal_nodes=[1], speed_limit_mps=15.0)
    graph = geomap.load_map(doc)
    lat, lon = offset_point(0.0, 0.0, 300.0, 0.0)
    pos = geomap.GeoPoint(lat, lon)

    stream = [
        (100.0, SpatMessage("I1", "SG1", RED, 10, timestamp_ms=0)),
        (1100.0, SpatMessage("I1", "SG1", RED, 9, timestamp_ms=1000)),
    ]
    times = iter([0, 400, 1200, 1300])
    pulls = {"n": 0}

    def clock():
        return next(times)

    def localization():
        pulls["n"] += 1
        if pulls["n"] > 3:
            return None
        return (pos, 90.0, 10.0)

    records = list(advisory_loop(stream, localization, lambda: None, clock, graph))
    assert len(records) == 3
    # message delivered at 100 ms is not yet visible at the t=0 pull
    assert records[0].band.gating == GATING_NO_SIGNAL
    assert records[1].t_used_s == pytest.approx(9.6)
    assert records[2].t_used_s == pytest.approx(8.8)  # second message, aged 0.2
