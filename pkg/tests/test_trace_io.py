import csv

import pytest
from hypothesis import given
from hypothesis import strategies as st

from turboscale.errors import TraceError
from turboscale.model import load_spec
from turboscale.sim import config_from_spec, run
from turboscale.trace_io import (
    OUTPUT_HEADER,
    Trace,
    WorkloadSpec,
    emit_plot_data,
    emit_trace,
    format_sim_trace,
    generate_trace,
    load_trace,
    parse_trace,
    saturated,
    tblastx_like,
)

GOOD = b"time_s,core_id,utilization\n0,0,0.5\n0,1,1.0\n1,0,0.25\n1,1,0\n2,0,1\n2,1,0.75\n"


# --- parsing ---------------------------------------------------------------------


def test_parse_two_cores_three_ticks():
    trace = parse_trace(GOOD)
    assert len(trace) == 6
    assert trace.times == (0.0, 1.0, 2.0)
    assert trace.utilization[1] == (0.25, 0.0)


def test_parse_out_of_range_cites_line():
    bad = b"time_s,core_id,utilization\n0,0,0.5\n0,1,1.0\n1,0,1.5\n1,1,0\n"
    with pytest.raises(TraceError) as err:
        parse_trace(bad)
    assert err.value.problems[0][0] == 4
    assert "outside [0, 1]" in err.value.problems[0][1]


def test_parse_header_only():
    with pytest.raises(TraceError, match="empty trace"):
        parse_trace(b"time_s,core_id,utilization\n")


@pytest.mark.parametrize(
    "body, reason",
    [
        ("1,0,0.5\n0,0,0.5\n", "unsorted"),
        ("0,0,0.5\n0,0,0.6\n", "duplicate"),
        ("0,0,0.5\n0,1,0.5\n1,0,0.5\n", "missing cores"),
        ("0,0\n", "expected 3 fields"),
        ("0,x,0.5\n", "unparsable"),
    ],
)
def test_parse_rejections(body, reason):
    with pytest.raises(TraceError) as err:
        parse_trace("time_s,core_id,utilization\n" + body)
    assert any(reason in msg for _, msg in err.value.problems)


def test_parse_collects_every_problem():
    body = "time_s,core_id,utilization\n0,0,2\n0,1,-1\n"
    with pytest.raises(TraceError) as err:
        parse_trace(body)
    assert [line for line, _ in err.value.problems][:2] == [2, 3]


def test_parse_bad_header():
    with pytest.raises(TraceError):
        parse_trace(b"t,c,u\n0,0,1\n")


# --- generation --------------------------------------------------------------------


def test_constant_workload():
    trace = generate_trace(WorkloadSpec(4, 10, "constant", u=1.0))
    assert len(trace) == 40
    assert {u for _, _, u in trace.rows()} == {1.0}


def test_square_wave_period_four():
    trace = generate_trace(WorkloadSpec(1, 8, "square", period=4, hi=0.9, lo=0.1))
    assert [row[0] for row in trace.utilization] == [0.9, 0.9, 0.1, 0.1] * 2


def test_random_walk_seeded():
    a = generate_trace(WorkloadSpec(3, 50, "random_walk", step=0.2, seed=11))
    b = generate_trace(WorkloadSpec(3, 50, "random_walk", step=0.2, seed=11))
    c = generate_trace(WorkloadSpec(3, 50, "random_walk", step=0.2, seed=12))
    assert a == b and a != c


def test_workload_validation():
    with pytest.raises(ValueError):
        WorkloadSpec(0, 5)
    with pytest.raises(ValueError):
        WorkloadSpec(1, 5, "sawtooth")
    with pytest.raises(ValueError):
        WorkloadSpec(1, 5, u=1.5)


workloads = st.builds(
    WorkloadSpec,
    n_cores=st.integers(1, 6),
    duration_ticks=st.integers(1, 40),
    pattern=st.sampled_from(["constant", "square", "phased_ramp", "random_walk"]),
    u=st.floats(0, 1),
    period=st.integers(1, 9),
    hi=st.floats(0, 1),
    lo=st.floats(0, 1),
    step=st.floats(0, 0.5),
    seed=st.integers(0, 2**32 - 1),
    tick_seconds=st.sampled_from([0.1, 0.5, 1.0, 2.0]),
)


@given(workloads)
def test_generated_traces_round_trip(spec):
    trace = generate_trace(spec)
    assert all(0.0 <= u <= 1.0 for _, _, u in trace.rows())
    text = emit_trace(trace)
    assert parse_trace(text) == trace
    assert emit_trace(parse_trace(text.encode())) == text


@given(
    st.integers(1, 5).flatmap(
        lambda n: st.lists(st.tuples(*[st.floats(0, 1)] * n), min_size=1, max_size=20)
    ),
    st.floats(0.001, 10),
)
def test_parse_emit_identity_on_arbitrary_floats(rows, dt):
    times = tuple(i * dt for i in range(len(rows)))
    if len(set(times)) != len(times):
        return
    trace = Trace(times, tuple(rows))
    assert parse_trace(emit_trace(trace)) == trace


def test_bundled_traces_match_generators():
    assert load_trace("tblastx-like") == tblastx_like()
    assert load_trace("saturated-3core") == saturated()


def test_tblastx_like_retires_cores():
    trace = tblastx_like()
    active = [sum(u > 0 for u in row) for row in trace.utilization]
    assert active[0] == 4 and active[15] == 3 and active[30] == 2 and active[59] == 1


def test_load_missing_file(tmp_path):
    with pytest.raises(TraceError, match="cannot read"):
        load_trace(tmp_path / "nope.csv")


# --- outputs -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def sim_rows():
    spec = load_spec("core-i7")
    return run(config_from_spec(spec), saturated()).rows


def test_plot_data_layout(sim_rows, tmp_path):
    paths = emit_plot_data(sim_rows, 3_192_000, tmp_path)
    assert sorted(p.name for p in paths) == ["core_0.csv", "core_1.csv", "core_2.csv", "core_3.csv", "reference.csv"]
    assert (tmp_path / "reference.csv").read_text().splitlines() == ["guaranteed_khz", "3192000"]


def test_plot_data_halted_core_has_only_utilization(sim_rows, tmp_path):
    emit_plot_data(sim_rows, 3_192_000, tmp_path)
    with open(tmp_path / "core_3.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20
    assert all(r["measured_khz"] == "" and r["utilization"] == "0.0" for r in rows)
    with open(tmp_path / "core_0.csv", newline="") as fh:
        assert all(r["measured_khz"] for r in csv.DictReader(fh))


def test_plot_data_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data([], 3_192_000, tmp_path)


def test_sim_trace_format(sim_rows):
    lines = format_sim_trace(sim_rows).splitlines()
    assert lines[0] == ",".join(OUTPUT_HEADER)
    assert len(lines) == 1 + len(sim_rows)
    assert lines[4].split(",")[3:5] == ["", ""]  # core 3 asleep
