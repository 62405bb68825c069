import io
import json

import pytest

from turboscale.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main
from turboscale.model import load_spec
from turboscale.trace_io import parse_trace, tblastx_like


def call(*argv):
    buf = io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


def objective_line(text):
    return next(line for line in text.splitlines() if line.startswith("# objective_khz="))


# --- solve -----------------------------------------------------------------------


def test_solve_lookup_demo():
    code, text = call("solve", "--spec", "lookup-demo", "--active", "2", "--budget", "132", "--method", "lookup")
    assert code == EXIT_OK
    assert "chosen_khz=2500000" in text
    assert text.splitlines()[1] == "0,2500000,66.0"


def test_solve_lookup_none_is_infeasible():
    code, text = call("solve", "--spec", "lookup-demo", "--active", "4", "--budget", "139", "--method", "lookup")
    assert code == EXIT_INFEASIBLE and "infeasible" in text


def test_solve_tiny_budget_infeasible(capsys):
    code, _ = call("solve", "--spec", "small", "--budget", "0.1")
    assert code == EXIT_INFEASIBLE
    assert "infeasible: guaranteed floor exceeds budget" in capsys.readouterr().err


def test_solve_exact_matches_oracle():
    _, exact = call("solve", "--spec", "small", "--method", "exact")
    _, oracle = call("solve", "--spec", "small", "--method", "oracle")
    assert objective_line(exact) == objective_line(oracle)
    assert "objective_khz=11900000" in exact


def test_solve_greedy_and_explicit_cores():
    code, text = call("solve", "--spec", "core-i7", "--cores", "1,3", "--budget", "60", "--method", "greedy")
    assert code == EXIT_OK
    rows = [line.split(",") for line in text.splitlines()[1:3]]
    assert [r[0] for r in rows] == ["1", "3"]
    assert "optimal=false" in text


def test_solve_bad_spec_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert call("solve", "--spec", str(bad))[0] == EXIT_INPUT
    assert "malformed-spec-file" in capsys.readouterr().err


def test_usage_error_exits_one():
    assert call("solve")[0] == EXIT_INPUT
    assert call("solve", "--spec", "small", "--method", "magic")[0] == EXIT_INPUT


# --- simulate --------------------------------------------------------------------


def _sim(tmp_path, *extra):
    return call("simulate", "--spec", "core-i7", "--trace", "tblastx-like", "--out-dir", str(tmp_path), *extra)


def test_simulate_visits_bins_per_table(tmp_path):
    code, _ = _sim(tmp_path, "--arbiter", "baseline", "--governor", "userspace", "--target-khz", "indicator")
    assert code == EXIT_OK
    spec = load_spec("core-i7")
    lad = spec.ladder
    bins = {1: 2, 2: 1, 3: 1, 4: 1}
    out = parse_sim_csv((tmp_path / "trace.csv").read_text())
    for tick, row in enumerate(tblastx_like().utilization):
        n_a = sum(u > 0 for u in row)
        want = lad.levels[lad.guaranteed_index + bins[n_a]].freq_khz
        for core, u in enumerate(row):
            assert out[(tick, core)] == (want if u > 0 else None)
    for name in ("core_0.csv", "core_3.csv", "reference.csv", "summary.json"):
        assert (tmp_path / name).exists()


def parse_sim_csv(text):
    out = {}
    for line in text.splitlines()[1:]:
        t, core, _, granted, *_ = line.split(",")
        out[(int(float(t)), int(core))] = int(granted) if granted else None
    return out


def test_simulate_turbo_off(tmp_path):
    assert _sim(tmp_path, "--turbo", "off")[0] == EXIT_OK
    granted = [g for g in parse_sim_csv((tmp_path / "trace.csv").read_text()).values() if g]
    assert granted and max(granted) <= 3_192_000


def test_simulate_repeatable(tmp_path):
    _sim(tmp_path / "one", "--seed", "5")
    _sim(tmp_path / "two", "--seed", "5")
    for name in ("trace.csv", "core_2.csv", "reference.csv", "summary.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_simulate_infeasible_optimal(tmp_path):
    code, _ = _sim(tmp_path, "--arbiter", "optimal", "--budget", "20")
    assert code == EXIT_INFEASIBLE


def test_simulate_bad_trace(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("time_s,core_id,utilization\n0,0,3\n")
    code, _ = call("simulate", "--spec", "core-i7", "--trace", str(bad), "--out-dir", str(tmp_path / "o"))
    assert code == EXIT_INPUT


# --- compare ---------------------------------------------------------------------


def test_compare_unrealized_scenario(tmp_path):
    code, text = call("compare", "--spec", "modified-bios", "--trace", "saturated-3core", "--out-dir", str(tmp_path))
    assert code == EXIT_OK
    report = json.loads((tmp_path / "compare.json").read_text())
    assert report["performance_delta_pct"] > 0
    assert report["ticks_a_freq_ge_b"] == 20
    assert "performance_delta_pct=" in text


def test_compare_with_itself_zero(tmp_path):
    code, _ = call(
        "compare", "--spec", "core-i7", "--trace", "tblastx-like", "--out-dir", str(tmp_path),
        "--arbiter-a", "baseline", "--arbiter-b", "baseline",
    )
    assert code == EXIT_OK
    assert json.loads((tmp_path / "compare.json").read_text())["performance_delta_pct"] == 0.0


def test_compare_capped_vs_uncapped(tmp_path):
    code, _ = call(
        "compare", "--spec", "modified-bios", "--trace", "saturated-3core", "--out-dir", str(tmp_path),
        "--arbiter-a", "baseline", "--arbiter-b", "baseline", "--cap-a", "none", "--cap-b", "3059000",
    )
    assert code == EXIT_OK
    assert json.loads((tmp_path / "compare.json").read_text())["performance_delta_pct"] > 0


# --- bench / gen-trace -----------------------------------------------------------


def test_bench_small_sizes():
    code, text = call("bench", "--n", "1,3", "--m", "2", "--repetitions", "1")
    assert code == EXIT_OK
    header, *rows = [line.split(",") for line in text.splitlines()]
    gap = header.index("gap_khz")
    assert len(rows) == 2
    assert rows[0][gap] == "0"
    assert all(int(r[gap]) >= 0 for r in rows)


def test_bench_rejects_zero():
    assert call("bench", "--n", "0")[0] == EXIT_INPUT


def test_gen_trace_round_trips(tmp_path):
    code, text = call("gen-trace", "--cores", "2", "--ticks", "6", "--pattern", "square", "--period", "2")
    assert code == EXIT_OK
    trace = parse_trace(text)
    assert [r[0] for r in trace.utilization] == [1.0, 0.0] * 3
    out = tmp_path / "g.csv"
    call("gen-trace", "--cores", "2", "--ticks", "6", "--pattern", "square", "--period", "2", "--out", str(out))
    assert out.read_text() == text


def test_gen_trace_rejects_bad_level():
    assert call("gen-trace", "--cores", "1", "--ticks", "2", "--u", "2")[0] == EXIT_INPUT


@pytest.mark.parametrize("cmd", ["solve", "simulate", "compare", "bench", "gen-trace"])
def test_help_documents_every_subcommand(cmd, capsys):
    assert call(cmd, "--help")[0] == EXIT_OK
    assert "--seed" in capsys.readouterr().out
