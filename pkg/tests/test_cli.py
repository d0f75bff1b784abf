"""Sweep, replay, and throughput front end: files in, CSV and figures out."""

import csv
import json
from pathlib import Path

import pytest

from optirack.cli import (
    ALLOC_COLUMNS,
    SWEEP_COLUMNS,
    THROUGHPUT_COLUMNS,
    AlgorithmEntry,
    CollectiveCall,
    Iteration,
    SweepSpec,
    Trace,
    eval_training_throughput,
    ingest_trace,
    load_sweep_spec,
    main,
    parse_trace_lines,
    run_sweep,
    serialize_trace,
    write_sweep_csv,
)
from optirack.cost import CostParams, closed_form
from optirack.errors import ParseError, SpecInvalid

B = 300_000.0
PLAIN = CostParams(alpha_us=0.7, bandwidth=B)
PHOTONIC = CostParams(alpha_us=0.7, bandwidth=B, reconfig_delay_us=3.7,
                      charge_reconfig=True)


def write_spec(tmp_path, body, name="sweep.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


SMALL_SPEC = {
    "gpu_counts": [4, 16],
    "buffer_bytes": [1024, 65536],
    "algorithms": {
        "ring": {"alpha_us": 0.7, "bandwidth_gbps": 300},
        "radix-2": {"alpha_us": 0.7, "bandwidth_gbps": 300,
                    "reconfig_delay_us": 3.7, "charge_reconfig": True},
    },
}


# -- trace ingestion --------------------------------------------------------


def test_parse_trace_lines():
    trace = parse_trace_lines([
        '{"compute_us": 100.0, "collectives": [{"bytes": 1024, "count": 3}]}',
        "",
        '{"compute_us": 0, "collectives": []}',
    ])
    assert trace == Trace((
        Iteration(100.0, (CollectiveCall(1024, 3),)),
        Iteration(0.0, ()),
    ))


def test_trace_count_defaults_to_one():
    trace = parse_trace_lines(['{"compute_us": 1, "collectives": [{"bytes": 8}]}'])
    assert trace.iterations[0].collectives[0].count == 1


@pytest.mark.parametrize("line", [
    "nope",
    '{"collectives": []}',
    '{"compute_us": -1, "collectives": []}',
    '{"compute_us": 1, "collectives": [{"count": 2}]}',
    '{"compute_us": 1, "collectives": [{"bytes": -5}]}',
    '{"compute_us": 1, "collectives": [{"bytes": 8, "count": -1}]}',
    '{"compute_us": 1, "collectives": {}}',
])
def test_parse_trace_rejects_bad_lines(line):
    with pytest.raises(ParseError) as err:
        parse_trace_lines([line], source="t.jsonl")
    assert "t.jsonl:1" in str(err.value)


def test_trace_round_trips_through_files(tmp_path):
    trace = Trace((
        Iteration(12.5, (CollectiveCall(1024, 2), CollectiveCall(64, 1))),
        Iteration(0.0, ()),
    ))
    path = tmp_path / "trace.jsonl"
    path.write_text(serialize_trace(trace))
    assert ingest_trace(path) == trace


# -- throughput model -------------------------------------------------------


def test_compute_only_trace_gains_nothing():
    trace = Trace((Iteration(250.0, ()), Iteration(100.0, ())))
    result = eval_training_throughput(trace, 256, PLAIN, PHOTONIC)
    assert result.speedup == 1.0
    assert result.t_baseline_us == result.t_photonic_us == 350.0


def test_small_collective_speedup_at_full_rack():
    trace = Trace((Iteration(0.0, (CollectiveCall(1024, 1),)),))
    result = eval_training_throughput(trace, 256, PLAIN, PHOTONIC)
    ring = closed_form("ring", 256, 1024, PLAIN)
    radix = closed_form("radix-2", 256, 1024, PHOTONIC)
    assert result.t_baseline_us == pytest.approx(ring.total_us)
    assert result.t_photonic_us == pytest.approx(radix.total_us)
    assert result.speedup == pytest.approx(5.0706, abs=5e-4)


def test_speedup_shrinks_as_buffers_grow():
    speedups = []
    for payload in (1 << 10, 1 << 16, 1 << 22, 1 << 32):
        trace = Trace((Iteration(0.0, (CollectiveCall(payload, 1),)),))
        speedups.append(
            eval_training_throughput(trace, 256, PLAIN, PHOTONIC).speedup)
    assert speedups == sorted(speedups, reverse=True)
    # bandwidth-bound limit: both fabrics move the same bytes
    assert speedups[-1] == pytest.approx(1.0, abs=0.1)


def test_compute_dilutes_collective_gains():
    chatty = Trace((Iteration(0.0, (CollectiveCall(1024, 10),)),))
    diluted = Trace((Iteration(5000.0, (CollectiveCall(1024, 10),)),))
    fast = eval_training_throughput(chatty, 256, PLAIN, PHOTONIC)
    slow = eval_training_throughput(diluted, 256, PLAIN, PHOTONIC)
    assert 1.0 < slow.speedup < fast.speedup


def test_zero_count_calls_are_skipped():
    trace = Trace((Iteration(10.0, (CollectiveCall(1 << 20, 0),)),))
    result = eval_training_throughput(trace, 256, PLAIN, PHOTONIC)
    assert result.speedup == 1.0


# -- sweep specification ----------------------------------------------------


def test_load_sweep_spec(tmp_path):
    spec = load_sweep_spec(write_spec(tmp_path, SMALL_SPEC))
    assert spec.gpu_counts == (4, 16)
    assert spec.buffer_bytes == (1024, 65536)
    assert {e.name for e in spec.algorithms} == {"ring", "radix-2"}


def test_sweep_spec_rejects_radix_digit_mismatch(tmp_path):
    body = {
        "gpu_counts": [128],
        "buffer_bytes": [1024],
        "algorithms": {"radix-4": {"alpha_us": 0.7, "bandwidth_gbps": 300}},
    }
    with pytest.raises(SpecInvalid):
        load_sweep_spec(write_spec(tmp_path, body))
    # a per-algorithm override can rescue the pairing
    body["algorithms"]["radix-4"]["gpu_counts"] = [64, 256]
    load_sweep_spec(write_spec(tmp_path, body))


def test_sweep_spec_rejects_unknown_names_and_keys(tmp_path):
    bad_name = {"gpu_counts": [4], "buffer_bytes": [16],
                "algorithms": {"butterfly": {}}}
    with pytest.raises(SpecInvalid):
        load_sweep_spec(write_spec(tmp_path, bad_name))
    bad_key = {"gpu_counts": [4], "buffer_bytes": [16],
               "algorithms": {"ring": {"alpha": 1}}}
    with pytest.raises(SpecInvalid):
        load_sweep_spec(write_spec(tmp_path, bad_key))


def test_sweep_spec_rejects_duplicates():
    entries = (
        AlgorithmEntry("ring", PLAIN),
        AlgorithmEntry("ring", PHOTONIC),
    )
    spec = SweepSpec((4,), (16,), entries)
    with pytest.raises(SpecInvalid):
        spec.validate()


# -- sweep execution --------------------------------------------------------


def test_run_sweep_rows_are_sorted_and_priced(tmp_path):
    spec = load_sweep_spec(write_spec(tmp_path, SMALL_SPEC))
    rows = run_sweep(spec)
    assert len(rows) == 8
    keys = [(r.algorithm, r.nranks, r.payload_bytes) for r in rows]
    assert keys == sorted(keys)
    for row in rows:
        expected = closed_form(
            row.algorithm, row.nranks, row.payload_bytes,
            PLAIN if row.algorithm == "ring" else PHOTONIC)
        assert row.cost.total_us == pytest.approx(expected.total_us, rel=1e-9)


def test_write_sweep_csv_schema(tmp_path):
    spec = load_sweep_spec(write_spec(tmp_path, SMALL_SPEC))
    out = tmp_path / "sweep.csv"
    write_sweep_csv(run_sweep(spec), out)
    with open(out, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        body = list(reader)
    assert tuple(header) == SWEEP_COLUMNS
    assert len(body) == 8
    assert all(len(line) == len(SWEEP_COLUMNS) for line in body)
    # deterministic output, byte for byte
    first = out.read_bytes()
    write_sweep_csv(run_sweep(spec), out)
    assert out.read_bytes() == first


# -- command line -----------------------------------------------------------


def test_cli_sweep_writes_csv_and_figure(tmp_path):
    spec = write_spec(tmp_path, SMALL_SPEC)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(spec), "--out", str(out)]) == 0
    assert out.exists()
    assert (tmp_path / "sweep.png").exists()


def test_cli_no_plot_skips_figure(tmp_path):
    spec = write_spec(tmp_path, SMALL_SPEC)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(spec), "--out", str(out),
                 "--no-plot"]) == 0
    assert out.exists()
    assert not (tmp_path / "sweep.png").exists()


def test_cli_sweep_reports_spec_errors(tmp_path, capsys):
    body = {"gpu_counts": [6], "buffer_bytes": [1024],
            "algorithms": {"radix-2": {}}}
    spec = write_spec(tmp_path, body)
    code = main(["sweep", "--config", str(spec),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_sweep_missing_file_fails_cleanly(tmp_path, capsys):
    code = main(["sweep", "--config", str(tmp_path / "absent.json"),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_alloc_replay_end_to_end(tmp_path):
    workload = tmp_path / "work.jsonl"
    lines = [json.dumps({"event": "arrive", "tenant": f"t{i}", "size": 1})
             for i in range(8)]
    lines += [json.dumps({"event": "depart", "tenant": f"t{i}"})
              for i in range(1, 8, 2)]
    lines.append(json.dumps({"event": "arrive", "tenant": "big", "size": 4}))
    workload.write_text("\n".join(lines) + "\n")
    config = tmp_path / "rack.json"
    config.write_text(json.dumps({
        "num_servers": 1, "tiles_per_server": 8, "lasers_per_tile": 16,
        "egress_bandwidth_gbps": 300, "fibers_per_server_pair": 0,
        "alpha_fixed_us": 0.7, "reconfig_delay_us": 3.7}))
    out = tmp_path / "alloc.csv"
    code = main(["alloc-replay", "--workload", str(workload),
                 "--config", str(config), "--shapes", "2,4,8",
                 "--out", str(out), "--no-plot"])
    assert code == 0
    with open(out, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert tuple(rows[0]) == ALLOC_COLUMNS
    by_name = {r["allocator"]: r for r in rows}
    assert by_name["photonic"]["rejected_with_free_capacity"] == "0"
    assert by_name["fixed-slice"]["rejected_with_free_capacity"] == "1"


def test_cli_alloc_replay_rejects_bad_workload(tmp_path, capsys):
    workload = tmp_path / "work.jsonl"
    workload.write_text('{"event": "depart", "tenant": "ghost"}\n')
    code = main(["alloc-replay", "--workload", str(workload),
                 "--out", str(tmp_path / "x.csv"), "--no-plot"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_throughput_end_to_end(tmp_path):
    trace = tmp_path / "trace.jsonl"
    trace.write_text(json.dumps(
        {"compute_us": 0.0, "collectives": [{"bytes": 1024, "count": 1}]}) + "\n")
    out = tmp_path / "thr.csv"
    code = main(["throughput", "--trace", str(trace), "--gpus", "256",
                 "--out", str(out), "--no-plot"])
    assert code == 0
    with open(out, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert tuple(rows[0]) == THROUGHPUT_COLUMNS
    assert rows[0]["gpus"] == "256"
    assert float(rows[0]["speedup"]) == pytest.approx(5.0706, abs=5e-4)


def test_cli_throughput_rejects_unpaired_radix(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    trace.write_text(json.dumps(
        {"compute_us": 0.0, "collectives": [{"bytes": 1024}]}) + "\n")
    code = main(["throughput", "--trace", str(trace), "--gpus", "10",
                 "--out", str(tmp_path / "x.csv"), "--no-plot"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_shipped_data_files_replay_cleanly(tmp_path):
    data = Path(__file__).resolve().parent.parent / "data"
    out = tmp_path / "alloc.csv"
    code = main(["alloc-replay",
                 "--workload", str(data / "checkerboard_workload.jsonl"),
                 "--config", str(data / "rack_1x8.json"),
                 "--shapes", "2,4,8", "--out", str(out), "--no-plot"])
    assert code == 0
    trace_out = tmp_path / "thr.csv"
    code = main(["throughput",
                 "--trace", str(data / "small_allreduce_trace.jsonl"),
                 "--gpus", "256", "--out", str(trace_out), "--no-plot"])
    assert code == 0
