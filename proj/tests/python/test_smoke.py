import struct

import pytest

import fos


def ints(*xs):
    return struct.pack("<%di" % len(xs), *xs)


def test_descriptors(source):
    shell = fos.parse_shell((source / "tests" / "data" / "example_shell.json").read_text())
    assert len(shell["regions"]) == 3
    assert shell["regions"][0]["addr"] == "0xa0000000"
    acc = fos.parse_accelerator((source / "tests" / "data" / "vadd_accel.json").read_text())
    regs = {r["name"]: r["offset"] for r in acc["registers"]}
    assert regs["a_op"] == "0x10"
    text = fos.canonical_shell((source / "tests" / "data" / "example_shell.json").read_text())
    assert fos.canonical_shell(text) == text


def test_errors_carry_a_code():
    with pytest.raises(fos.FosError) as info:
        fos.parse_shell("{")
    assert info.value.code == "parse"


def test_scenario_matches_oracle(source):
    sc = fos.load_scenario(source / "scenarios" / "replicate3.json")
    assert sc.job_count == 3
    result = fos.run_scenario(sc)
    assert result["makespan_us"] == 111450
    assert result["reconfigurations"] == 3
    identical, _ = fos.diff_traces(result["trace"], fos.oracle_trace(sc))
    assert identical
    assert fos.run_scenario(sc)["trace"] == result["trace"]
    fixed = fos.run_scenario(sc, baseline="fixed")
    assert fixed["makespan_us"] > result["makespan_us"]


def test_board_runs_vadd(shell_file, repo_dir):
    board = fos.Board(shell_file, repo_dir)
    assert board.now_us == 20740
    a, b, c = board.alloc(8), board.alloc(8), board.alloc(8)
    board.write(a, ints(5, 6))
    board.write(b, ints(7, 8))
    board.run_function("vadd", {"a_op": a, "b_op": b, "c_out": c, "length": 2})
    assert board.read(c, 8) == ints(12, 14)
    board.run_function("vadd", {"a_op": hex(a), "b_op": b, "c_out": c, "length": "2"})
    assert board.reconfigurations == 1
    with pytest.raises(fos.FosError) as info:
        board.run_function("vadd", {"z_op": 1})
    assert info.value.code == "unknown_name"


def test_daemon_round_trip(shell_file, repo_dir, tmp_path):
    trace_out = tmp_path / "trace.jsonl"
    daemon = fos.Daemon(shell_file, repo_dir, trace_out=str(trace_out))
    daemon.start()
    assert daemon.startup_us == 35210
    endpoint = "127.0.0.1:%d" % daemon.port
    client = fos.Client.connect(endpoint, "py")
    assert client.user == "py"
    a, b, c = client.alloc(12), client.alloc(12), client.alloc(12)
    client.write(a, ints(1, 2, 3))
    client.write(b, ints(10, 20, 30))
    run = client.run([{"name": "vadd", "params": {"a_op": a, "b_op": b, "c_out": c, "length": 3}}])
    assert client.read(c, 12) == ints(11, 22, 33)
    job = run["jobs"][0]
    assert job["latency_us"] == 710 + job["reconfig_us"] + job["exec_us"]
    assert client.status()["accelerators"] == ["vadd"]
    trace = client.trace()
    client.shutdown()
    daemon.wait()
    assert trace_out.read_text() == trace


def test_run_frame_bytes():
    frame = fos.encode_run_request(7, [{"name": "vadd", "params": {"length": 3, "a_op": "0x10000000"}}])
    body = b'{"id":7,"type":"run","jobs":[{"name":"vadd","params":{"a_op":"268435456","length":"3"}}]}'
    assert frame == struct.pack(">I", len(body)) + body


def test_suite(source):
    results = fos.run_suite(source / "scenarios")
    assert [r["id"] for r in results] == [3, 4, 5, 6, 7, 8, 9, 11]
    assert all(r["pass"] for r in results)
