import json
import math

import numpy as np
import pytest

from shield.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def votes(vote_csv):
    rng = np.random.default_rng(5)
    return vote_csv({f"s{i}": list(rng.choice([1, 1, 1, 2, 3], size=6)) for i in range(4)})


def test_dist_single_sample_linear_gives_frequencies(vote_csv, capsys):
    path = vote_csv({"only": [1, 1, 2]})
    code, out, _ = run(capsys, "dist", path, "--poly", "X", "--offset", "0")
    rep = json.loads(out)
    assert code == 0 and rep["schema"] == 1
    assert rep["samples"][0]["probs"] == ["2/3", "1/3"]


def test_dist_table_polynomial_parses(votes, capsys):
    code, out, _ = run(capsys, "dist", votes, "--poly", "X + 3X^2 + 2 X^3")
    assert code == 0 and json.loads(out)["poly"] == "2X^3+3X^2+X"


def test_dist_truth_and_argmax(votes, tmp_path, capsys):
    truth = tmp_path / "t.csv"
    truth.write_text("sample_id,class\n" + "".join(f"s{i},1\n" for i in range(4)))
    code, out, _ = run(capsys, "dist", votes, "--poly", "argmax", "--truth", truth)
    assert code == 0 and json.loads(out)["mean"]["expected_correct"] is not None


def test_malformed_poly_is_validation_error(votes, capsys):
    code, _, err = run(capsys, "dist", votes, "--poly", "X^2+*X")
    assert code == 2 and "byte offset 4" in err


def test_usage_errors_exit_one(votes, capsys):
    assert run(capsys, "simulate", votes, "--poly", "X", "--trials", "0")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "epsilon", votes, "--poly", "X", "--delta", "1.5")[0] == 1


def test_epsilon_infinite_is_reported(tmp_path, capsys):
    path = tmp_path / "u.json"
    path.write_text('{"K": 3, "counts": [5, 0, 0], "offset": 0}')
    code, out, _ = run(capsys, "epsilon", path, "--poly", "X", "--mode", "symmetric")
    rep = json.loads(out)
    assert code == 0 and rep["epsilon_infinite"] is True and rep["epsilon"] is None


def test_epsilon_offset_one_is_finite(tmp_path, capsys):
    path = tmp_path / "u.json"
    path.write_text('{"K": 3, "counts": [5, 0, 0]}')
    rep = json.loads(run(capsys, "epsilon", path, "--poly", "X^2+X", "--mode", "symmetric")[1])
    assert rep["epsilon_infinite"] is False and rep["epsilon"] > 0


def test_epsilon_one_query_equals_single_query(votes, capsys, vote_csv):
    one = json.loads(run(capsys, "epsilon", votes, "--poly", "X^2+X", "--queries", "1")[1])
    rng = np.random.default_rng(5)
    first = vote_csv({"s0": list(rng.choice([1, 1, 1, 2, 3], size=6))}, name="first.csv")
    alone = json.loads(run(capsys, "epsilon", first, "--poly", "X^2+X")[1])
    assert one["epsilon"] == alone["epsilon"]


def test_epsilon_compat_reports_both(votes, capsys):
    rep = json.loads(run(capsys, "epsilon", votes, "--poly", "X^2+X", "--mode", "compat",
                         "--queries", "100")[1])
    assert rep["compat_mean_epsilon_times_queries"] > 0
    assert rep["compat_mean_alpha_epsilon"] > 0


def test_epsilon_too_many_queries(votes, capsys):
    assert run(capsys, "epsilon", votes, "--poly", "X", "--queries", "9")[0] == 2


def test_simulate_reproducible(votes, capsys):
    a = run(capsys, "simulate", votes, "--poly", "X^2+X", "--trials", "4000", "--seed", "3")[1]
    b = run(capsys, "simulate", votes, "--poly", "X^2+X", "--trials", "4000", "--seed", "3")[1]
    assert a == b
    assert all(s["max_z"] < 6 for s in json.loads(a)["samples"])


@pytest.mark.parametrize("seed", range(5))
def test_circuit_check_random_inputs(vote_csv, capsys, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    n_teachers = int(rng.integers(2, 7))
    path = vote_csv({f"s{i}": list(rng.integers(1, k + 1, size=n_teachers))
                     for i in range(int(rng.integers(1, 6)))})
    poly = ["X", "X^2+X", "2X^3+X^2", "X^4+2X"][seed % 4]
    code, out, _ = run(capsys, "circuit", path, "--poly", poly, "--seed", seed, "--check",
                       "--offset", seed % 2)
    assert code == 0 and json.loads(out)["check"]["simulator_agrees"]


def test_circuit_capacity_error(votes, capsys):
    assert run(capsys, "circuit", votes, "--poly", "4X^2+X", "--slots", "16")[0] == 2


def test_pareto_outputs_and_determinism(votes, tmp_path, capsys):
    out_dir = tmp_path / "p"
    code, out, _ = run(capsys, "pareto", votes, "--max-degree", "2", "--max-sum", "2,3",
                       "--out-dir", out_dir)
    assert code == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert names == ["pareto_S2.json", "pareto_S2.png", "pareto_S3.json", "pareto_S3.png",
                     "pareto_fronts.png", "space_S2.csv", "space_S3.csv"]
    first = {p.name: p.read_bytes() for p in out_dir.iterdir()}
    run(capsys, "pareto", votes, "--max-degree", "2", "--max-sum", "2,3", "--out-dir", out_dir)
    assert first == {p.name: p.read_bytes() for p in out_dir.iterdir()}
    header = first["space_S3.csv"].decode().splitlines()[0]
    assert header.startswith("poly,gta,epsilon,fail_prob")
    assert len(first["space_S3.csv"].decode().splitlines()) == 1 + 9


def test_pareto_default_sums(votes, tmp_path, capsys):
    out_dir = tmp_path / "d"
    code, _, _ = run(capsys, "pareto", votes, "--max-degree", "1", "--out-dir", out_dir,
                     "--no-figures")
    assert code == 0
    assert sorted(p.name for p in out_dir.glob("space_*.csv")) == [
        "space_S12.csv", "space_S17.csv", "space_S32.csv", "space_S6.csv"]


def test_errors_leave_no_partial_output(votes, tmp_path, capsys):
    out_dir = tmp_path / "none"
    code, _, _ = run(capsys, "pareto", votes, "--max-sum", "2", "--mode", "canonical",
                     "--queries", "50", "--out-dir", out_dir)
    assert code == 2 and not out_dir.exists()
    out = tmp_path / "r.json"
    assert run(capsys, "dist", votes, "--poly", "X^", "--out", out)[0] == 2
    assert not out.exists()
