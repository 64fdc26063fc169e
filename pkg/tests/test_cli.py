import json
import subprocess
import sys

import pytest

from prepsearch.cli import METHODS, main


def write_config(tmp_path, text: str):
    path = tmp_path / "config.toml"
    path.write_text(text, encoding="utf-8")
    return str(path)


SYNTH_DATA = """
[data]
synth = true
n_rows = 60
n_numeric = 3
seed = 5
"""

TINY_SEARCH = """
[search]
length = 2
n_pretrain = 8
n_perm_stage1 = 2
n_perm_stage2 = 2
seed = 1
workers = 2
"""


def run_cli(capsys, *argv) -> tuple[int, dict | None]:
    code = main(list(argv))
    out = capsys.readouterr()
    report = json.loads(out.out) if out.out.strip() else None
    return code, report


# --- run ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def shapleypipe_report(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    config = write_config(tmp, 'method = "shapleypipe"\n' + SYNTH_DATA + TINY_SEARCH)
    out_path = tmp / "report.json"
    code = main(["run", config, "--out", str(out_path)])
    assert code == 0
    return json.loads(out_path.read_text())


def test_run_report_shape(shapleypipe_report):
    report = shapleypipe_report
    assert report["command"] == "run"
    assert report["method"] == "shapleypipe"
    assert report["dataset"]["n_rows"] == 60
    assert report["dataset"]["train_rows"] + report["dataset"]["validation_rows"] == 60
    result = report["result"]
    assert len(result["pipeline"]) == 2
    assert "score" in result and "ledger" in result
    assert result["budget_formula"]["stage1"] == 2 * 2 * 5 * 2
    assert result["timing"]["seconds"] > 0


def test_run_ledger_identity(shapleypipe_report):
    ledger = shapleypipe_report["result"]["ledger"]
    assert ledger["stage_calls"]["pretrain"] == 8
    assert ledger["stage_calls"]["stage1"] == 40
    assert ledger["stage_calls"]["final"] == 1
    assert (
        ledger["algorithmic_calls"]
        == ledger["cache_hits"] + ledger["unique_evaluations"]
    )


def test_run_greedy_stdout(capsys, tmp_path):
    config = write_config(tmp_path, 'method = "greedy"\n' + SYNTH_DATA + TINY_SEARCH)
    code, report = run_cli(capsys, "run", config)
    assert code == 0
    assert report["method"] == "greedy"
    # builtin library has 23 operators; greedy tries each plus NULL per slot
    assert report["result"]["ledger"]["stage_calls"]["greedy"] == 2 * 24


def test_seed_override_changes_the_config(capsys, tmp_path):
    config = write_config(tmp_path, 'method = "greedy"\n' + SYNTH_DATA + TINY_SEARCH)
    code, report = run_cli(capsys, "run", config, "--seed", "99")
    assert code == 0
    assert report["dataset"]["train_rows"] == 48  # split still 80/20


def test_random_section_controls_sample_count(capsys, tmp_path):
    config = write_config(
        tmp_path,
        'method = "random"\n[random]\nn_samples = 7\n' + SYNTH_DATA + TINY_SEARCH,
    )
    code, report = run_cli(capsys, "run", config)
    assert code == 0
    assert report["result"]["ledger"]["stage_calls"]["random"] == 7


def test_cache_file_round_trip(capsys, tmp_path):
    config = write_config(tmp_path, 'method = "greedy"\n' + SYNTH_DATA + TINY_SEARCH)
    cache = tmp_path / "cache.jsonl"
    code, first = run_cli(capsys, "run", config, "--cache", str(cache))
    assert code == 0
    assert cache.exists()
    code, second = run_cli(capsys, "run", config, "--cache", str(cache))
    assert code == 0
    ledger = second["result"]["ledger"]
    # every evaluation the second run needs is already in the cache file
    assert ledger["unique_evaluations"] == 0
    assert ledger["cache_hits"] == ledger["algorithmic_calls"]
    assert second["result"]["score"] == first["result"]["score"]


# --- compare ------------------------------------------------------------------


def test_compare_report_shape(capsys, tmp_path):
    config = write_config(
        tmp_path,
        'methods = ["greedy", "random"]\n[random]\nn_samples = 10\n'
        + SYNTH_DATA
        + TINY_SEARCH,
    )
    code, report = run_cli(capsys, "compare", config)
    assert code == 0
    assert report["command"] == "compare"
    assert set(report["methods"]) == {"greedy", "random"}
    scores = {m: obj["score"] for m, obj in report["methods"].items()}
    assert report["best_method"] == max(scores, key=scores.get)


def test_compare_rejects_empty_methods(capsys, tmp_path):
    config = write_config(tmp_path, "methods = []\n" + SYNTH_DATA + TINY_SEARCH)
    code, _ = run_cli(capsys, "compare", config)
    assert code == 2


# --- failure modes ------------------------------------------------------------


def error_report(capsys) -> dict:
    err = capsys.readouterr().err
    return json.loads(err.strip().splitlines()[-1])


def test_missing_config_file_is_a_config_error(capsys):
    code = main(["run", "/nonexistent/config.toml"])
    assert code == 2
    assert error_report(capsys)["error"]["type"] == "ConfigError"


def test_invalid_toml_is_a_config_error(capsys, tmp_path):
    config = write_config(tmp_path, "method = [unterminated\n")
    assert main(["run", config]) == 2


def test_unknown_method_is_a_config_error(capsys, tmp_path):
    config = write_config(tmp_path, 'method = "gradient_descent"\n' + SYNTH_DATA)
    assert main(["run", config]) == 2
    msg = error_report(capsys)["error"]["message"]
    assert "gradient_descent" in msg


def test_unknown_search_key_is_a_config_error(capsys, tmp_path):
    config = write_config(
        tmp_path, SYNTH_DATA + "[search]\nlenght = 3\n"
    )
    assert main(["run", config]) == 2
    assert "lenght" in error_report(capsys)["error"]["message"]


def test_unknown_synth_key_is_a_config_error(capsys, tmp_path):
    config = write_config(tmp_path, "[data]\nsynth = true\nn_cols = 4\n")
    assert main(["run", config]) == 2


def test_missing_data_section_is_a_config_error(capsys, tmp_path):
    config = write_config(tmp_path, 'method = "greedy"\n')
    assert main(["run", config]) == 2


def test_bad_csv_is_a_data_error(capsys, tmp_path):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text("a,b\n1,2\n", encoding="utf-8")  # no label column
    config = write_config(tmp_path, f'[data]\ncsv = "{csv_path}"\n')
    code = main(["run", config])
    assert code == 3
    assert error_report(capsys)["error"]["type"] == "MissingLabelColumn"


def test_oversized_exhaustive_is_exit_4(capsys, tmp_path):
    config = write_config(
        tmp_path,
        'method = "exhaustive"\n' + SYNTH_DATA + "[search]\nlength = 4\n",
    )
    code = main(["run", config])
    assert code == 4
    assert error_report(capsys)["error"]["type"] == "SearchSpaceTooLarge"


# --- misc ---------------------------------------------------------------------


def test_method_token_list_is_stable():
    assert METHODS == (
        "shapleypipe",
        "random",
        "greedy",
        "exhaustive",
        "algorithm1",
        "ablation:category_only",
        "ablation:position_agnostic",
        "ablation:random_sampling",
    )


def test_console_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-c", "from prepsearch.cli import main; raise SystemExit(main(['run', '--help']))"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "--workers" in proc.stdout and "--cache" in proc.stdout
