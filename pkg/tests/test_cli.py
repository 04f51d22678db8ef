"""
Tests for the command-line front end: exit codes, RESULT line, option precedence.
"""
import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pandas as pd
import pytest

from src.cli.commands import (
    EXIT_IO,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    CliConfig,
    build_parser,
    main,
    result_line,
)
from src.config.settings import Config
from src.fields.grid import GridShape, ScalarField
from src.fields.io import read_text, write_text
from src.harness.generators import add_noise, gen_affine, gen_disk


def _result(capsys) -> dict:
    out = capsys.readouterr().out
    lines = [line for line in out.splitlines() if line.startswith("RESULT ")]
    assert len(lines) == 1, out
    return dict(item.split("=", 1) for item in lines[0].split()[1:])


def _text_image(tmp_path, name: str, values) -> str:
    path = str(tmp_path / name)
    write_text(ScalarField.from_array(values), path)
    return path


def test_result_line_format():
    line = result_line(command="x", value=0.5, flag=True, name="a b")
    assert line == "RESULT command=x value=0.5 flag=true name=a_b"


def test_generate_is_bit_identical(tmp_path, capsys):
    print("🧪 Testing generate...")
    first, second = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
    assert main(["generate", "disk", "--n", "16", "--out", first]) == EXIT_OK
    hash_a = _result(capsys)["sha256"]
    assert main(["generate", "disk", "--n", "16", "--out", second]) == EXIT_OK
    hash_b = _result(capsys)["sha256"]
    assert hash_a == hash_b
    with open(first, "rb") as a, open(second, "rb") as b:
        assert a.read() == b.read()
    print("✅ Repeated generate is bit-identical")


def test_generate_noisy_text(tmp_path, capsys):
    out = str(tmp_path / "noisy.txt")
    assert main(["generate", "squares", "--n", "12", "--sigma", "0.1", "--seed", "3", "--out", out]) == EXIT_OK
    fields = _result(capsys)
    assert fields["kind"] == "squares"
    noisy = read_text(out).values
    assert noisy.shape == (12, 12)
    assert not np.all(np.isin(noisy, [0.0, 0.5, 1.0]))


def test_denoise_constant_image(tmp_path, capsys):
    print("🧪 Testing denoise on a constant image...")
    src = _text_image(tmp_path, "flat.txt", np.full((8, 8), 0.25))
    out = str(tmp_path / "flat_tgv.txt")
    code = main(["denoise", src, "--model", "tgv2", "--alpha", "1", "--beta", "2", "--out", out,
                 "--w-out", str(tmp_path / "w.txt")])
    assert code == EXIT_OK
    fields = _result(capsys)
    assert fields["converged"] == "true"
    assert np.allclose(read_text(out).values, 0.25, atol=1e-14)
    assert os.path.isfile(tmp_path / "w.txt")
    print("✅ Constant image returned unchanged")


def test_denoise_missing_beta_is_usage_error(tmp_path, capsys):
    src = _text_image(tmp_path, "flat.txt", np.zeros((4, 4)))
    assert main(["denoise", src, "--model", "tgv2", "--alpha", "1"]) == EXIT_USAGE
    captured = capsys.readouterr()
    assert "❌" in captured.err
    assert captured.out.count("RESULT ") == 1


def test_denoise_tv2_needs_signal(tmp_path, capsys):
    src = _text_image(tmp_path, "img.txt", np.zeros((4, 4)))
    assert main(["denoise", src, "--model", "tv2-1d", "--beta", "1"]) == EXIT_USAGE


def test_bad_flag_values_are_usage_errors(tmp_path, capsys):
    src = _text_image(tmp_path, "img.txt", np.zeros((4, 4)))
    assert main(["denoise", src, "--model", "tv", "--alpha", "-1"]) == EXIT_USAGE
    assert main(["denoise", src, "--model", "tv", "--alpha", "1", "--p", "3"]) == EXIT_USAGE
    assert main(["generate", "triangle"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["denoise", str(tmp_path / "nope.pgm"), "--model", "tv", "--alpha", "1"]) == EXIT_IO
    assert _result(capsys)["status"] == "io_error"


def test_non_convergence_exit_code_still_writes(tmp_path, capsys):
    f = add_noise(gen_disk(12, spacing=1.0), 0.2, 1)
    src = str(tmp_path / "noisy.txt")
    write_text(f, src)
    out = str(tmp_path / "u.txt")
    code = main(["denoise", src, "--model", "tv", "--alpha", "0.5", "--max-iter", "5", "--tol", "0",
                 "--out", out])
    assert code == EXIT_NOT_CONVERGED
    assert _result(capsys)["converged"] == "false"
    assert os.path.isfile(out)


def test_denoise_log_file(tmp_path, capsys):
    src = _text_image(tmp_path, "sig.txt", np.linspace(0.0, 1.0, 16) ** 2)
    log = str(tmp_path / "log.csv")
    main(["denoise", src, "--model", "tv2-1d", "--beta", "0.1", "--max-iter", "40", "--tol", "0",
          "--out", str(tmp_path / "u.txt"), "--log", log])
    assert len(pd.read_csv(log)) == 4


def test_compare(tmp_path, capsys):
    print("🧪 Testing compare...")
    values = np.arange(16.0).reshape(4, 4) + 1.0
    a = _text_image(tmp_path, "a.txt", values)
    b = _text_image(tmp_path, "b.txt", 0.5 * values)
    assert main(["compare", a, a]) == EXIT_OK
    assert float(_result(capsys)["rel_l2"]) == 0.0
    assert main(["compare", a, b]) == EXIT_OK
    fields = _result(capsys)
    assert float(fields["rel_l2"]) == pytest.approx(0.5)
    assert float(fields["linf"]) == pytest.approx(8.0)

    c = _text_image(tmp_path, "c.txt", np.zeros((3, 3)))
    assert main(["compare", a, c]) == EXIT_USAGE
    print("✅ compare distances")


def test_eval_tgv_of_affine(tmp_path, capsys):
    src = str(tmp_path / "affine.txt")
    write_text(gen_affine(GridShape.square(8, 1.0), 0.2, 0.01, 0.02), src)
    assert main(["eval-tgv", src, "--alpha", "1", "--beta", "5"]) == EXIT_OK
    assert float(_result(capsys)["value"]) <= 1e-6


def test_experiment_regression_on_affine_input(tmp_path, capsys):
    src = str(tmp_path / "affine.txt")
    write_text(gen_affine(GridShape.square(10, 1.0), 0.2, 0.01, 0.02), src)
    out = str(tmp_path / "regression.csv")
    code = main(["experiment", "regression", "--input", src, "--sigma", "0", "--alpha", "1", "--beta", "1",
                 "--tol", "1e-10", "--max-iter", "500", "--out", out])
    assert code == EXIT_OK
    fields = _result(capsys)
    assert fields["verdict"] == "pass"
    assert fields["rows"] == "1"
    frame = pd.read_csv(out, dtype={"config_hash": str})
    assert frame["status"].tolist() == ["ok"]
    assert frame["config_hash"].iloc[0] == fields["config_hash"]


def test_experiment_metadata_records_applied_noise(tmp_path, capsys):
    print("🧪 Testing experiment metadata noise level...")
    src = str(tmp_path / "affine.txt")
    write_text(gen_affine(GridShape.square(10, 1.0), 0.2, 0.01, 0.02), src)
    out = str(tmp_path / "regression.csv")
    code = main(["experiment", "regression", "--input", src, "--alpha", "1", "--beta", "1",
                 "--max-iter", "50", "--out", out])
    assert code == EXIT_OK
    _result(capsys)
    frame = pd.read_csv(out, dtype={"config_hash": str})
    assert frame["sigma"].iloc[0] == pytest.approx(Config.NOISE_SIGMA)
    assert frame["method"].iloc[0] == Config.SOLVER_METHOD

    out = str(tmp_path / "equivalence.csv")
    code = main(["experiment", "tv-equivalence", "--n", "8", "--alpha", "1", "--beta", "100",
                 "--max-iter", "50", "--out", out])
    assert code == EXIT_OK
    _result(capsys)
    frame = pd.read_csv(out, dtype={"config_hash": str})
    assert frame["sigma"].iloc[0] == 0.0
    print("✅ Applied noise level recorded")


def test_flag_beats_config_file_beats_default(tmp_path):
    print("🧪 Testing option precedence...")
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("alpha=2\ntol=1e-5\nmax-iter=77\n")
    parser = build_parser()

    both = CliConfig.from_args(parser.parse_args(["eval-tgv", "x.txt", "--alpha", "3", "--config", str(cfg_path)]))
    assert both["alpha"] == 3.0
    assert both.sources["alpha"] == "flag"
    assert both["max_iter"] == 77
    assert both.sources["max_iter"] == "file"

    file_only = CliConfig.from_args(parser.parse_args(["eval-tgv", "x.txt", "--config", str(cfg_path)]))
    assert file_only["alpha"] == 2.0
    assert file_only["tol"] == 1e-5

    defaults = CliConfig.from_args(parser.parse_args(["eval-tgv", "x.txt"]))
    assert defaults["alpha"] is None
    assert defaults["tol"] == Config.SOLVER_TOL
    assert defaults.sources["tol"] == "default"
    print("✅ flag > file > Config")


def test_missing_config_file_is_io_error(tmp_path, capsys):
    src = _text_image(tmp_path, "img.txt", np.zeros((4, 4)))
    code = main(["eval-tgv", src, "--alpha", "1", "--beta", "1", "--config", str(tmp_path / "none.cfg")])
    assert code == EXIT_IO


def test_bad_config_value_is_usage_error(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("alpha=lots\n")
    src = _text_image(tmp_path, "img.txt", np.zeros((4, 4)))
    assert main(["eval-tgv", src, "--beta", "1", "--config", str(cfg_path)]) == EXIT_USAGE
