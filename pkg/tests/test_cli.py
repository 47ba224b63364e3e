import json

import pytest

from qsverify.cli import main, parse_lambda


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_parse_lambda_forms():
    assert parse_lambda("1/3") == pytest.approx(1 / 3, abs=1e-16)
    assert parse_lambda("0.25") == 0.25
    assert parse_lambda(0.5) == 0.5


def test_certify_sqsv_example(capsys):
    code, out, _ = run_cli(
        capsys,
        "certify", "--protocol", "sqsv", "--n", "10", "--k", "0",
        "--delta", "0.05", "--lambda", "0.333333333333",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["fidelity_bound"] == pytest.approx(0.611701, abs=2e-6)
    assert payload["fidelity_bound"] + payload["infidelity_bound"] == 1.0


def test_certify_dqsv_example(capsys):
    code, out, _ = run_cli(
        capsys,
        "certify", "--protocol", "dqsv", "--n", "1", "--k", "0",
        "--delta", "0.6666666667", "--lambda", "1/3",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["fidelity_bound"] == pytest.approx(0.25, abs=1e-8)


def test_certify_degenerate_dqsv(capsys):
    code, out, _ = run_cli(
        capsys,
        "certify", "--protocol", "dqsv", "--n", "10", "--k", "0",
        "--delta", "1e-9", "--lambda", "0.3333333333",
    )
    assert code == 0
    assert json.loads(out)["fidelity_bound"] == 0.0


def test_certify_intermediates(capsys):
    code, out, _ = run_cli(
        capsys,
        "certify", "--protocol", "dqsv", "--n", "5", "--k", "1",
        "--delta", "0.9", "--lambda", "1/3", "--intermediates",
    )
    assert code == 0
    inter = json.loads(out)["intermediates"]
    assert len(inter["h"]) == 7
    assert inter["h"][0] == 1.0
    assert 0 <= inter["zhat"] <= 5
    assert 0 <= inter["kappa"] <= 1


def test_certify_intermediates_degenerate_is_null(capsys):
    code, out, _ = run_cli(
        capsys,
        "certify", "--protocol", "dqsv", "--n", "10", "--k", "0",
        "--delta", "1e-9", "--lambda", "1/3", "--intermediates",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["fidelity_bound"] == 0.0
    assert payload["intermediates"] is None


def test_certify_validation_exit_code(capsys):
    code, _, err = run_cli(
        capsys,
        "certify", "--protocol", "sqsv", "--n", "3", "--k", "5",
        "--delta", "0.05", "--lambda", "1/3",
    )
    assert code == 2
    assert "error" in err


def test_certify_rejects_lambda_zero_for_dqsv(capsys):
    code, _, err = run_cli(
        capsys,
        "certify", "--protocol", "dqsv", "--n", "3", "--k", "0",
        "--delta", "0.05", "--lambda", "0",
    )
    assert code == 2


def test_simulate_with_config_and_files(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text(
        "protocol: dqsv\n"
        "n: 5\n"
        "k: 1\n"
        "seed: 11\n"
        "rounds: 300\n"
        "source:\n"
        "  model: rho2\n"
        "  phi: pi\n"
        "  fidelity: 1.0\n"
    )
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(
        capsys, "simulate", "--config", str(config), "--out-dir", str(out_dir)
    )
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["rounds"] == 300
    assert summary["p_hat"] == 1.0  # only one copy can fail at k = 1
    lines = (out_dir / "rounds.csv").read_text().splitlines()
    assert len(lines) == 302
    stdout_summary = json.loads(out)
    assert stdout_summary["p_hat"] == 1.0


def test_simulate_deterministic_files(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text(
        "protocol: sqsv\nn: 20\nk: 2\nseed: 5\nrounds: 100\n"
        "source:\n  model: rho1\n  fidelity: 0.98\n"
    )
    outa, outb = tmp_path / "a", tmp_path / "b"
    assert run_cli(capsys, "simulate", "--config", str(config), "--out-dir", str(outa))[0] == 0
    assert run_cli(capsys, "simulate", "--config", str(config), "--out-dir", str(outb))[0] == 0
    assert (outa / "summary.json").read_bytes() == (outb / "summary.json").read_bytes()
    assert (outa / "rounds.csv").read_bytes() == (outb / "rounds.csv").read_bytes()


def test_simulate_flag_overrides(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text(
        "protocol: sqsv\nn: 10\nk: 0\nseed: 5\nrounds: 50\n"
        "source:\n  model: honest\n  fidelity: 1.0\n"
    )
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(
        capsys,
        "simulate", "--config", str(config), "--out-dir", str(out_dir),
        "--rounds", "75",
    )
    assert code == 0
    assert json.loads(out)["rounds"] == 75


def test_simulate_invalid_config_diagnostics(tmp_path, capsys):
    config = tmp_path / "bad.yaml"
    config.write_text("protocol: dqsv\nn: 3\nk: 7\nrounds: 10\nsource:\n  model: honest\n")
    code, _, err = run_cli(capsys, "simulate", "--config", str(config))
    assert code == 2
    assert "n: must be >= k + 1" in err


def test_simulate_custom_source(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text(
        "protocol: dqsv\n"
        "n: 2\n"
        "k: 0\n"
        "seed: 3\n"
        "rounds: 200\n"
        "source:\n"
        "  model: custom\n"
        "  branches:\n"
        "    - weight: 0.5\n"
        "      states: [singlet, singlet, singlet]\n"
        "    - weight: 0.5\n"
        "      states: [mixed, mixed, mixed]\n"
    )
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(
        capsys, "simulate", "--config", str(config), "--out-dir", str(out_dir)
    )
    assert code == 0
    summary = json.loads(out)
    assert 0.5 < summary["p_hat"] < 1.0


def test_simulate_zero_accept_exit_code(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text(
        "protocol: dqsv\nn: 40\nk: 0\nseed: 1\nrounds: 30\n"
        "source:\n  model: honest\n  fidelity: 0.25\n"
    )
    code, _, err = run_cli(capsys, "simulate", "--config", str(config),
                           "--out-dir", str(config.parent / "o"))
    assert code == 4
    assert "no accepted rounds" in err


def test_simulate_acceptance_stopping(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text(
        "protocol: dqsv\nn: 5\nk: 1\nseed: 2\n"
        "stopping:\n  mode: acceptances\n  target_acceptances: 120\n  max_rounds: 100000\n"
        "source:\n  model: rho2\n  phi: pi\n"
    )
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(
        capsys, "simulate", "--config", str(config), "--out-dir", str(out_dir)
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["accepted"] >= 120
    lines = (out_dir / "rounds.csv").read_text().splitlines()
    accepted_rows = [ln for ln in lines[2:] if ln.split(",")[3] == "1"]
    assert len(accepted_rows) >= 120


def test_reproduce_fig4_columns(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "reproduce", "fig4", "--out-dir", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "fig4.csv").read_text().splitlines()
    assert lines[0] == "# schema=qsverify.fig4/1"
    header = lines[1].split(",")
    assert header[:4] == ["grid", "n", "phi", "k"]
    assert len(lines) == 2 + 5 + 9  # 5 phase points + 9 size points
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["figure"] == "fig4"
    assert "generated_at" in manifest


def test_reproduce_fig5_ideal_closed_form_column(tmp_path, capsys):
    code, _, _ = run_cli(
        capsys, "reproduce", "fig5", "--fidelity", "1.0", "--avg-rounds", "3",
        "--out-dir", str(tmp_path),
    )
    assert code == 0
    lines = (tmp_path / "fig5.csv").read_text().splitlines()
    header = lines[1].split(",")
    for row in lines[2:]:
        cells = dict(zip(header, row.split(",")))
        n = int(cells["n"])
        assert int(cells["k_single"]) == 0
        expected = 1.5 * (1 - 0.05 ** (1 / n))
        assert float(cells["eps_sqsv_single"]) == pytest.approx(
            min(1.0, expected), rel=1e-9
        )


def test_reproduce_fig5_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    code1, _, _ = run_cli(
        capsys, "reproduce", "fig5", "--seed", "42", "--out-dir", str(a),
        "--avg-rounds", "5",
    )
    code2, _, _ = run_cli(
        capsys, "reproduce", "fig5", "--seed", "42", "--out-dir", str(b),
        "--avg-rounds", "5",
    )
    assert code1 == code2 == 0
    assert (a / "fig5.csv").read_bytes() == (b / "fig5.csv").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    ma.pop("generated_at"), mb.pop("generated_at")
    assert ma == mb


def test_oracle_check_binom(capsys):
    code, out, _ = run_cli(capsys, "oracle-check", "binom")
    assert code == 0
    report = json.loads(out)
    assert report["violations"] == []


def test_oracle_check_sweep_small(capsys):
    code, out, _ = run_cli(
        capsys, "oracle-check", "dqsv-sweep", "--n", "4", "--k", "1",
        "--trials", "60", "--seed", "7",
    )
    assert code == 0
    report = json.loads(out)
    assert report["violations"] == []
    assert report["checked"] > 0


def test_oracle_check_factorization_small(capsys):
    code, out, _ = run_cli(capsys, "oracle-check", "factorization", "--budget", "4")
    assert code == 0
    assert json.loads(out)["violations"] == []
