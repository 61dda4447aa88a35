import json

import pandas as pd
import pytest

from cli import EXIT_CONFIGURATION, EXIT_OK, EXIT_RUNTIME, main

SMALL_RUN = """\
seed=7
episodes=2
way=3
shot=1
query_per_class=3
source_classes=4
target_classes=4
dim=4
source_per_class=20
target_per_class=8
hidden_widths=8
pretrain_epochs=2
pretrain_batch_size=20
steps=2
max_epochs=2
lp_neighbors=3
"""


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    monkeypatch.setenv("RESULTS_STORE", "none")
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_RUN)
    return path


def test_theory_writes_the_bound_grid(tmp_path):
    out = tmp_path / "theory.csv"
    assert main(["theory", "--products", "2,4", "--steps", "0,2", "--out", str(out)]) == EXIT_OK

    grid = pd.read_csv(out)
    assert len(grid) == 4
    row = grid[(grid["tau_m_R"] == 4.0) & (grid["E"] == 2)].iloc[0]
    assert row["bound"] == pytest.approx(8 / 27)

    one_shot = pd.read_csv(tmp_path / "theory_one_shot.csv")
    assert one_shot["tau_R"].tolist() == [0.0, 0.25, 0.5, 0.75, 0.9]
    assert one_shot["bound"].iloc[2] == pytest.approx(4 * 0.1)

    contraction = pd.read_csv(tmp_path / "theory_contraction.csv")
    assert len(contraction) == 2 * 9
    assert contraction["omega"].max() == pytest.approx(3.141592653589793)


def test_theory_rejects_one_shot_products_outside_the_regime(tmp_path):
    out = str(tmp_path / "t.csv")
    assert main(["theory", "--one-shot-products", "0.5,1.0", "--out", out]) == EXIT_CONFIGURATION


def test_theory_rejects_bad_numbers(tmp_path):
    assert main(["theory", "--products", "two", "--out", str(tmp_path / "t.csv")]) == EXIT_CONFIGURATION
    assert main(["theory", "--n", "0", "--out", str(tmp_path / "t.csv")]) == EXIT_CONFIGURATION


def test_bad_config_exits_with_two(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("alpha=1.5\n")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIGURATION

    path.write_text("no_such_key=1\n")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIGURATION


def test_unknown_ablation_exits_with_two(config_file, tmp_path):
    assert main(["run", "--config", str(config_file), "--ablation", "no_everything"]) == EXIT_CONFIGURATION


def test_run_command(config_file, tmp_path):
    out = tmp_path / "reports"
    assert main(["run", "--config", str(config_file), "--episodes", "1", "--out", str(out)]) == EXIT_OK

    report = json.loads((out / "full.json").read_text())
    assert report["episode_count"] == 1
    assert report["accuracy"]["degenerate"]


def test_ablate_command_with_a_sweep(config_file, tmp_path):
    out = tmp_path / "reports"
    code = main(
        ["ablate", "--config", str(config_file), "--modes", "full,ce_only", "--sweep", "alpha=0.5,1.0", "--out", str(out)]
    )
    assert code == EXIT_OK
    comparison = pd.read_csv(out / "comparison.csv")
    assert comparison["label"].tolist() == ["full_alpha=0.5", "full_alpha=1.0", "ce_only_alpha=0.5", "ce_only_alpha=1.0"]


def test_histogram_command(config_file, tmp_path):
    out = tmp_path / "hist.csv"
    assert main(["histogram", "--config", str(config_file), "--bins", "6", "--out", str(out)]) == EXIT_OK

    frame = pd.read_csv(out)
    assert len(frame) == 4 * 6
    totals = frame.groupby("channel")[["count_before", "count_after"]].sum()
    assert (totals["count_before"] == 3 * (1 + 3)).all()
    assert (totals["count_after"] == 3 * (1 + 3)).all()


def test_gen_data_then_run_from_files(config_file, tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--config", str(config_file), "--out", str(data)]) == EXIT_OK
    for name in ("source.sptd", "target.sptd", "backbone.sptm"):
        assert (data / name).exists()

    from_files = tmp_path / "from_files.cfg"
    from_files.write_text(
        SMALL_RUN
        + f"source_path={data / 'source.sptd'}\n"
        + f"target_path={data / 'target.sptd'}\n"
        + f"backbone_path={data / 'backbone.sptm'}\n"
    )
    assert main(["run", "--config", str(from_files), "--out", str(tmp_path / "reports")]) == EXIT_OK


def test_corrupt_data_file_exits_with_three(config_file, tmp_path):
    corrupt = tmp_path / "target.sptd"
    corrupt.write_bytes(b"JUNK")
    path = tmp_path / "corrupt.cfg"
    path.write_text(SMALL_RUN + f"target_path={corrupt}\n")
    assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "data")]) == EXIT_RUNTIME


def test_zero_step_sweep_exits_with_two(config_file, tmp_path):
    code = main(["ablate", "--config", str(config_file), "--modes", "full", "--sweep", "steps=0", "--out", str(tmp_path)])
    assert code == EXIT_CONFIGURATION
