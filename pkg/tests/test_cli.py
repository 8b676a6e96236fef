import configparser
import csv
from pathlib import Path

import pytest

from projfair import cli
from projfair import diffgraph as dg


def write_config(path, sections):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, values in sections.items():
        parser[name] = {k: str(v) for k, v in values.items()}
    with open(path, "w") as fh:
        parser.write(fh)
    return path


def small(tmp_path, **overrides):
    sections = {
        "run": {"seed": 3, "out": "out"},
        "generate": {"preset": "experiment2", "d": 400, "labelled_fraction": 0.5},
        "data": {"path": "out/dataset.csv"},
        "model": {"latent_dim": 6, "enc_hidden": 12, "dec_hidden": 12},
        "train": {"epochs": 2, "lr": 1e-3, "target": "exposure",
                  "biases": "ethnicity, smoking, maternal_age, bmi, gender"},
        "eval": {"folds": 3, "stratify": "exposure"},
        "sweep": {"folds": 2},
        "traverse": {"checkpoint": "out/checkpoint.bin"},
    }
    for key, values in overrides.items():
        sections.setdefault(key, {}).update(values)
        # None drops a key
        sections[key] = {k: v for k, v in sections[key].items() if v is not None}
    return write_config(tmp_path / "run.ini", sections)


def read_ini(path):
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str
    p.read(path)
    return p


def test_generate_shape_and_rerun_identical(tmp_path):
    cfg = write_config(tmp_path / "g.ini", {"run": {"out": "g"}, "generate": {"preset": "experiment1"}})
    assert cli.main(["generate", "--config", str(cfg)]) == 0
    path = tmp_path / "g" / "dataset.csv"
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4001 and len(rows[0]) == 60 + 3 + 1
    first = path.read_bytes()
    assert cli.main(["generate", "--config", str(cfg)]) == 0
    assert path.read_bytes() == first
    manifest = read_ini(tmp_path / "g" / "manifest_generate.ini")
    assert "height.bmi" in manifest["empirical_correlation"]
    assert manifest["artifacts"]["dataset.csv"]


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path / "g.ini", {"run": {"out": "g", "seed": 1},
                                            "generate": {"preset": "experiment1", "d": 50}})
    cli.main(["generate", "--config", str(cfg)])
    a = (tmp_path / "g" / "dataset.csv").read_bytes()
    cli.main(["generate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "h")])
    assert (tmp_path / "h" / "dataset.csv").read_bytes() != a


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = small(tmp_path, train={"epoch": 3})
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG
    assert "train.epoch" in capsys.readouterr().err


def test_non_psd_is_config_error_with_eigenvalue(tmp_path, capsys):
    cfg = write_config(tmp_path / "g.ini", {"run": {"out": "g"}, "generate": {
        "d": 100, "m": 20, "attributes": "t:continuous:target, a:continuous:bias, b:continuous:bias",
        "corr": "1 0.9 0.9; 0.9 1 -0.9; 0.9 -0.9 1"}})
    assert cli.main(["generate", "--config", str(cfg)]) == cli.EXIT_CONFIG
    assert "eigenvalue -0.8" in capsys.readouterr().err


def test_missing_dataset_is_data_error(tmp_path):
    cfg = small(tmp_path)
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_DATA


def test_training_abort_is_numeric_error(tmp_path):
    cfg = small(tmp_path)
    cli.main(["generate", "--config", str(cfg)])
    path = tmp_path / "out" / "dataset.csv"
    lines = path.read_text().splitlines()
    col = lines[0].split(",").index("gender")
    fixed = [lines[0]]
    for line in lines[1:]:
        cells = line.split(",")
        cells[col] = "1"
        fixed.append(",".join(cells))
    path.write_text("\n".join(fixed) + "\n")
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_NUMERIC


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ws")
    cfg = small(tmp, train={"mode": "semi_supervised"})
    assert cli.main(["generate", "--config", str(cfg)]) == 0
    assert cli.main(["train", "--config", str(cfg)]) == 0
    return tmp, cfg


def test_train_semi_supervised_records_n_sample(workspace):
    tmp, _ = workspace
    info = read_ini(tmp / "out" / "manifest_train.ini")["train"]
    assert int(info["n_sample"]) == 200
    assert (tmp / "out" / "history.png").stat().st_size > 0


def test_train_plain_autoencoder_records_untouched_p(workspace):
    tmp, _ = workspace
    cfg = small(tmp, run={"out": "plain"}, train={"mode": "ablation_plain_ae"}, data={"path": "out/dataset.csv"})
    assert cli.main(["train", "--config", str(cfg)]) == 0
    assert read_ini(tmp / "plain" / "manifest_train.ini")["train"]["p_untouched"] == "True"


def test_eval_table_has_method_columns(workspace, capsys):
    tmp, _ = workspace
    cfg = small(tmp, run={"out": "eval"})
    assert cli.main(["eval", "--config", str(cfg)]) == 0
    header = capsys.readouterr().out.splitlines()[0].split()
    assert header == ["X", "fair", "ablation_no_bias", "ablation_plain_ae"]
    for name in ("report.csv", "table.txt", "latent_correlation.png", "bias_correlation.png"):
        assert (tmp / "eval" / name).exists()


def test_eval_single_checkpoint_dimension_guard(workspace):
    tmp, _ = workspace
    cfg = small(tmp, run={"out": "single"}, eval={"checkpoint": "out/checkpoint.bin"})
    assert cli.main(["eval", "--config", str(cfg)]) == 0
    cfg = small(tmp, run={"out": "single"}, eval={"checkpoint": "out/checkpoint.bin"}, model={"latent_dim": 8})
    assert cli.main(["eval", "--config", str(cfg)]) == cli.EXIT_DATA


def test_traverse_outputs(workspace):
    tmp, _ = workspace
    cfg = small(tmp, run={"out": "trav"})
    assert cli.main(["traverse", "--config", str(cfg)]) == 0
    frames = (tmp / "trav" / "traversal_frames.csv").read_text().splitlines()
    assert len(frames) == 11
    assert (tmp / "trav" / "traversal_diffmap.csv").exists()
    assert (tmp / "trav" / "traversal.png").exists()


def test_sweep_settings(workspace):
    tmp, _ = workspace
    cfg = small(tmp, run={"out": "sweep"})
    assert cli.main(["sweep", "--config", str(cfg)]) == 0
    with open(tmp / "sweep" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["corrected"] for r in rows][:2] == ["none", "ethnicity"]
    assert len(rows) == 6
    assert len(list((tmp / "sweep").glob("sweep_*_diffmap.csv"))) == 6


def test_sweep_empty_setting_equals_no_bias_ablation(workspace):
    tmp, _ = workspace
    cfg = small(tmp, run={"out": "sweep0"}, sweep={"biases": "ethnicity", "folds": 3},
                eval={"stratify": None})
    assert cli.main(["sweep", "--config", str(cfg)]) == 0
    with open(tmp / "sweep0" / "sweep.csv") as fh:
        sweep_row = next(csv.DictReader(fh))
    cfg = small(tmp, run={"out": "abl"}, train={"biases": "ethnicity"},
                eval={"methods": "ablation_no_bias", "stratify": None})
    assert cli.main(["eval", "--config", str(cfg)]) == 0
    with open(tmp / "abl" / "report.csv") as fh:
        mean = [r for r in csv.DictReader(fh) if r["fold"] == "mean"][0]
    assert float(sweep_row["corr_ethnicity"]) == float(mean["corr_ethnicity"])
    assert float(sweep_row["AUC"]) == float(mean["AUC"])


def test_gradcheck_passes_and_reports_table(capsys):
    assert cli.main(["gradcheck", "--configurations", "3"]) == 0
    out = capsys.readouterr().out
    assert "joint_loss" in out and "overall: PASS" in out


def test_gradcheck_fails_on_corrupted_rule(monkeypatch, capsys):
    monkeypatch.setattr(dg, "_square_grad", lambda x, out, g: (g * x,))
    assert cli.main(["gradcheck", "--configurations", "2"]) == cli.EXIT_NUMERIC
    out = capsys.readouterr().out
    assert "overall: FAIL" in out
    square = next(line for line in out.splitlines() if line.startswith("square "))
    assert square.rstrip().endswith("FAIL")


def test_gradcheck_names_failing_op(monkeypatch):
    from projfair import gradsuite
    monkeypatch.setattr(dg, "_square_grad", lambda x, out, g: (g * x,))
    results = {r.op: r for r in gradsuite.run(configurations=2, ops=["square", "add"])}
    assert not results["square"].passed and results["add"].passed


def test_default_experiment_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    for name in ("experiment1.ini", "experiment2.ini"):
        cfg = cli.RunConfig(root / name)
        assert cli.train_config(cfg).eta == 0.5
        assert cli.gen_spec(cfg).d in (4000, 5000)
        assert cfg.jobs == 1
