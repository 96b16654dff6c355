import csv

import pytest

from spikesparse.cli import main
from spikesparse.config import ConfigError, DataPathError, parse_config, read_pairs

FAST = ["--set", "timesteps=5", "--set", "batch_size=32", "--set", "architecture=dense:16",
        "--set", "init_gain=2.0", "--set", "learning_rate=0.01"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------- config parsing

def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_sigma0_and_comments(tmp_path):
    cfg = parse_config(write(tmp_path, "# reference value\nsigma0 = 0.00055  # constant\nschedule = constant\n"))
    assert cfg.training.sigma0 == 0.00055 and cfg.training.schedule == "constant"


def test_duplicate_key_names_both_lines(tmp_path):
    with pytest.raises(ConfigError, match="lines 1 and 3"):
        parse_config(write(tmp_path, "epochs = 3\nseed = 1\nepochs = 4\n"))


def test_override_beats_file(tmp_path):
    path = write(tmp_path, "epochs = 10\n")
    assert parse_config(path, {"epochs": "3"}).training.epochs == 3


def test_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown key 'epoch'"):
        parse_config(write(tmp_path, "epoch = 3\n"))


def test_syntax_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match=r"exp\.cfg:2"):
        parse_config(write(tmp_path, "epochs = 3\nthis line is wrong\n"))


@pytest.mark.parametrize("line", ["epochs = three", "sigma0 = lots", "record_wall_time = maybe",
                                  "grid = 0.1,x"])
def test_type_mismatch(tmp_path, line):
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config(write(tmp_path, line + "\n"))


def test_semantic_errors(tmp_path):
    for text in ["grid = 0.1,-0.2\n", "schedule = cosine\n", "dataset = svhn\n", "tolerance = loose\n",
                 "epochs = 0\n"]:
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, text))


def test_grid_keys_and_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "grid = 0.1, 0.2\ngrid_linear = 1e-3\ndataset = cifar10\n"))
    assert cfg.grid_for("constant") == (0.1, 0.2) and cfg.grid_for("linear") == (1e-3,)
    assert cfg.training.architecture.startswith("conv:")
    assert read_pairs(write(tmp_path, "a = 1\n\n# x\nb = 2\n", "p.cfg")) == {"a": ("1", 1), "b": ("2", 4)}


def test_missing_data_path_is_checked(tmp_path):
    with pytest.raises(DataPathError, match="nowhere"):
        parse_config(None, {"data_dir": str(tmp_path / "nowhere")})


# ---------------------------------------------------------------- commands

def test_missing_dataset_path_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data-dir", tmp_path / "nowhere", "--out-dir", tmp_path / "o")
    assert code == 2 and "nowhere" in err


def test_missing_dataset_files_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data-dir", tmp_path, "--out-dir", tmp_path / "o")
    assert code == 2 and "train-images-idx3-ubyte" in err


def test_usage_errors_exit_1(capsys, tmp_path):
    assert run(capsys, "train", "--schedule", "bogus")[0] == 1
    assert run(capsys, "train", "--set", "nokey")[0] == 1
    assert run(capsys, "train", "--config", tmp_path / "absent.cfg")[0] == 1


def test_divergence_exit_3(capsys, tmp_path, tiny_mnist_dir):
    import numpy as np
    with np.errstate(over="ignore", invalid="ignore"):
        code, _, err = run(capsys, "train", "--data-dir", tiny_mnist_dir, "--out-dir", tmp_path / "o",
                           "--epochs", 1, "--schedule", "constant", "--sigma0", "1e300",
                           *FAST, "--set", "optimizer=sgd", "--set", "learning_rate=1e300")
    assert code == 3 and "epoch 1" in err


def train_cmd(capsys, out, data, *extra):
    return run(capsys, "train", "--data-dir", data, "--out-dir", out, "--epochs", 2, "--seed", 5,
               *FAST, *extra)


def test_train_summary_line_matches_csv(capsys, tmp_path, tiny_mnist_dir):
    code, out, _ = train_cmd(capsys, tmp_path / "a", tiny_mnist_dir)
    assert code == 0
    with open(tmp_path / "a" / "metrics.csv") as fh:
        last = list(csv.DictReader(fh))[-1]
    line = out.strip().splitlines()[-1]
    acc, spikes = line.split()
    assert acc == f"accuracy={last['val_accuracy']}%"
    assert spikes == f"avg_spikes={last['val_avg_spikes']}"
    assert (tmp_path / "a" / "checkpoint.ckpt").is_file() and (tmp_path / "a" / "best.ckpt").is_file()


def test_none_and_zero_constant_identical_summaries(capsys, tmp_path, tiny_mnist_dir):
    _, out1, _ = train_cmd(capsys, tmp_path / "a", tiny_mnist_dir, "--schedule", "none")
    _, out2, _ = train_cmd(capsys, tmp_path / "b", tiny_mnist_dir, "--schedule", "constant", "--sigma0", 0)
    assert out1 == out2
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_eval_with_dump(capsys, tmp_path, tiny_mnist_dir):
    train_cmd(capsys, tmp_path / "a", tiny_mnist_dir)
    dump = tmp_path / "pred.csv"
    code, out, _ = run(capsys, "eval", "--checkpoint", tmp_path / "a" / "best.ckpt", "--dump", dump)
    assert code == 0
    with open(dump) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24                                  # 20% of 120
    acc = 100.0 * sum(r["predicted"] == r["label"] for r in rows) / len(rows)
    assert out.strip().startswith(f"accuracy={acc!r}%")
    code2, out2, _ = run(capsys, "eval", "--checkpoint", tmp_path / "a" / "best.ckpt")
    assert out2 == out


def test_eval_errors(capsys, tmp_path, tiny_mnist_dir):
    code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "missing.ckpt")
    assert code == 2 and "missing.ckpt" in err
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert run(capsys, "eval", "--checkpoint", bad)[0] == 2


def test_search_writes_tables(capsys, tmp_path, tiny_mnist_dir):
    code, out, _ = run(capsys, "search", "--data-dir", tiny_mnist_dir, "--out-dir", tmp_path / "s",
                       "--epochs", 1, *FAST, "--set", "grid=0.001,0.01",
                       "--set", "search_schedules=constant,linear", "--tolerance", "one-percent")
    assert code == 0 and "constant" in out and "linear" in out
    with open(tmp_path / "s" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["schedule"] for r in rows] == ["none", "constant", "linear"]
    assert rows[0]["reduction_pct"] == "0.0"
    assert len((tmp_path / "s" / "grid.csv").read_text().splitlines()) == 1 + 1 + 4
