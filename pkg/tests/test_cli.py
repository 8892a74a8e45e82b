import json
import logging
import os

import numpy as np
import pytest

from experiments.config import ExperimentConfig, StorageOptions, TransformOptions, load_config
from experiments.runner import ExperimentRunner
from experiments.storage import load_matrix, setup_directories
from main import main
from transforms.transform import as_matrix, make_transform
from utils.exceptions import ConfigurationError, NotPowerOfTwo
from utils.logger import setup_logger


def _read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def _csv_files(base):
    found = {}
    for sub in ("matrices", "curves"):
        directory = os.path.join(base, sub)
        for name in sorted(os.listdir(directory)):
            found[f"{sub}/{name}"] = _read_bytes(os.path.join(directory, name))
    return found


def test_transform_matrix_output(tmp_path, config_file):
    out = tmp_path / "out"
    code = main(["--config", config_file(), "--experiment", "transform_matrix", "--n", "64", "--octaves", "5",
                 "--out", str(out)])
    assert code == 0

    F = load_matrix(out / "matrices" / "transform_wavelet_n64.csv")
    np.testing.assert_array_equal(F, as_matrix(make_transform("wavelet", 64, octaves=5)))

    layout = _read_json(out / "reports" / "transform_wavelet_n64_layout.json")
    assert [block["stop"] for block in layout["layout"]] == [2, 4, 8, 16, 32, 64]

    manifest = _read_json(out / "manifest.json")
    assert {"kind": "matrix", "format": "csv", "path": os.path.join("matrices", "transform_wavelet_n64.csv"),
            "shape": [64, 64]} in manifest


def test_identity_transform_matrix(tmp_path, config_file):
    out = tmp_path / "out"
    path = config_file(transforms={"kind": "identity", "n": 8}, experiment={"kind": "transform_matrix"})
    assert main(["--config", path, "--out", str(out)]) == 0
    np.testing.assert_array_equal(load_matrix(out / "matrices" / "transform_identity_n8.csv"), np.eye(8))


def test_wavelet_size_must_be_power_of_two(tmp_path, config_file):
    code = main(["--config", config_file(), "--experiment", "transform_matrix", "--n", "12",
                 "--out", str(tmp_path / "out")])
    assert code == 1

    config = ExperimentConfig(
        experiment="transform_matrix",
        transforms=TransformOptions(n=12),
        storage=StorageOptions(base_dir=str(tmp_path / "direct"), timestamped=False, formats=("csv",)),
    )
    runner = ExperimentRunner(config, setup_directories(config.storage))
    with pytest.raises(NotPowerOfTwo):
        runner.run()


@pytest.mark.parametrize("argv", [
    ["--experiment", "unknown"],
    ["--seed", "abc"],
    ["--no-such-option"],
])
def test_usage_errors_exit_with_one(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == 1


def test_bad_config_values(tmp_path, config_file):
    out = str(tmp_path / "out")
    assert main(["--config", config_file(experiment={"methods": ["kalman"]}), "--out", out]) == 1
    assert main(["--config", config_file(synthetic={"unknown_key": 1}), "--out", out]) == 1
    assert main(["--config", str(tmp_path / "missing.yaml"), "--out", out]) == 1
    assert main(["--config", config_file(), "--workers", "0", "--out", out]) == 1


def test_load_config_rejects_unknown_experiment(config_file):
    with pytest.raises(ConfigurationError):
        load_config(config_file(experiment={"kind": "forecast"}))


def test_load_config_reads_sections(config_file):
    config = load_config(config_file(
        experiment={"kind": "assimilate", "seed": 7, "methods": ["wavelet"]},
        synthetic={"n": 32, "members": 5},
        runtime={"workers": 2},
    ))
    assert config.experiment == "assimilate"
    assert config.seed == 7 and config.synthetic.seed == 7
    assert config.methods == ("wavelet",)
    assert config.synthetic.n == 32 and config.synthetic.members == 5
    assert config.workers == 2
    assert config.log_file is None


def test_covariance_compare_outputs(tmp_path, config_file):
    out = tmp_path / "out"
    path = config_file(assimilation={"reference_members": 200})
    code = main(["--config", path, "--experiment", "covariance_compare", "--n", "32", "--out", str(out)])
    assert code == 0

    for name in ("cov_u1_reference_N200", "cov_u1_sample_N10", "cov_u1_fft_N10", "cov_u1_wavelet_N10",
                 "cov_u1u2_reference_N200", "cov_u1u2_wavelet_N10"):
        C = load_matrix(out / "matrices" / f"{name}.csv")
        assert C.shape == (32, 32)
        assert np.all(np.isfinite(C))

    manifest = _read_json(out / "manifest.json")
    shapes = [entry["shape"] for entry in manifest if entry["kind"] == "matrix"]
    assert len(shapes) == 8
    assert all(shape == [32, 32] for shape in shapes)

    report = _read_json(out / "reports" / "covariance_metrics.json")
    assert report["reference"]["frobenius"] == 0.0
    assert set(report["covariance"]) == {"sample", "fft", "wavelet"}


def test_small_ensemble_larger_than_reference(tmp_path, config_file):
    path = config_file(assimilation={"reference_members": 20})
    code = main(["--config", path, "--experiment", "covariance_compare", "--n", "16", "--members", "50",
                 "--out", str(tmp_path / "out")])
    assert code == 1


def test_assimilation_metrics(tmp_path, config_file):
    out = tmp_path / "out"
    path = config_file(assimilation={"reference_members": 100})
    code = main(["--config", path, "--experiment", "assimilate", "--n", "32", "--out", str(out)])
    assert code == 0

    metrics = _read_json(out / "reports" / "assimilation_metrics.json")
    assert [entry["method"] for entry in metrics] == ["classical", "fft", "wavelet"]
    for entry in metrics:
        assert set(entry) == {"method", "rmse_var1", "rmse_var2", "innovation_norm_mean",
                              "frobenius_to_reference", "wall_ms", "seed"}
        assert entry["rmse_var1"] >= 0
        assert entry["rmse_var2"] >= 0
        assert entry["seed"] == 0

    curves = _read_bytes(out / "curves" / "wavelet_u1.csv").decode("utf-8").splitlines()
    header = curves[0].split(",")
    assert header[0] == "x"
    assert header[1] == "forecast_1" and "analysis_10" in header
    assert header[-2:] == ["data", "truth"]
    assert len(curves) == 33


def test_unwritable_output_directory(tmp_path, config_file):
    blocker = tmp_path / "occupied"
    blocker.write_text("not a directory", encoding="utf-8")
    code = main(["--config", config_file(), "--experiment", "transform_matrix", "--n", "8",
                 "--out", str(blocker)])
    assert code == 3


def test_runner_callbacks(tmp_path):
    config = ExperimentConfig(
        experiment="transform_matrix",
        transforms=TransformOptions(kind="sine", n=8),
        storage=StorageOptions(base_dir=str(tmp_path), timestamped=False, formats=("csv", "json")),
    )
    runner = ExperimentRunner(config, setup_directories(config.storage))
    events = []
    runner.set_callback(lambda event, data: events.append((event, data)))

    reports = runner.run()

    assert [event for event, _ in events] == ["file_saved", "start_experiment", "file_saved", "file_saved",
                                              "finish_experiment"]
    assert events[0][1]["path"] == os.path.join("reports", "run_config.json")
    assert events[1][1] == {"experiment": "transform_matrix", "seed": 0}
    assert reports["transform_matrix"]["layout"] == [{"label": "sine", "level": 0, "start": 0, "stop": 8}]


def test_run_config_report(tmp_path, config_file):
    out = tmp_path / "out"
    code = main(["--config", config_file(), "--experiment", "transform_matrix", "--n", "16", "--seed", "5",
                 "--methods", "wavelet", "--out", str(out)])
    assert code == 0

    described = _read_json(out / "reports" / "run_config.json")
    assert described["experiment"] == "transform_matrix"
    assert described["seed"] == 5 and described["synthetic"]["seed"] == 5
    assert described["methods"] == ["wavelet"]
    assert described["transforms"]["n"] == 16
    assert described["synthetic"]["truth"] == {"center": 0.4, "width": 0.12, "height": 1.5}
    assert described["assimilation"]["cross_mode"] == "spectral_diagonal"


def test_outputs_are_deterministic(tmp_path, config_file):
    path = config_file(assimilation={"reference_members": 100})
    runs = []
    for label, workers in (("first", "1"), ("second", "1"), ("threaded", "4")):
        out = tmp_path / label
        code = main(["--config", path, "--experiment", "all", "--n", "32", "--seed", "3",
                     "--workers", workers, "--out", str(out)])
        assert code == 0
        runs.append(_csv_files(out))

    assert runs[0]
    assert runs[0] == runs[1]
    assert runs[0] == runs[2]


def test_svg_figures(tmp_path, config_file):
    pytest.importorskip("kaleido")
    out = tmp_path / "out"
    path = config_file(storage={"formats": ["svg"]})
    code = main(["--config", path, "--experiment", "transform_matrix", "--n", "8", "--out", str(out)])
    assert code == 0
    assert (out / "figures" / "transform_wavelet_n8.svg").exists()
    assert not (out / "matrices" / "transform_wavelet_n8.csv").exists()


def test_setup_logger(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    logger = setup_logger("debug", str(log_file))
    try:
        assert logger.level == logging.DEBUG
        assert log_file.exists()
        assert logging.getLogger("kaleido").level == logging.WARNING
    finally:
        for handler in logger.handlers[:]:
            handler.close()
        setup_logger("WARNING", None)
