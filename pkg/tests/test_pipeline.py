import hashlib
import json

import jsonschema
import numpy as np
import pytest

from valleyscope import cli, pipeline
from valleyscope.annealer import mock_service
from valleyscope.config import ExperimentConfig
from valleyscope.rbm import RbmParams

SMALL = {
    "dataset": {"kind": "prototypes", "n_classes": 4, "n_pixels": 12, "per_class": 6, "test_per_class": 3},
    "model": {"n_hidden": 8},
    "train": {"epochs": 30, "batch_size": 8, "checkpoints": [10]},
    "anneal": {"sweeps": 100},
    "mcmc": {"chain_sweeps": 20, "relax_sweeps": 200},
    "task_reads": 10,
    "sample_reads": 100,
    "compare": {"escape_temperatures": [0.3, 0.4, 0.5, 0.6], "trials": 5, "max_jumps": 5000, "max_valleys": 2,
                "warming_rungs": [[0.2, 20], [0.5, 20]]},
    "scales": [1, 2],
    "seed": 3,
}


@pytest.fixture(scope="module")
def cfg():
    return ExperimentConfig.from_dict(SMALL)


@pytest.fixture(scope="module")
def trained(cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    pipeline.cmd_train(cfg, out)
    return out


def test_config_round_trip_and_schema(tmp_path, cfg):
    cfg.save(tmp_path / "c.json")
    back = ExperimentConfig.load(tmp_path / "c.json")
    assert back.fingerprint() == cfg.fingerprint()
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"backend": "quantum"})
    with pytest.raises(jsonschema.ValidationError):
        ExperimentConfig.from_dict({"train": {"epochs": -1}})
    ExperimentConfig.from_dict({"backend": "remote:http://x:1"})


def test_train_outputs(trained):
    files = {p.name for p in trained.iterdir()}
    assert {"model.json", "metrics.csv", "manifest.json", "config.json", "model_epoch_00010.json"} <= files
    man = json.loads((trained / "manifest.json").read_text())
    for name, digest in man["files"].items():
        assert hashlib.sha256((trained / name).read_bytes()).hexdigest() == digest
    assert RbmParams.load(trained / "model.json").meta["epochs"] == 30
    header = (trained / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,reconstruction_error,max_abs_w,log_likelihood"


def test_classify_both_backends(cfg, trained, tmp_path):
    rep = pipeline.cmd_classify(cfg, [trained / "model.json"], tmp_path)
    errs = {r["backend"]: r["error"] for r in rep["results"]}
    assert set(errs) == {"mcmc", "local-sa"}
    assert all(e <= 0.25 for e in errs.values())


def test_remote_backend_matches_local(cfg, trained, tmp_path):
    data = pipeline.load_data(cfg)
    p = RbmParams.load(trained / "model.json")
    local = pipeline.classify(p, data, cfg, "local-sa", pipeline._rng(cfg, "classify"))
    with mock_service() as svc:
        remote = pipeline.classify(p, data, cfg, f"remote:{svc.url}", pipeline._rng(cfg, "classify"))
    assert local["rows"] == remote["rows"]


def test_reconstruct_and_generate(cfg, trained, tmp_path):
    rep = pipeline.cmd_reconstruct(cfg, [trained / "model.json"], tmp_path / "r")
    assert rep["mask"] == list(range(6, 12))
    assert all(0 <= r["pixel_error"] <= 1 for r in rep["results"])
    with pytest.raises(ValueError):
        pipeline.cmd_reconstruct(cfg, [trained / "model.json"], tmp_path / "r2", mask=[13])
    rows = pipeline.cmd_generate(cfg, trained / "model.json", tmp_path / "g", k=3)
    assert len({(r["class"], r["image"]) for r in rows}) == len(rows)
    for cls in range(4):
        energies = [r["read_energy"] for r in rows if r["class"] == cls]
        assert energies == sorted(energies) and 1 <= len(energies) <= 3
    assert pipeline.cmd_generate(cfg, trained / "model.json", tmp_path / "g0", k=0) == []


def test_compare_report_structure(cfg, trained, tmp_path):
    models = [trained / "model.json", trained / "model_epoch_00010.json"]
    rep = pipeline.cmd_compare(cfg, models, tmp_path)
    assert [m["model"] for m in rep["models"]] == ["epoch_30", "epoch_10"]
    for tag in ("epoch_30", "epoch_10"):
        for name in ("hist_mcmc", "hist_annealer", "hist_e_act", "hist_width", "valleys_annealer", "overlap"):
            assert (tmp_path / tag / f"{name}.csv").exists()
    counts = (tmp_path / "counts.csv").read_text().splitlines()
    assert len(counts) == 3
    m = rep["models"][0]["counts"]
    assert m["n_a"] == m["n_valleys_mcmc"] and m["shared"] <= min(m["n_a"], m["n_b"])


def test_compare_with_gibbs_as_annealer(cfg, trained, tmp_path):
    rep = pipeline.cmd_compare(cfg, [trained / "model.json"], tmp_path, backend="gibbs-as-annealer")
    assert rep["backend"] == "gibbs-as-annealer"


def test_sweep_scale(cfg, trained, tmp_path):
    rep = pipeline.cmd_sweep_scale(cfg, trained / "model.json", tmp_path)
    assert [r["scale"] for r in rep["rows"]] == [1.0, 2.0]
    best = min(rep["rows"], key=lambda r: r["classification_error"])
    assert rep["argmin_scale"] == best["scale"]
    assert (tmp_path / "sweep_scale.csv").read_text().startswith("scale,classification_error,reconstruction_error")


def test_predict_label_fallback():
    p = RbmParams(np.zeros((1, 3)), [0.0, 0.5, 0.0], [0.0])
    joint = np.array([1, 1, 1, 1])
    assert pipeline.predict_label(p, joint, (1, 2)) == (-1, "ambiguous")
    assert pipeline.predict_label(p, joint, (1, 2), fallback=True) == (0, "ambiguous-fallback")
    assert pipeline.predict_label(p, np.array([1, -1, 1, 1]), (1, 2)) == (1, "ok")


def _tree(path):
    return {str(p.relative_to(path)): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_cli_runs_are_byte_identical(tmp_path):
    conf = tmp_path / "cfg.json"
    conf.write_text(json.dumps(SMALL))
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["train", "--config", str(conf), "--out", str(out / "train")]) == 0
        model = str(out / "train" / "model.json")
        assert cli.main(["classify", "--config", str(conf), "--out", str(out / "cls"), "--model", model]) == 0
        assert cli.main(["compare", "--config", str(conf), "--out", str(out / "cmp"), "--model", model]) == 0
        assert cli.main(["plot", "--out", str(out)]) == 0
        runs.append(_tree(out))
    assert runs[0] == runs[1]
    assert any(name.endswith(".svg") for name in runs[0])


def test_cli_reports_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset": {"kind": "nope"}}))
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "invalid config" in capsys.readouterr().err
