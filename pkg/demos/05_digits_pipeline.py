"""The digit experiments at reduced size: train, classify, reconstruct, generate, compare.

Every step writes CSV/JSON reports under demo_run/; the same steps are available
from the command line as ``valleyscope <command> --config ... --out ...``.
"""
# %%
import json

from valleyscope import pipeline
from valleyscope.config import ExperimentConfig

cfg = ExperimentConfig.from_dict({
    "dataset": {"train_count": 256, "test_count": 80},
    "model": {"n_hidden": 32},
    "train": {"epochs": 60, "batch_size": 16, "checkpoints": [10]},
    "anneal": {"sweeps": 200},
    "task_reads": 10,
    "sample_reads": 200,
    "compare": {"trials": 10, "max_jumps": 10000, "max_valleys": 2},
    "scales": [1, 2, 4],
})
data = pipeline.load_data(cfg)
print(data.train.shape, data.test.shape)

# first training digit as 8 rows of 7 pixels
for row in data.train[0, :56].reshape(8, 7):
    print("".join("#" if x > 0 else "." for x in row))

# %%
pipeline.cmd_train(cfg, "demo_run/train")
model = "demo_run/train/model.json"

rep = pipeline.cmd_classify(cfg, [model], "demo_run/classify")
for r in rep["results"]:
    print(r["backend"], "classification error", round(r["error"], 3))

# %%
rep = pipeline.cmd_reconstruct(cfg, [model], "demo_run/reconstruct")
for r in rep["results"]:
    print(r["backend"], "pixel error on the hidden bottom half", round(r["pixel_error"], 3))

rows = pipeline.cmd_generate(cfg, model, "demo_run/generate", classes=[3], k=1)
for row in [rows[0]["image"][k : k + 7] for k in range(0, 56, 7)]:
    print(row.replace("+", "#").replace("-", "."))

# %% [markdown]
# Valleys found from the training patterns (Gibbs step then relaxation) against
# valleys of annealer reads.

# %%
rep = pipeline.cmd_compare(cfg, [model, "demo_run/train/model_epoch_00010.json"], "demo_run/compare")
for m in rep["models"]:
    print(m["model"], json.dumps({k: m["counts"][k] for k in ("n_a", "n_b", "shared")}))

# %%
rep = pipeline.cmd_sweep_scale(cfg, model, "demo_run/sweep")
print("best scale", rep["argmin_scale"])
