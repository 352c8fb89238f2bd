"""Experiment commands: train, classify, reconstruct, generate, compare, sweep-scale.

Every command takes an ExperimentConfig and an output directory, writes CSV and
JSON reports plus a ``manifest.json`` (config fingerprint, code version and
file hashes), and is a pure function of the config and its seeds.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import datasets as ds
from .annealer import AnnealSchedule, dedupe, make_annealer
from .chimera import build_chimera, clamp_units, decode_many, embed_rbm, sweep_scale, weak_couplings
from .config import ExperimentConfig
from .gibbs import WarmingSchedule, gibbs_chain, relax_t0, simulated_warming
from .rbm import RbmParams, SpinState, TrainConfig, energy_vh, free_energy, init_params, spins_to_str, train
from .valleys import (
    energy_histogram,
    measure_activation,
    overlap_stats,
    registry_from_states,
    value_histogram,
    width_parameter,
    write_rows_csv,
)

log = logging.getLogger(__name__)

MCMC = "mcmc"
GIBBS_AS_ANNEALER = "gibbs-as-annealer"

# independent random streams per command
_STREAMS = {"init": 1, "train": 2, "classify": 3, "reconstruct": 4, "generate": 5, "compare": 6, "sweep": 7}


def _rng(cfg, name, *extra):
    return np.random.default_rng([cfg.seed, _STREAMS[name], *extra])


# ---------------------------------------------------------------------------
# data


@dataclass
class Data:
    train: np.ndarray  # (K, n_v) int8
    train_cls: np.ndarray
    test: np.ndarray
    test_cls: np.ndarray
    label_units: tuple
    pixel_units: tuple
    dataset_id: str
    pixel_shape: tuple | None = None

    @property
    def n_v(self):
        return self.train.shape[1]


def load_data(cfg: ExperimentConfig) -> Data:
    d = cfg.dataset
    if d.kind == "optdigits":
        tra = ds.load_optdigits(d.train_path or ds.bundled_optdigits("tra"))
        tes = ds.load_optdigits(d.test_path) if d.test_path else (
            None if d.train_path else ds.load_optdigits(ds.bundled_optdigits("tes")))
        train_p, test_p = ds.preprocess(tra, tes, d.threshold, d.train_count, d.test_count, d.drop)
        n_lab = ds.N_CLASSES
        shape = (ds.PIXEL_ROWS, ds.PIXEL_COLS)
        ident = f"optdigits:{Path(d.train_path).name if d.train_path else 'bundled'}:t{d.threshold}:{d.drop}"
    elif d.kind == "prototypes":
        train_p, protos = ds.prototype_patterns(d.n_classes, d.n_pixels, d.per_class, d.flip_prob, d.seed)
        test_all, _ = ds.prototype_patterns(d.n_classes, d.n_pixels, d.per_class + d.test_per_class, d.flip_prob, d.seed)
        test_p = test_all[len(train_p):]
        n_lab, shape = d.n_classes, None
        ident = f"prototypes:{d.n_classes}x{d.n_pixels}:{d.per_class}:{d.flip_prob}:{d.seed}"
    elif d.kind == "patterns":
        train_p = ds.read_patterns(d.train_path)
        test_p = ds.read_patterns(d.test_path) if d.test_path else list(train_p)
        n_lab, shape = d.n_classes, None
        ident = f"patterns:{Path(d.train_path).name}"
    elif d.kind == "bas":
        bas = ds.gen_bas(d.n).reshape(-1, d.n * d.n)
        arr = bas.astype(np.int8)
        return Data(arr, -np.ones(len(arr), int), arr, -np.ones(len(arr), int), (), tuple(range(d.n * d.n)),
                    f"bas:{d.n}", (d.n, d.n))
    else:
        raise ValueError(f"unknown dataset kind {d.kind!r}")
    train_arr, test_arr = ds.patterns_array(train_p), ds.patterns_array(test_p)
    n_v = train_arr.shape[1]
    labels = tuple(range(n_v - n_lab, n_v))
    test_cls = np.array([p.cls for p in test_p])
    if cfg.max_test is not None:
        test_arr, test_cls = test_arr[: cfg.max_test], test_cls[: cfg.max_test]
    return Data(train_arr, np.array([p.cls for p in train_p]), test_arr, test_cls, labels,
                tuple(range(n_v - n_lab)), ident, shape)


# ---------------------------------------------------------------------------
# reports


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n")


def _header(cfg, command):
    return {"command": command, "config_fingerprint": cfg.fingerprint(), "version": __version__}


def write_manifest(out: Path, cfg, command):
    cfg.save(out / "config.json")
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(out))] = hashlib.sha256(p.read_bytes()).hexdigest()
    write_json(out / "manifest.json", {**_header(cfg, command), "files": files})


def _prepare(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# logical solving through the configured backend


def lattice_for(cfg, params):
    e = cfg.embedding
    M = e.M or max(1, math.ceil(params.n_h / e.c))
    N = e.N or max(1, math.ceil(params.n_v / e.c))
    return build_chimera(M, N, e.c)


class LogicalSolver:
    """Solve an RBM with some visible units clamped, returning decoded logical reads.

    Annealer backends embed the model, clamp chains at +/-2, anneal and decode
    by majority vote. The MCMC backend works on the RBM graph directly:
    a clamped Gibbs chain followed by T=0 relaxation, one chain per read.
    """

    def __init__(self, params: RbmParams, cfg: ExperimentConfig, backend: str, scale=None):
        self.params = params
        self.cfg = cfg
        self.backend = backend
        if backend not in (MCMC, GIBBS_AS_ANNEALER):
            a = cfg.anneal
            self.sampler = make_annealer(backend, AnnealSchedule(a.beta_start, a.beta_end, a.sweeps))
            self.scale = cfg.embedding.scale if scale is None else scale
            self.problem, self.embedding = embed_rbm(params, lattice_for(cfg, params), self.scale)
            weak = weak_couplings(self.problem, cfg.embedding.j_floor)
            if weak:
                log.info("%d couplers below the sensitivity floor %g", len(weak), cfg.embedding.j_floor)

    def solve(self, clamp: dict, num_reads, rng):
        """Reads sorted by backend energy: (joint spins, read energies, rbm energies, multiplicities)."""
        p = self.params
        if self.backend in (MCMC, GIBBS_AS_ANNEALER):
            mask = np.zeros(p.n_units, dtype=bool)
            v0 = np.where(rng.random((num_reads, p.n_v)) < 0.5, 1, -1).astype(np.int8)
            for u, val in clamp.items():
                v0[:, u] = val
                mask[u] = True
            st = mcmc_relax(p, v0, mask, self.cfg, rng)
            joint = st.joint()
            e = energy_vh(p, st.v.astype(float), st.h.astype(float))
            order = np.argsort(e, kind="stable")
            return joint[order], e[order], e[order], np.ones(num_reads, int)
        problem = clamp_units(self.problem, self.embedding, clamp)
        sample = self.sampler.sample(problem, num_reads, int(rng.integers(2**63 - 1)))
        joint = decode_many(self.embedding, sample.spins(), rng)
        e = energy_vh(p, joint[:, : p.n_v].astype(float), joint[:, p.n_v :].astype(float))
        mult = np.array([r.multiplicity for r in sample.reads])
        return joint, sample.energies(), e, mult


def mcmc_relax(params, v0, mask, cfg, rng) -> SpinState:
    """Clamped Gibbs chain at T=1 for `chain_sweeps`, then T=0 relaxation, batched over rows of v0."""
    st = gibbs_chain(params, v0, cfg.mcmc.chain_sweeps, 1.0, rng, mask)
    return relax_t0(params, st, cfg.mcmc.relax_sweeps, rng, mask)


def predict_label(params, joint, label_units, fallback=False):
    """Class = index of the unique +1 label spin; else -1 (or the best one-hot completion)."""
    lab = joint[list(label_units)]
    on = np.nonzero(lab > 0)[0]
    if on.size == 1:
        return int(on[0]), "ok"
    status = "none" if on.size == 0 else "ambiguous"
    if not fallback:
        return -1, status
    v = np.repeat(joint[None, : params.n_v].astype(float), len(label_units), axis=0)
    v[:, list(label_units)] = -1
    v[np.arange(len(label_units)), list(label_units)] = 1
    return int(np.argmin(free_energy(params, v))), status + "-fallback"


# ---------------------------------------------------------------------------
# train


def cmd_train(cfg: ExperimentConfig, out) -> RbmParams:
    out = _prepare(out)
    data = load_data(cfg)
    t = cfg.train
    params = init_params(data.n_v, cfg.model.n_hidden, _rng(cfg, "init"), cfg.model.init_scale, data.label_units)
    tc = TrainConfig(t.epochs, t.learning_rate, t.cd_steps, t.weight_decay, t.decay_power, t.w_cap,
                     t.batch_size, 1.0, t.exact, cfg.seed)
    meta = {"seed": cfg.seed, "dataset_id": data.dataset_id, "w_cap": t.w_cap}

    def checkpoint(epoch, p):
        if epoch in t.checkpoints:
            q = p.copy()
            q.meta = {**meta, "epochs": epoch}
            q.save(out / f"model_epoch_{epoch:05d}.json")

    params.meta = {**meta, "epochs": 0}
    params, metrics = train(params, data.train, tc, _rng(cfg, "train"), checkpoint)
    params.meta = {**meta, "epochs": t.epochs}
    params.save(out / "model.json")
    cols = ["epoch", "reconstruction_error", "max_abs_w"] + (["log_likelihood"] if metrics and "log_likelihood" in metrics[0] else [])
    write_rows_csv(out / "metrics.csv", metrics, cols)
    write_manifest(out, cfg, "train")
    return params


# ---------------------------------------------------------------------------
# classify / reconstruct


def _pixel_clamps(data, row, hidden_pixels=()):
    skip = set(hidden_pixels)
    return {u: int(row[u]) for u in data.pixel_units if u not in skip}


def classify(params, data: Data, cfg, backend, rng, solver=None) -> dict:
    """Classify every test pattern with its pixels clamped; returns summary and per-image rows."""
    if not data.label_units:
        raise ValueError("dataset has no label units to classify")
    rows = []
    if backend in (MCMC, GIBBS_AS_ANNEALER):
        mask = np.zeros(params.n_units, dtype=bool)
        mask[list(data.pixel_units)] = True
        v0 = data.test.copy()
        lab = list(data.label_units)
        v0[:, lab] = np.where(rng.random((len(v0), len(lab))) < 0.5, 1, -1)
        joint = mcmc_relax(params, v0, mask, cfg, rng).joint()
    else:
        solver = solver or LogicalSolver(params, cfg, backend)
        joint = np.array([solver.solve(_pixel_clamps(data, row), cfg.task_reads, rng)[0][0] for row in data.test])
    for k, j in enumerate(joint):
        pred, status = predict_label(params, j, data.label_units, cfg.label_fallback)
        rows.append({"index": k, "true": int(data.test_cls[k]), "predicted": pred, "status": status,
                     "correct": int(pred == data.test_cls[k])})
    n = len(rows)
    err = 1.0 - sum(r["correct"] for r in rows) / n
    summary = {"backend": backend, "n_test": n, "error": err,
               "n_invalid": sum(r["status"] != "ok" for r in rows),
               "n_ambiguous": sum(r["status"].startswith("ambiguous") for r in rows)}
    return {"summary": summary, "rows": rows}


def default_mask(data: Data):
    if data.pixel_shape and len(data.pixel_units) == data.pixel_shape[0] * data.pixel_shape[1]:
        rows, cols = data.pixel_shape
        return list(range((rows - rows // 2) * cols, rows * cols))
    n = len(data.pixel_units)
    return list(data.pixel_units[n - n // 2 :])


def reconstruct(params, data: Data, cfg, backend, rng, mask=None, solver=None) -> dict:
    mask = default_mask(data) if mask is None else list(mask)
    if any(u not in data.pixel_units for u in mask):
        raise ValueError("reconstruction mask must be a subset of the pixel units")
    if not mask:
        return {"summary": {"backend": backend, "n_test": len(data.test), "pixel_error": 0.0, "n_masked": 0},
                "rows": [], "images": data.test.copy()}
    if backend in (MCMC, GIBBS_AS_ANNEALER):
        clamp_mask = np.zeros(params.n_units, dtype=bool)
        clamp_mask[[u for u in data.pixel_units if u not in set(mask)]] = True
        v0 = data.test.copy()
        free = np.nonzero(~clamp_mask[: params.n_v])[0]
        v0[:, free] = np.where(rng.random((len(v0), free.size)) < 0.5, 1, -1)
        joint = mcmc_relax(params, v0, clamp_mask, cfg, rng).joint()
    else:
        solver = solver or LogicalSolver(params, cfg, backend)
        joint = np.array([solver.solve(_pixel_clamps(data, row, mask), cfg.task_reads, rng)[0][0] for row in data.test])
    images = joint[:, : params.n_v]
    errs = np.mean(images[:, mask] != data.test[:, mask], axis=1)
    rows = [{"index": k, "pixel_error": float(e)} for k, e in enumerate(errs)]
    return {"summary": {"backend": backend, "n_test": len(rows), "pixel_error": float(errs.mean()),
                        "n_masked": len(mask)}, "rows": rows, "images": images}


def _backends(cfg, backends):
    return list(backends) if backends else [MCMC, cfg.backend]


def _models(cfg, models):
    return [RbmParams.load(m) if not isinstance(m, RbmParams) else m for m in models]


def _model_tag(params, k):
    ep = params.meta.get("epochs")
    return f"epoch_{ep}" if ep is not None else f"model_{k}"


def cmd_classify(cfg: ExperimentConfig, models, out, backends=None) -> dict:
    out = _prepare(out)
    data = load_data(cfg)
    report = {**_header(cfg, "classify"), "results": []}
    rows = []
    for k, params in enumerate(_models(cfg, models)):
        for b in _backends(cfg, backends):
            res = classify(params, data, cfg, b, _rng(cfg, "classify", k))
            tag = _model_tag(params, k)
            report["results"].append({"model": tag, "epochs": params.meta.get("epochs"), **res["summary"]})
            rows += [{"model": tag, "backend": b, **r} for r in res["rows"]]
    write_json(out / "classify.json", report)
    write_rows_csv(out / "classify.csv", report["results"], ["model", "epochs", "backend", "n_test", "error", "n_invalid", "n_ambiguous"])
    write_rows_csv(out / "classify_images.csv", rows, ["model", "backend", "index", "true", "predicted", "status", "correct"])
    write_manifest(out, cfg, "classify")
    return report


def cmd_reconstruct(cfg: ExperimentConfig, models, out, backends=None, mask=None) -> dict:
    out = _prepare(out)
    data = load_data(cfg)
    mask = cfg.reconstruct_mask if mask is None else mask
    report = {**_header(cfg, "reconstruct"), "mask": default_mask(data) if mask is None else list(mask), "results": []}
    for k, params in enumerate(_models(cfg, models)):
        for b in _backends(cfg, backends):
            res = reconstruct(params, data, cfg, b, _rng(cfg, "reconstruct", k), mask)
            tag = _model_tag(params, k)
            report["results"].append({"model": tag, "epochs": params.meta.get("epochs"), **res["summary"]})
            name = f"reconstructed_{tag}_{b.replace(':', '_').replace('/', '_')}.txt"
            with open(out / name, "w") as fh:
                for cls, img in zip(data.test_cls, res["images"]):
                    fh.write(" ".join(str(int(x)) for x in img) + f" {int(cls)}\n")
    write_json(out / "reconstruct.json", report)
    write_rows_csv(out / "reconstruct.csv", report["results"], ["model", "epochs", "backend", "n_test", "n_masked", "pixel_error"])
    write_manifest(out, cfg, "reconstruct")
    return report


# ---------------------------------------------------------------------------
# generate


def generate(params, data: Data, cfg, backend, cls, k, rng) -> list:
    """The k lowest-energy distinct images with the label units clamped to class `cls`."""
    if not 0 <= cls < len(data.label_units):
        raise ValueError(f"class {cls} out of range")
    if k == 0:
        return []
    clamp = {u: (1 if i == cls else -1) for i, u in enumerate(data.label_units)}
    joint, read_e, rbm_e, _ = LogicalSolver(params, cfg, backend).solve(clamp, cfg.task_reads, rng)
    seen, out = set(), []
    for j, re_, e in zip(joint, read_e, rbm_e):
        img = spins_to_str(j[list(data.pixel_units)])
        if img in seen:
            continue
        seen.add(img)
        out.append({"class": cls, "rank": len(out), "read_energy": float(re_), "rbm_energy": float(e),
                    "label_ok": int(predict_label(params, j, data.label_units)[0] == cls), "image": img})
        if len(out) == k:
            break
    return out


def cmd_generate(cfg: ExperimentConfig, model, out, backend=None, classes=None, k=None) -> list:
    out = _prepare(out)
    data = load_data(cfg)
    params = _models(cfg, [model])[0]
    backend = backend or cfg.backend
    classes = classes if classes is not None else (cfg.generate_classes or list(range(len(data.label_units))))
    k = cfg.generate_k if k is None else k
    rows = []
    for cls in classes:
        rows += generate(params, data, cfg, backend, cls, k, _rng(cfg, "generate", cls))
    write_json(out / "generate.json", {**_header(cfg, "generate"), "backend": backend, "images": rows})
    write_rows_csv(out / "generate.csv", rows, ["class", "rank", "read_energy", "rbm_energy", "label_ok", "image"])
    write_manifest(out, cfg, "generate")
    return rows


# ---------------------------------------------------------------------------
# compare


def sample_visible(params, data, cfg, backend, rng):
    """Distinct visible vectors (with multiplicities) of a backend sample without clamping."""
    n = cfg.sample_reads
    if backend == GIBBS_AS_ANNEALER:
        idx = np.arange(n) % len(data.train)
        v = gibbs_chain(params, data.train[idx], cfg.compare.pre_steps, 1.0, rng).v
        uniq, first, counts = np.unique(v, axis=0, return_index=True, return_counts=True)
        order = np.argsort(first)
        return uniq[order], counts[order]
    if backend == MCMC:
        raise ValueError("compare needs an annealer-like backend for the second sample")
    a = cfg.anneal
    sampler = make_annealer(backend, AnnealSchedule(a.beta_start, a.beta_end, a.sweeps))
    problem, emb = embed_rbm(params, lattice_for(cfg, params), cfg.embedding.scale)
    sample = sampler.sample(problem, n, int(rng.integers(2**63 - 1)))
    reads = dedupe(sample)
    joint = decode_many(emb, np.array([r.spins for r in reads]), rng)
    return joint[:, : params.n_v], np.array([r.multiplicity for r in reads])


def _pick_valleys(recs, reg_a, limit):
    """Lowest-energy valleys to characterize, split evenly between shared and annealer-only ones."""
    if limit is None:
        return list(recs)
    shared = [r for r in recs if r.key in reg_a]
    only = [r for r in recs if r.key not in reg_a]
    n_shared = min(len(shared), max(limit - len(only), (limit + 1) // 2))
    picked = {r.key for r in shared[:n_shared] + only[: limit - n_shared]}
    return [r for r in recs if r.key in picked]


def compare(params, data: Data, cfg, backend, rng) -> dict:
    c = cfg.compare
    reg_a = registry_from_states(params, data.train, "mcmc", c.pre_steps, rng)
    v_b, mult = sample_visible(params, data, cfg, backend, rng)
    reg_b = registry_from_states(params, v_b, "annealer", c.pre_steps, rng, multiplicities=mult)
    ov = overlap_stats(reg_a, reg_b)
    k = len(data.train)
    counts = {"n_patterns": k, "n_valleys_mcmc": len(reg_a), "n_valleys_annealer": len(reg_b),
              "normalized_mcmc": reg_a.normalized_count(k), "normalized_annealer": reg_b.normalized_count(k),
              "distinct_annealer_states": int(len(v_b)), **ov}

    recs = reg_b.sorted_records()
    chosen = _pick_valleys(recs, reg_a, c.max_valleys)
    schedule = WarmingSchedule(c.warming_rungs)
    valley_rows = []
    for rec in recs:
        valley_rows.append({"state": rec.key, "energy": rec.min_energy, "hits": rec.hits.get("annealer", 0),
                            "shared": int(rec.key in reg_a), "e_act": None, "ln_prefactor": None,
                            "r_squared": None, "width": None, "n_rates": 0, "last_excess": None})
    rows_by_key = {r["state"]: r for r in valley_rows}
    for rec in chosen:
        row = rows_by_key[rec.key]
        fit, results = measure_activation(params, rec.id, c.escape_temperatures, c.trials, c.max_jumps,
                                          c.low_t_count, rng)
        row["n_rates"] = sum(not r.all_censored for _, r in results)
        # energy of the last in-valley state before escape, lowest temperature with escapes
        last = [r.last_energies for _, r in results if r.last_energies.size]
        if last:
            row["last_excess"] = float(np.mean(last[0]) - rec.min_energy)
        if fit is not None:
            rec.fit, rec.e_act = fit, fit.e_act
            row.update(e_act=fit.e_act, ln_prefactor=fit.ln_prefactor, r_squared=fit.r_squared)
            if fit.e_act > 0 and c.width_traces > 0:
                traces = [simulated_warming(params, rec.id, schedule, rng) for _ in range(c.width_traces)]
                rec.width = width_parameter(params, rec.id, fit.e_act, traces, rng)
                row["width"] = rec.width
    shared = np.array([r["shared"] for r in valley_rows], dtype=bool)
    eact = np.array([np.nan if r["e_act"] is None else r["e_act"] for r in valley_rows])
    width = np.array([np.nan if r["width"] is None else r["width"] for r in valley_rows])
    return {
        "counts": counts,
        "hist_mcmc": energy_histogram(reg_a, c.hist_bins, reg_b),
        "hist_annealer": energy_histogram(reg_b, c.hist_bins, reg_a),
        "hist_e_act": value_histogram(eact, shared, c.hist_bins),
        "hist_width": value_histogram(width, shared, c.hist_bins),
        "valleys_annealer": valley_rows,
        "registries": (reg_a, reg_b),
    }


_HIST_COLS = ["bin_lo", "bin_hi", "total", "shared", "only"]
_COUNT_COLS = ["model", "epochs", "n_patterns", "n_valleys_mcmc", "n_valleys_annealer", "normalized_mcmc",
               "normalized_annealer", "distinct_annealer_states", "n_a", "n_b", "shared",
               "missed_by_b_fraction", "missed_by_a_fraction"]


def cmd_compare(cfg: ExperimentConfig, models, out, backend=None) -> dict:
    out = _prepare(out)
    data = load_data(cfg)
    backend = backend or cfg.compare.annealer_backend or cfg.backend
    report = {**_header(cfg, "compare"), "backend": backend, "models": []}
    summary = []
    for k, params in enumerate(_models(cfg, models)):
        tag = _model_tag(params, k)
        res = compare(params, data, cfg, backend, _rng(cfg, "compare", k))
        sub = out / tag
        sub.mkdir(exist_ok=True)
        for name in ("hist_mcmc", "hist_annealer", "hist_e_act", "hist_width"):
            write_rows_csv(sub / f"{name}.csv", res[name], _HIST_COLS)
        write_rows_csv(sub / "valleys_annealer.csv", res["valleys_annealer"],
                       ["state", "energy", "hits", "shared", "e_act", "ln_prefactor", "r_squared", "width", "n_rates",
                        "last_excess"])
        write_rows_csv(sub / "overlap.csv", [res["counts"]], _COUNT_COLS[2:])
        reg_a, reg_b = res.pop("registries")
        reg_a.to_jsonl(sub / "registry_mcmc.jsonl")
        reg_b.to_jsonl(sub / "registry_annealer.jsonl")
        summary.append({"model": tag, "epochs": params.meta.get("epochs"), **res["counts"]})
        report["models"].append({"model": tag, "epochs": params.meta.get("epochs"), **res})
    write_rows_csv(out / "counts.csv", summary, _COUNT_COLS)
    write_json(out / "compare.json", report)
    write_manifest(out, cfg, "compare")
    return report


# ---------------------------------------------------------------------------
# scale sweep


def cmd_sweep_scale(cfg: ExperimentConfig, model, out, backend=None, scales=None) -> dict:
    out = _prepare(out)
    data = load_data(cfg)
    params = _models(cfg, [model])[0]
    backend = backend or cfg.backend
    scales = list(cfg.scales if scales is None else scales)
    recon = {}

    def evaluate(problem, emb, s):
        solver = LogicalSolver(params, cfg, backend, scale=s)
        rng = _rng(cfg, "sweep", scales.index(s))
        cls_err = classify(params, data, cfg, backend, rng, solver)["summary"]["error"] if data.label_units else float("nan")
        recon[s] = reconstruct(params, data, cfg, backend, rng, cfg.reconstruct_mask, solver)["summary"]["pixel_error"]
        return cls_err

    table, best = sweep_scale(params, lattice_for(cfg, params), scales, evaluate)
    rows = [{"scale": float(s), "classification_error": e, "reconstruction_error": recon[s]} for s, e in table]
    write_rows_csv(out / "sweep_scale.csv", rows, ["scale", "classification_error", "reconstruction_error"])
    report = {**_header(cfg, "sweep-scale"), "backend": backend, "rows": rows, "argmin_scale": float(best)}
    write_json(out / "sweep_scale.json", report)
    write_manifest(out, cfg, "sweep-scale")
    return report
