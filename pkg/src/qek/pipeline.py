"""End-to-end runs: dataset -> registers -> shots -> distributions -> kernel -> CV metrics.

Every stage writes its artifact into the run directory and records it in
``manifest.json``.  One master seed is fanned out into named streams
(stage name + graph id), so adding or removing graphs never changes the
randomness seen by the others.
"""
from __future__ import annotations

import csv
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .bayesopt import BoConfig, optimize
from .embedder import EmbeddedDataset, Register, RegisterConstraints, embed_dataset
from .emulator import MeasurementSet, NoiseModel, PhysicsConfig, derive_rng, evolve, sample
from .features import (EnergyDistribution, global_binning, qek_matrix, shot_energies, spk_matrix,
                       to_distribution)
from .graph_io import (GraphSet, corpus_stats, filter_by_node_count, load_graphs, parse_tu_dataset,
                       save_graphs)
from .learn import (GridSearchResult, Metrics, default_grid, kfold_grid_search, majority_baseline,
                    stratified_folds)
from .pulses import HardwareLimits, PulseSchedule, WaveformParams, build_schedule, validate_task

STAGES = ("parse", "filter", "embed", "schedule", "emulate", "distributions", "kernel", "train")
DEFAULT_LAMBDA = (85.0, 21.0, 50.0, 25.0, 20.0)
OUTPUT_ROOT_ENV = "QEK_OUTPUT_ROOT"


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


def resolve_output(path) -> Path:
    """Relative output paths live under $QEK_OUTPUT_ROOT when it is set."""
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


@dataclass
class PipelineConfig:
    dataset: str
    out_dir: str = "qek-run"
    dataset_name: str | None = None
    max_nodes: int = 12
    lambda_ns: tuple | str = DEFAULT_LAMBDA  # five durations, or "optimize"
    omega0: float = 15.8
    n_shots: int = 1000
    mu: float = 1.0
    k_folds: int = 10
    grid_c: int = 100
    grid_w: int = 30
    seed: int = 0
    embed_attempts: int = 20
    c6_over_hbar: float = 5.42e6
    max_atoms: int = 14
    p_init_fail: float = 0.0
    eps_g_to_r: float = 0.0
    eps_r_to_g: float = 0.0
    bo_iterations: int = 50
    register: dict = field(default_factory=dict)  # RegisterConstraints overrides

    def __post_init__(self):
        if isinstance(self.lambda_ns, str):
            if self.lambda_ns != "optimize":
                self.lambda_ns = tuple(float(v) for v in self.lambda_ns.split(","))
        else:
            self.lambda_ns = tuple(float(v) for v in self.lambda_ns)
        if self.n_shots < 1 or self.mu <= 0 or self.k_folds < 2 or self.max_nodes < 1:
            raise ValueError("invalid pipeline configuration")

    @property
    def optimize_lambda(self) -> bool:
        return self.lambda_ns == "optimize"

    def physics(self) -> PhysicsConfig:
        return PhysicsConfig(c6_over_hbar=self.c6_over_hbar, max_atoms=self.max_atoms)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.p_init_fail, self.eps_g_to_r, self.eps_r_to_g)

    def constraints(self) -> RegisterConstraints:
        from .emulator import blockade_radius

        kw = dict(self.register)
        kw.setdefault("blockade_radius", float(blockade_radius(self.omega0, 0.0, self.c6_over_hbar)))
        return RegisterConstraints(**kw)

    def grid(self):
        return default_grid(self.grid_c, self.grid_w)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_ns"] = self.lambda_ns if isinstance(self.lambda_ns, str) else list(self.lambda_ns)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> PipelineConfig:
    """Read a TOML config (``[pipeline]`` table or top-level keys) or a JSON one."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
    else:
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        doc = tomllib.loads(text)
    doc = doc.get("pipeline", doc)
    if "config" in doc and "artifacts" in doc:  # a run manifest
        doc = doc["config"]
    return PipelineConfig.from_dict(doc)


def read_dataset(path, name=None) -> GraphSet:
    """A TU directory (``name`` selects the prefix) or a saved graphs JSON."""
    if Path(path).is_dir():
        return parse_tu_dataset(path, name)
    return load_graphs(path)


# -- artifact helpers ---------------------------------------------------------

def write_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_kernel_csv(path, K, ids):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ids)
        for row in np.asarray(K):
            w.writerow([repr(float(v)) for v in row])


def read_kernel_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ids = [int(v) for v in rows[0]]
    K = np.array([[float(v) for v in r] for r in rows[1:]])
    if K.shape != (len(ids), len(ids)):
        raise ValueError(f"{path}: kernel shape {K.shape} does not match {len(ids)} ids")
    return K, ids


def write_labels_csv(path, ids, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["graph_id", "label"])
        w.writerows(zip(ids, labels))


def read_labels_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {int(r["graph_id"]): int(r["label"]) for r in rows}


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "f1", "accuracy", "precision", "recall"])
        for name, m in rows:
            w.writerow([name, m.f1, m.accuracy, m.precision, m.recall])


def write_registers(path, registers):
    write_jsonl(path, [r.to_record() for r in registers])


def read_registers(path):
    return [Register.from_record(r) for r in read_jsonl(path)]


# -- stage functions ------------------------------------------------------------

def emulate_registers(registers, schedule: PulseSchedule, n_shots, seed, physics=None, noise=None,
                      norm_log=None):
    """Evolve and sample every register; streams are keyed by graph id."""
    out = []
    for reg in registers:
        res = evolve(reg.positions, schedule, physics)
        if norm_log is not None:
            norm_log[reg.graph_id] = res.norm_drift
        rng = derive_rng(seed, "sample", reg.graph_id)
        out.append(sample(res.state, n_shots, noise=noise, graph_id=reg.graph_id, rng=rng))
    return out


def energy_samples(measurements, registers, c6_over_hbar=5.42e6):
    by_id = {r.graph_id: r for r in registers}
    return [shot_energies(m.bit_array(), by_id[m.graph_id].positions, c6_over_hbar)
            if m.kept else np.zeros(0) for m in measurements]


def distributions_from_energies(energies, ids):
    binning = global_binning(energies)
    return [to_distribution(e, binning.edges, gid) for e, gid in zip(energies, ids)]


def evaluate_kernel(K, labels, folds, grid) -> GridSearchResult:
    return kfold_grid_search(K, np.asarray(labels), grid=grid, folds=folds)


def cv_f1_objective(registers, labels, config: PipelineConfig, folds):
    """Λ -> mean held-out F1, the quantity maximized by pulse optimization."""
    labels = np.asarray(labels)
    ids = [r.graph_id for r in registers]

    def f(lam):
        sched = build_schedule(WaveformParams.from_sequence(lam), config.omega0)
        ms = emulate_registers(registers, sched, config.n_shots, config.seed, config.physics(),
                               config.noise())
        dists = distributions_from_energies(energy_samples(ms, registers, config.c6_over_hbar), ids)
        K = qek_matrix(dists, config.mu)
        return evaluate_kernel(K, labels, folds, config.grid()).mean.f1

    return f


@dataclass
class RunManifest:
    config: dict
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    out_dir: str = ""

    def path(self, name) -> Path:
        return Path(self.out_dir) / self.artifacts[name]

    def save(self):
        doc = {"config": self.config, "artifacts": self.artifacts, "timings": self.timings,
               "versions": self.versions, "summary": self.summary}
        with open(Path(self.out_dir) / "manifest.json", "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        run_dir = Path(run_dir)
        doc = json.loads((run_dir / "manifest.json").read_text())
        m = cls(out_dir=str(run_dir), **doc)
        missing = [n for n, p in m.artifacts.items() if not (run_dir / p).exists()]
        if missing:
            raise FileNotFoundError(f"manifest references missing artifacts: {missing}")
        return m


class _Stages:
    def __init__(self, manifest: RunManifest):
        self.m = manifest
        self.current = None

    def __call__(self, name):
        self.current = name
        return self

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, et, ev, tb):
        self.m.timings[self.current] = time.perf_counter() - self.t0
        if ev is not None:
            self.m.summary["failed_stage"] = self.current
            self.m.save()
            if isinstance(ev, StageError):
                return False
            raise StageError(self.current, ev) from ev


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Execute every stage, persisting each artifact; returns the manifest."""
    out = resolve_output(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import scipy
    import sklearn

    man = RunManifest(config=config.to_dict(), out_dir=str(out),
                      versions={"qek": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                                "sklearn": sklearn.__version__, "python": platform.python_version()})
    stage = _Stages(man)
    c = config.constraints()

    with stage("parse"):
        gs = read_dataset(config.dataset, config.dataset_name)
        save_graphs(gs, out / "graphs.json")
        man.artifacts["parse"] = "graphs.json"
        man.summary["stats"] = corpus_stats(gs).to_dict()

    with stage("filter"):
        fs = filter_by_node_count(gs, config.max_nodes)
        if len(fs) == 0:
            raise ValueError(f"no graph has <= {config.max_nodes} nodes")
        save_graphs(fs, out / "filtered.json")
        man.artifacts["filter"] = "filtered.json"

    with stage("embed"):
        ed: EmbeddedDataset = embed_dataset(fs, c, config.seed, config.embed_attempts)
        regs = ed.registers
        write_registers(out / "registers.jsonl", regs)
        with open(out / "embedding_report.json", "w") as fh:
            json.dump({"embedded": [g.id for g in ed.graphs], "rejected": ed.rejected,
                       "attempts": {str(k): v for k, v in ed.attempts.items()}}, fh, indent=1)
        man.artifacts["embed"] = "registers.jsonl"
        man.summary["embedded"] = len(regs)
        man.summary["rejected"] = len(ed.rejected)
        if len(set(g.label for g in ed.graphs)) < 2:
            raise ValueError("embedded corpus does not contain both classes")
        graphs = ed.graphs
        ids = [g.id for g in graphs]
        labels = np.array([g.label for g in graphs])
        write_labels_csv(out / "labels.csv", ids, labels.tolist())
        folds = stratified_folds(labels, config.k_folds, config.seed)

    lam = config.lambda_ns
    if config.optimize_lambda:
        with stage("optimize"):
            objective = cv_f1_objective(regs, labels, config, folds)
            best, best_v, trace = optimize(objective, BoConfig(max_iterations=config.bo_iterations,
                                                               seed=config.seed))
            write_bo_trace(out / "bo_trace.csv", trace)
            man.artifacts["optimize"] = "bo_trace.csv"
            man.summary["bo_best"] = {"lambda_ns": [float(v) for v in best], "f1_mean": best_v}
            lam = tuple(float(v) for v in best)

    with stage("schedule"):
        limits = HardwareLimits(omega_max=max(config.omega0, 15.8), register=c)
        params = WaveformParams.from_sequence(lam)
        sched = build_schedule(params, config.omega0, limits)
        problems = {r.graph_id: validate_task(sched, r, limits) for r in regs}
        problems = {k: v for k, v in problems.items() if v}
        if problems:
            raise ValueError(f"invalid tasks: {problems}")
        with open(out / "schedule.json", "w") as fh:
            json.dump({"lambda_ns": list(lam), "omega0": config.omega0,
                       "segments": [asdict(s) for s in sched.segments],
                       "mixing_angles_rad": sched.mixing_angles()}, fh, indent=1)
        man.artifacts["schedule"] = "schedule.json"

    with stage("emulate"):
        drift: dict = {}
        ms = emulate_registers(regs, sched, config.n_shots, config.seed, config.physics(),
                               config.noise(), norm_log=drift)
        write_jsonl(out / "measurements.jsonl", [m.to_record() for m in ms])
        man.artifacts["emulate"] = "measurements.jsonl"
        man.summary["max_norm_drift"] = max(drift.values()) if drift else 0.0

    with stage("distributions"):
        dists = distributions_from_energies(energy_samples(ms, regs, config.c6_over_hbar), ids)
        write_jsonl(out / "distributions.jsonl", [d.to_record() for d in dists])
        man.artifacts["distributions"] = "distributions.jsonl"

    with stage("kernel"):
        K = qek_matrix(dists, config.mu)
        write_kernel_csv(out / "kernel.csv", K, ids)
        man.artifacts["kernel"] = "kernel.csv"

    with stage("train"):
        res = evaluate_kernel(K, labels, folds, config.grid())
        with open(out / "results.json", "w") as fh:
            json.dump(res.to_dict(), fh, indent=1)
        write_metrics_csv(out / "metrics.csv", [("qek", res.mean),
                                                ("majority", majority_baseline(labels))])
        man.artifacts["train"] = "results.json"
        man.summary["mean"] = res.mean.as_dict()
        man.summary["majority"] = majority_baseline(labels).as_dict()

    man.save()
    return man


def write_bo_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "tau0", "t0", "tau1", "t1", "tau2", "f1_mean", "incumbent"])
        w.writerows(trace.rows())


def load_run(run_dir):
    """Measurements, registers, labels (id-ordered) and folds-config of a finished run."""
    man = RunManifest.load(run_dir)
    ms = [MeasurementSet.from_record(r) for r in read_jsonl(man.path("emulate"))]
    regs = read_registers(man.path("embed"))
    lab = read_labels_csv(Path(man.out_dir) / "labels.csv")
    return man, ms, regs, [lab[m.graph_id] for m in ms]


def subsample(ms: MeasurementSet, k, rng) -> MeasurementSet:
    if k > ms.kept:
        raise ValueError(f"graph {ms.graph_id}: requested {k} shots but only {ms.kept} were kept")
    idx = rng.choice(ms.kept, size=k, replace=False)
    return MeasurementSet(ms.graph_id, ms.n_atoms, k, [ms.shots[i] for i in np.sort(idx)])


def shot_subsample_analysis(measurements, registers, labels, shot_counts, seed=0, mu=1.0,
                            k_folds=10, grid=None, folds=None, c6_over_hbar=5.42e6):
    """Metrics table against the number of shots per graph.

    For every count, each graph's shots are drawn without replacement, the
    shared energy support is re-derived and the kernel re-evaluated with
    the same folds and grid.  Returns ``[(k, Metrics), ...]``.
    """
    for k in shot_counts:
        short = next((m for m in measurements if k > m.kept), None)
        if short is not None:
            raise ValueError(f"graph {short.graph_id}: requested {k} shots but only {short.kept} were kept")
    labels = np.asarray(labels)
    folds = folds if folds is not None else stratified_folds(labels, k_folds, seed)
    grid = grid or default_grid()
    ids = [m.graph_id for m in measurements]
    rows = []
    for k in shot_counts:
        sub = [subsample(m, k, derive_rng(seed, f"subsample/{k}", m.graph_id)) for m in measurements]
        dists = distributions_from_energies(energy_samples(sub, registers, c6_over_hbar), ids)
        K = qek_matrix(dists, mu)
        rows.append((k, evaluate_kernel(K, labels, folds, grid).mean))
    return rows


def compare_kernels(kernels: dict, labels, ids=None, k_folds=10, seed=0, grid=None, folds=None):
    """Side-by-side CV metrics for several kernels over identical folds, plus the
    majority-class baseline.  ``kernels`` maps name -> (K, ids) or name -> K."""
    mats = {}
    for name, val in kernels.items():
        K, kid = val if isinstance(val, tuple) else (val, ids)
        if ids is not None and kid is not None and list(kid) != list(ids):
            raise ValueError(f"kernel {name!r} is over different graph ids")
        mats[name] = K
    labels = np.asarray(labels)
    folds = folds if folds is not None else stratified_folds(labels, k_folds, seed)
    grid = grid or default_grid()
    rows = [(name, evaluate_kernel(K, labels, folds, grid).mean) for name, K in mats.items()]
    rows.append(("majority", majority_baseline(labels)))
    return rows


def spk_for_graphs(graphs):
    return spk_matrix(list(graphs))
