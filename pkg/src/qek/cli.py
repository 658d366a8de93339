"""Command-line interface: ``qek <command>``.

Exit codes: 0 success, 2 validation failure (bad input, infeasible task),
3 stage error (a computation failed).  Relative ``--out`` paths are placed
under ``$QEK_OUTPUT_ROOT`` when it is set.
"""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .embedder import embed_dataset
from .emulator import NoiseModel, PhysicsConfig
from .features import spk_matrix
from .graph_io import TUParseError, corpus_stats, filter_by_node_count, save_graphs
from .learn import default_grid, kfold_grid_search, majority_baseline, stratified_folds
from .pipeline import (PipelineConfig, StageError, compare_kernels, cv_f1_objective,
                       distributions_from_energies, emulate_registers, energy_samples, load_config,
                       load_run, read_dataset, read_jsonl, read_kernel_csv, read_labels_csv,
                       read_registers, resolve_output, run_pipeline, shot_subsample_analysis,
                       write_bo_trace, write_jsonl, write_kernel_csv, write_labels_csv,
                       write_metrics_csv, write_registers)
from .pulses import (HardwareLimits, ValidationError, WaveformParams, build_schedule,
                     emit_task_document, parse_task_document, validate_task)

EXIT_VALIDATION = 2
EXIT_STAGE = 3


def _guard(fn):
    """Map library exceptions onto the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, TUParseError, ValueError, FileNotFoundError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (StageError, RuntimeError, ArithmeticError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_STAGE)
    return wrapper


def _echo_json(obj):
    click.echo(json.dumps(obj, indent=1, sort_keys=True))


def _lambda(text):
    return WaveformParams.from_sequence([float(v) for v in text.split(",")])


def _out_dir(path) -> Path:
    p = resolve_output(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _metrics_rows_json(rows):
    return [{"name": str(name), **m.as_dict()} for name, m in rows]


@click.group()
@click.version_option(__version__, prog_name="qek")
def main():
    """Quantum evolution kernel graph classification on emulated Rydberg registers."""


# -- data -------------------------------------------------------------------------

@main.group()
def data():
    """Inspect, filter or generate graph datasets."""


@data.command("stats")
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--name", default=None, help="TU file prefix when the directory holds several.")
@_guard
def data_stats(dataset, name):
    _echo_json(corpus_stats(read_dataset(dataset, name)).to_dict())


@data.command("filter")
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--max-nodes", type=int, required=True)
@click.option("--name", default=None)
@click.option("--out", required=True, help="Graphs JSON file.")
@_guard
def data_filter(dataset, max_nodes, name, out):
    gs = filter_by_node_count(read_dataset(dataset, name), max_nodes)
    out = resolve_output(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_graphs(gs, out)
    _echo_json(corpus_stats(gs).to_dict())


@data.command("generate")
@click.option("--per-class", type=int, default=20)
@click.option("--min-nodes", type=int, default=6)
@click.option("--max-nodes", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, help="Graphs JSON file.")
@_guard
def data_generate(per_class, min_nodes, max_nodes, seed, out):
    """Synthetic two-class corpus (cluster vs chain) that embeds by construction."""
    from .datasets import make_topology_corpus

    gs = make_topology_corpus(per_class, min_nodes, max_nodes, seed)
    out = resolve_output(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_graphs(gs, out)
    _echo_json(corpus_stats(gs).to_dict())


# -- embed / pulse / emulate ----------------------------------------------------------

@main.command()
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--max-nodes", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--attempts", type=int, default=20)
@click.option("--name", default=None)
@click.option("--n-jobs", type=int, default=None)
@click.option("--out", required=True, help="Output directory.")
@_guard
def embed(dataset, max_nodes, seed, attempts, name, n_jobs, out):
    """Unit-disk embed every graph; writes registers.jsonl and labels.csv."""
    gs = read_dataset(dataset, name)
    if max_nodes is not None:
        gs = filter_by_node_count(gs, max_nodes)
    ed = embed_dataset(gs, seed=seed, attempts=attempts, n_jobs=n_jobs)
    out = _out_dir(out)
    write_registers(out / "registers.jsonl", ed.registers)
    write_labels_csv(out / "labels.csv", [g.id for g in ed.graphs], [g.label for g in ed.graphs])
    report = {"embedded": [g.id for g in ed.graphs], "rejected": ed.rejected,
              "attempts": {str(k): v for k, v in ed.attempts.items()}}
    (out / "embedding_report.json").write_text(json.dumps(report, indent=1))
    click.echo(f"embedded {len(ed.embedded)}, rejected {len(ed.rejected)}")


@main.group()
def pulse():
    """Build or validate pulse tasks."""


@pulse.command("build")
@click.option("--lambda", "lam", required=True, help="tau0,t0,tau1,t1,tau2 in ns.")
@click.option("--omega", type=float, default=15.8, help="Drive amplitude in rad/us.")
@click.option("--register", "register_path", type=click.Path(exists=True), default=None,
              help="registers.jsonl; the first register (or --graph-id) is used.")
@click.option("--graph-id", type=int, default=None)
@click.option("--shots", type=int, default=1000)
@click.option("--out", default=None, help="Task JSON file (stdout when omitted).")
@_guard
def pulse_build(lam, omega, register_path, graph_id, shots, out):
    params = _lambda(lam)
    limits = HardwareLimits(omega_max=max(omega, 15.8))
    sched = build_schedule(params, omega, limits)
    if register_path is None:
        problems = validate_task(sched, None, limits)
        if problems:
            raise ValidationError(problems)
        text = json.dumps({"lambda_ns": list(params.as_array()), "omega": omega,
                           "mixing_angles_rad": sched.mixing_angles()}, indent=1)
    else:
        regs = read_registers(register_path)
        reg = regs[0] if graph_id is None else next(r for r in regs if r.graph_id == graph_id)
        text = emit_task_document(sched, reg, shots, limits)
    if out:
        p = resolve_output(out)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    else:
        click.echo(text)


@pulse.command("validate")
@click.argument("task", type=click.Path(exists=True))
@_guard
def pulse_validate(task):
    """Check a task document against the hardware limits; exit 2 on violations."""
    sched, reg, _ = parse_task_document(Path(task).read_text())
    problems = validate_task(sched, reg)
    for p in problems:
        click.echo(p)
    if problems:
        sys.exit(EXIT_VALIDATION)
    click.echo("ok")


@main.command()
@click.argument("embeddings", type=click.Path(exists=True, file_okay=False))
@click.option("--lambda", "lam", default="85,21,50,25,20")
@click.option("--omega", type=float, default=15.8)
@click.option("--shots", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--c6", type=float, default=5.42e6, help="C6/hbar in rad um^6/us.")
@click.option("--p-init-fail", type=float, default=0.0)
@click.option("--eps-g-to-r", type=float, default=0.0)
@click.option("--eps-r-to-g", type=float, default=0.0)
@click.option("--out", required=True)
@_guard
def emulate(embeddings, lam, omega, shots, seed, c6, p_init_fail, eps_g_to_r, eps_r_to_g, out):
    """Evolve every register and sample shots; writes measurements.jsonl."""
    src = Path(embeddings)
    regs = read_registers(src / "registers.jsonl")
    sched = build_schedule(_lambda(lam), omega, HardwareLimits(omega_max=max(omega, 15.8)))
    ms = emulate_registers(regs, sched, shots, seed, PhysicsConfig(c6_over_hbar=c6),
                           NoiseModel(p_init_fail, eps_g_to_r, eps_r_to_g))
    out = _out_dir(out)
    write_jsonl(out / "measurements.jsonl", [m.to_record() for m in ms])
    write_registers(out / "registers.jsonl", regs)
    if (src / "labels.csv").exists() and src.resolve() != out.resolve():
        (out / "labels.csv").write_text((src / "labels.csv").read_text())
    click.echo(f"emulated {len(ms)} registers, {shots} shots each")


# -- kernels and learning ---------------------------------------------------------------

@main.command()
@click.option("--measurements", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory with measurements.jsonl and registers.jsonl.")
@click.option("--classical", type=click.Choice(["spk"]), default=None)
@click.option("--dataset", type=click.Path(exists=True), default=None)
@click.option("--mu", type=float, default=1.0)
@click.option("--c6", type=float, default=5.42e6)
@click.option("--out", default="K.csv")
@_guard
def kernel(measurements, classical, dataset, mu, c6, out):
    """Gram matrix from measurements (QEK) or from graphs (--classical spk)."""
    from .emulator import MeasurementSet
    from .features import qek_matrix

    out = resolve_output(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if classical:
        if dataset is None:
            raise ValueError("--classical needs --dataset")
        graphs = read_dataset(dataset).graphs
        ids = [g.id for g in graphs]
        K = spk_matrix(graphs)
    elif measurements:
        src = Path(measurements)
        ms = [MeasurementSet.from_record(r) for r in read_jsonl(src / "measurements.jsonl")]
        regs = read_registers(src / "registers.jsonl")
        ids = [m.graph_id for m in ms]
        dists = distributions_from_energies(energy_samples(ms, regs, c6), ids)
        write_jsonl(out.with_name(out.stem + "_distributions.jsonl"), [d.to_record() for d in dists])
        K = qek_matrix(dists, mu)
    else:
        raise ValueError("give --measurements or --classical")
    write_kernel_csv(out, K, ids)
    click.echo(f"wrote {K.shape[0]}x{K.shape[1]} kernel to {out}")


def _aligned_labels(labels_path, ids):
    lab = read_labels_csv(labels_path)
    missing = [i for i in ids if i not in lab]
    if missing:
        raise ValueError(f"no label for graph ids {missing}")
    return np.array([lab[i] for i in ids])


@main.command()
@click.option("--kernel", "kernel_path", type=click.Path(exists=True), required=True)
@click.option("--labels", type=click.Path(exists=True), required=True)
@click.option("--k", "k_folds", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--grid-c", type=int, default=100)
@click.option("--grid-w", type=int, default=30)
@click.option("--n-jobs", type=int, default=None)
@click.option("--out", default=None, help="Directory for results.json and metrics.csv.")
@_guard
def train(kernel_path, labels, k_folds, seed, grid_c, grid_w, n_jobs, out):
    """k-fold grid search of a precomputed-kernel SVM."""
    K, ids = read_kernel_csv(kernel_path)
    y = _aligned_labels(labels, ids)
    res = kfold_grid_search(K, y, default_grid(grid_c, grid_w), k=k_folds, seed=seed, n_jobs=n_jobs)
    if out:
        d = _out_dir(out)
        (d / "results.json").write_text(json.dumps(res.to_dict(), indent=1))
        write_metrics_csv(d / "metrics.csv", [("kernel", res.mean), ("majority", majority_baseline(y))])
    _echo_json(res.to_dict())


@main.command()
@click.option("--dataset", type=click.Path(exists=True), required=True)
@click.option("--iters", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.option("--shots", type=int, default=1000)
@click.option("--max-nodes", type=int, default=12)
@click.option("--out", default="bo")
@_guard
def bo(dataset, iters, seed, shots, max_nodes, out):
    """Bayesian optimization of the pulse durations for mean CV F1."""
    from .bayesopt import BoConfig, optimize

    cfg = PipelineConfig(dataset=str(dataset), seed=seed, n_shots=shots, max_nodes=max_nodes)
    gs = filter_by_node_count(read_dataset(dataset), max_nodes)
    ed = embed_dataset(gs, cfg.constraints(), seed, cfg.embed_attempts)
    labels = np.array([g.label for g in ed.graphs])
    folds = stratified_folds(labels, cfg.k_folds, seed)
    best, best_v, trace = optimize(cv_f1_objective(ed.registers, labels, cfg, folds),
                                   BoConfig(max_iterations=iters, seed=seed))
    d = _out_dir(out)
    write_bo_trace(d / "bo_trace.csv", trace)
    _echo_json({"lambda_ns": [float(v) for v in best], "f1_mean": best_v,
                "errors": {str(k): v for k, v in trace.errors.items()}})


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML or JSON config (or a previous manifest.json).")
@click.option("--dataset", type=click.Path(exists=True), default=None)
@click.option("--out", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--lambda", "lam", default=None, help='Five durations in ns, or "optimize".')
@_guard
def run(config_path, dataset, out, seed, lam):
    """End-to-end pipeline; writes every stage artifact and manifest.json."""
    if config_path:
        cfg = load_config(config_path)
    elif dataset:
        cfg = PipelineConfig(dataset=str(dataset))
    else:
        raise ValueError("give --config or --dataset")
    if dataset:
        cfg.dataset = str(dataset)
    if out:
        cfg.out_dir = out
    if seed is not None:
        cfg.seed = seed
    if lam:
        cfg.lambda_ns = lam
        cfg.__post_init__()
    if not Path(cfg.dataset).exists():
        raise FileNotFoundError(f"dataset {cfg.dataset} does not exist")
    man = run_pipeline(cfg)
    _echo_json({"out_dir": man.out_dir, "summary": man.summary, "timings": man.timings})


@main.command("analyze-shots")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--counts", default="10,100,1000")
@click.option("--seed", type=int, default=None, help="Defaults to the run's seed.")
@click.option("--out", default=None, help="CSV table path.")
@_guard
def analyze_shots(run_dir, counts, seed, out):
    """Metrics against shots per graph, using the run's folds and grid."""
    man, ms, regs, labels = load_run(run_dir)
    cfg = PipelineConfig.from_dict(man.config)
    seed = cfg.seed if seed is None else seed
    folds = stratified_folds(np.asarray(labels), cfg.k_folds, cfg.seed)
    rows = shot_subsample_analysis(ms, regs, labels, [int(c) for c in counts.split(",")], seed,
                                   mu=cfg.mu, grid=cfg.grid(), folds=folds,
                                   c6_over_hbar=cfg.c6_over_hbar)
    path = resolve_output(out) if out else Path(run_dir) / "shots.csv"
    write_metrics_csv(path, rows)
    _echo_json(_metrics_rows_json(rows))


@main.command()
@click.argument("kernels", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--labels", type=click.Path(exists=True), required=True)
@click.option("--k", "k_folds", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--grid-c", type=int, default=100)
@click.option("--grid-w", type=int, default=30)
@click.option("--out", default=None, help="CSV report path.")
@_guard
def compare(kernels, labels, k_folds, seed, grid_c, grid_w, out):
    """Compare kernel CSVs (or run directories) over identical folds."""
    loaded = {}
    for path in kernels:
        p = Path(path)
        kp = p / "kernel.csv" if p.is_dir() else p
        loaded[str(path)] = read_kernel_csv(kp)
    ids = next(iter(loaded.values()))[1]
    y = _aligned_labels(labels, ids)
    rows = compare_kernels(loaded, y, ids=ids, k_folds=k_folds, seed=seed,
                           grid=default_grid(grid_c, grid_w))
    if out:
        p = resolve_output(out)
        p.parent.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(p, rows)
    _echo_json(_metrics_rows_json(rows))


if __name__ == "__main__":
    main()
