"""Command-line interface for the lifelong-learning workflow.

Exit codes: 0 success, 2 format error, 3 parameter error, 4 store corruption.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ExpertGateError, FormatError, ParameterError, StoreCorruptError
from .gating import (
    DEFAULT_ACTIVATION_THRESHOLD,
    DEFAULT_REL_THRESHOLD,
    DEFAULT_TEMPERATURE,
)
from .pipeline import (
    LearnConfig,
    ModelRegistry,
    infer as run_infer,
    learn_task,
    load_model_store,
    run_baselines,
    select_most_related,
    stored_sample_sweep,
    train_gate,
    train_val_split,
)
from . import report as report_mod
from . import storage, synth

EXIT_FORMAT = 2
EXIT_PARAMETER = 3
EXIT_STORE = 4


@click.group()
def cli():
    """Lifelong learning with autoencoder-gated expert models."""


def _open_registry(store: str, temperature: float) -> ModelRegistry:
    store_path = Path(store)
    if (store_path / storage.MANIFEST_NAME).exists():
        return load_model_store(store_path, temperature)
    return ModelRegistry(store_path, temperature)


@cli.command()
@click.argument("dataset", type=click.Path())
@click.option("--name", required=True, help="task name")
@click.option("--store", required=True, type=click.Path(), help="model store directory")
@click.option("--code-size", default=None, type=int, show_default="min(100, d/2)")
@click.option("--rel-th", default=DEFAULT_REL_THRESHOLD, show_default=True)
@click.option("--temp", default=DEFAULT_TEMPERATURE, show_default=True)
@click.option("--lr", default=0.01, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
def learn(dataset, name, store, code_size, rel_th, temp, lr, epochs, seed):
    """Learn one new task from DATASET and add it to the store."""
    data = storage.load_dataset(dataset, task_name=name)
    registry = _open_registry(store, temp)
    config = LearnConfig(code_size=code_size, rel_threshold=rel_th, temperature=temp,
                         learning_rate=lr, epochs=epochs, seed=seed)
    outcome = learn_task(registry, data, config)
    rel = outcome.relatedness
    click.echo(f"learned task {name!r} (gate val error {outcome.gate_val_error:.6f})")
    click.echo(f"chosen prior: {rel.chosen_prior}  method: {rel.method.value}")
    for e in rel.entries:
        click.echo(f"  rel({name}, {e.prior_task}) = {e.rel:.4f}")


@cli.command("infer")
@click.argument("dataset", type=click.Path())
@click.option("--store", required=True, type=click.Path())
@click.option("--activation-th", default=DEFAULT_ACTIVATION_THRESHOLD, show_default=True)
@click.option("--multi", is_flag=True, help="report every activated expert's prediction")
@click.option("--out", default=None, type=click.Path(), help="routing report CSV")
def infer_cmd(dataset, store, activation_th, multi, out):
    """Route every sample in DATASET to its expert and predict."""
    data = storage.load_dataset(dataset)
    registry = load_model_store(store)
    results = [run_infer(registry, data.features[i:i + 1], activation_th, multi)
               for i in range(data.n)]
    for i, res in enumerate(results):
        line = f"{i}\t{res.task_name}\t{res.prediction}"
        if multi and len(res.activated_predictions) > 1:
            extra = " ".join(f"{t}:{c}" for t, c in res.activated_predictions)
            line += f"\t[{extra}]"
        click.echo(line)
    if out:
        report_mod.write_routing_csv(results, registry.task_names, out)
        fig = Path(out).with_suffix(".png")
        report_mod.render_routing_figure(results, registry.task_names, fig)
        click.echo(f"wrote {out} and {fig}")


@cli.command()
@click.argument("dataset", type=click.Path())
@click.option("--store", required=True, type=click.Path())
@click.option("--rel-th", default=DEFAULT_REL_THRESHOLD, show_default=True)
@click.option("--seed", default=0, show_default=True)
def relatedness(dataset, store, rel_th, seed):
    """Print the relatedness of DATASET's task to every stored task (TSV)."""
    data = storage.load_dataset(dataset)
    registry = load_model_store(store)
    config = LearnConfig(rel_threshold=rel_th, seed=seed)
    gate_cfg = config.gate_cfg(len(registry))
    gate, _ = train_gate(data.features, registry.stats,
                         config.effective_code_size(data.dim), gate_cfg,
                         data.task_name)
    _, val_idx = train_val_split(data.n, gate_cfg.seed)
    rep = select_most_related(registry.ensemble(), gate,
                              data.features[val_idx], rel_th)
    click.echo("prior_task\tEr_k\tEr_a\trel")
    for e in rep.entries:
        click.echo(f"{e.prior_task}\t{e.er_new:.8f}\t{e.er_prior:.8f}\t{e.rel:.6f}")
    click.echo(f"chosen\t{rep.chosen_prior}\tmethod\t{rep.method.value}")


@cli.command()
@click.option("--tasks", required=True,
              help="comma-separated synthetic task spec JSON files")
@click.option("--store", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="report CSV path")
@click.option("--epochs", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--sweep-sizes", default="10,100",
              show_default=True, help="stored-samples-per-task sweep points")
def bench(tasks, store, out, epochs, seed, sweep_sizes):
    """Run all baselines plus the discriminative-gate sweep; write CSV + figures."""
    specs = [synth.spec_from_json(p) for p in tasks.split(",")]
    datasets = [synth.generate_synthetic_task(s) for s in specs]
    config = LearnConfig(epochs=epochs, seed=seed)
    rep = run_baselines(datasets, store, config)
    registry = load_model_store(Path(store) / "expertgate")
    sizes = [int(s) for s in sweep_sizes.split(",") if s]
    rep.sweep = stored_sample_sweep(datasets, registry.stats, sizes)
    report_mod.write_bench_csv(rep, out)
    figures = report_mod.render_bench_figures(rep, Path(out))
    click.echo(report_mod.format_report_table(rep))
    click.echo(f"wrote {out} and {', '.join(str(p) for p in figures)}")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="synthetic task spec JSON")
@click.option("--out", required=True, type=click.Path(), help="output dataset (.egd1 or .csv)")
def gen(spec_path, out):
    """Generate a synthetic dataset from a task spec."""
    spec = synth.spec_from_json(spec_path)
    data = synth.generate_synthetic_task(spec)
    if str(out).endswith(".csv"):
        storage.save_dataset_csv(data, out)
    else:
        storage.save_dataset_egd1(data, out)
    click.echo(f"wrote {out}: {data.n} samples, {data.dim} dims, {data.class_count} classes")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except FormatError as exc:
        click.echo(f"format error: {exc}", err=True)
        return EXIT_FORMAT
    except StoreCorruptError as exc:
        click.echo(f"store corruption: {exc}", err=True)
        return EXIT_STORE
    except ParameterError as exc:
        click.echo(f"parameter error: {exc}", err=True)
        return EXIT_PARAMETER
    except ExpertGateError as exc:  # any remaining domain error
        click.echo(f"error: {exc}", err=True)
        return EXIT_PARAMETER


if __name__ == "__main__":
    sys.exit(main())
