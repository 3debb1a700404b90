"""Command-line entry points.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
abort mid-learning.
"""

import csv
import functools
import json
import os
import sys

import click

from .corpus import (
    OracleRuleSet,
    generate_oracle,
    generate_synthetic,
    load_dataset,
    load_synthetic_config,
    save_dataset,
)
from .dpl import DPLConfig, dpl_learn
from .errors import ConfigError, DataError, WeaksupError
from .eval import evaluate
from .evidence import EvidenceSet
from .factor_graph import build_graph, graph_to_json, run_bp
from .predictor import build_module, load_module, save_module
from .s4 import S4Config, ScriptedOracle, s4_run


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(1)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(2)
        except WeaksupError as exc:
            click.echo(f"aborted: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
def main():
    """Weak-supervision training with rule growth and human review."""


@main.command("gen-synthetic")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@cli_errors
def gen_synthetic(config_path, seed, out):
    """Generate a planted-model dataset as JSONL."""
    dataset = generate_synthetic(load_synthetic_config(config_path), seed=seed)
    save_dataset(dataset, out)
    click.echo(f"wrote {len(dataset.instances)} instances to {out}")


@main.command("gen-oracle")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--k", default=100, show_default=True)
@click.option("--stop", "stop_count", default=25, show_default=True)
@click.option("--out", required=True, type=click.Path())
@cli_errors
def gen_oracle(data, k, stop_count, out):
    """Fit the rule-set oracle on a gold-labeled dataset."""
    dataset = load_dataset(data)
    oracle = generate_oracle(dataset, k=k, stop_count=stop_count)
    oracle.save(out)
    sizes = {lab: len(oracle.tokens_for(lab)) for lab in dataset.label_set}
    click.echo(f"wrote oracle lists {sizes} to {out}")


def _write_run_outputs(out, result_evidence, module, metrics):
    os.makedirs(out, exist_ok=True)
    result_evidence.save(os.path.join(out, "evidence.json"))
    save_module(module, os.path.join(out, "predictor"))
    with open(os.path.join(out, "metrics.jsonl"), "w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(json.dumps(m, sort_keys=True) + "\n")


@main.command("dpl-train")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--seed-evidence", "seed_evidence", required=True, type=click.Path(exists=True))
@click.option("--predictor", default="bow_logistic", type=click.Choice(["bow_logistic", "attn_embed"]))
@click.option("--em", "em_iterations", default=3, show_default=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--lr", "learning_rate", default=None, type=float, help="fixed rate; omit to tune on the grid")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@cli_errors
def dpl_train(data, seed_evidence, predictor, em_iterations, epochs, learning_rate, seed, out):
    """Train a predictor from rule evidence alone."""
    dataset = load_dataset(data)
    evidence = EvidenceSet.load(seed_evidence)
    module = build_module(predictor, dataset.n_labels, len(dataset.vocabulary), seed=seed)
    config = DPLConfig(
        em_iterations=em_iterations,
        epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
        checkpoint_dir=os.path.join(out, "abort-checkpoint"),
    )
    result = dpl_learn(evidence, module, dataset, config)
    _write_run_outputs(out, result.evidence, result.module, result.metrics)
    last = result.metrics[-1] if result.metrics else {}
    click.echo(
        f"trained {em_iterations} EM iterations (lr={result.learning_rate}); "
        f"test accuracy: {last.get('test_accuracy')}"
    )


@main.command("s4-run")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--seed-evidence", "seed_evidence", required=True, type=click.Path(exists=True))
@click.option("--budget", default=0, show_default=True)
@click.option("--outer", default=5, show_default=True)
@click.option(
    "--modes",
    default=["attention"],
    multiple=True,
    type=click.Choice(["attention", "entropy", "joint"]),
)
@click.option("--oracle", "oracle_kind", default="scripted", type=click.Choice(["scripted", "interactive"]))
@click.option("--oracle-file", default=None, type=click.Path(exists=True))
@click.option("--predictor", default="bow_logistic", type=click.Choice(["bow_logistic", "attn_embed"]))
@click.option("--pool-fraction", default=0.025, show_default=True)
@click.option("--stop-count", default=25, show_default=True)
@click.option("--em", "em_iterations", default=3, show_default=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--lr", "learning_rate", default=None, type=float)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@cli_errors
def s4_run_cmd(
    data,
    seed_evidence,
    budget,
    outer,
    modes,
    oracle_kind,
    oracle_file,
    predictor,
    pool_fraction,
    stop_count,
    em_iterations,
    epochs,
    learning_rate,
    seed,
    out,
):
    """Grow the rule set with self-training and reviewer queries."""
    dataset = load_dataset(data)
    evidence = EvidenceSet.load(seed_evidence)
    if budget > 0 and oracle_kind == "scripted" and not oracle_file:
        raise ConfigError("--budget > 0 with a scripted oracle needs --oracle-file")
    oracle = None
    if budget > 0:
        if oracle_kind == "scripted":
            oracle = ScriptedOracle(OracleRuleSet.load(oracle_file), dataset.label_set)
        else:
            oracle = _stdin_oracle(dataset)
    config = S4Config(
        outer_iterations=outer,
        budget=budget,
        modes=tuple(modes),
        predictor=predictor,
        pool_fraction=pool_fraction,
        stop_count=stop_count,
        dpl=DPLConfig(
            em_iterations=em_iterations, epochs=epochs, learning_rate=learning_rate, seed=seed
        ),
        seed=seed,
    )
    result = s4_run(evidence, dataset, config, oracle=oracle)
    os.makedirs(out, exist_ok=True)
    result.evidence.save(os.path.join(out, "evidence.json"))
    save_module(result.module, os.path.join(out, "predictor"))
    with open(os.path.join(out, "events.jsonl"), "w", encoding="utf-8") as fh:
        for e in result.events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
    dpl_rows = [e for e in result.events if e["type"] == "dpl"]
    with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["outer", "sst_iter", "test_accuracy", "q_entropy", "n_templates", "answered"],
            extrasaction="ignore",
        )
        writer.writeheader()
        for row in dpl_rows:
            writer.writerow(row)
    final = dpl_rows[-1] if dpl_rows else {}
    click.echo(
        f"finished with {len(result.evidence)} rules, "
        f"{result.session.answered_count()}/{budget} answers used; "
        f"test accuracy: {final.get('test_accuracy')}"
    )


def _stdin_oracle(dataset):
    labels = "/".join(dataset.label_set)

    def oracle(query):
        click.echo(f"\nreview query {query.query_id}: feature '{query.token}'")
        click.echo(f"  entropy {query.entropy:.4f}; average posterior {query.avg_posterior}")
        for sup in query.supporting[:5]:
            click.echo(f"  - {sup['text'][:100]}  q={sup['posterior']}")
        answer = click.prompt(f"accept as one of [{labels}], or 'reject'", type=str)
        if answer.strip().lower() == "reject":
            return ("reject", None)
        return ("accept", answer.strip())

    return oracle


@main.command("evaluate")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--module", "module_path", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path())
@click.option("--csv", "csv_path", default=None, type=click.Path())
@cli_errors
def evaluate_cmd(data, module_path, out, csv_path):
    """Score a trained predictor on the gold test split."""
    dataset = load_dataset(data)
    module = load_module(module_path)
    metrics = evaluate(module, dataset)
    click.echo(json.dumps(metrics.to_json(), indent=2, sort_keys=True))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_json(), fh, indent=2, sort_keys=True)
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "accuracy"])
            writer.writerow(["overall", metrics.accuracy])
            for label, acc in metrics.per_class_accuracy.items():
                writer.writerow([label, acc])


@main.command("inspect")
@click.option("--data", default=None, type=click.Path(exists=True))
@click.option("--evidence", "evidence_path", default=None, type=click.Path(exists=True))
@click.option("--session", "session_dir", default=None, type=click.Path(exists=True))
@click.option("--what", default="graph", type=click.Choice(["graph", "proposals"]))
@click.option("--out", default=None, type=click.Path())
@cli_errors
def inspect(data, evidence_path, session_dir, what, out):
    """Dump a grounded factor graph or a session's proposal history."""
    if what == "graph":
        if not (data and evidence_path):
            raise ConfigError("inspect --what graph needs --data and --evidence")
        dataset = load_dataset(data)
        evidence = EvidenceSet.load(evidence_path)
        graph = build_graph(evidence, dataset)
        beliefs = run_bp(graph)
        dump = graph_to_json(graph, beliefs)
    else:
        if not session_dir:
            raise ConfigError("inspect --what proposals needs --session")
        events_path = os.path.join(session_dir, "events.jsonl")
        if not os.path.exists(events_path):
            raise DataError(f"no events.jsonl under {session_dir}")
        dump = []
        with open(events_path, encoding="utf-8") as fh:
            for line in fh:
                event = json.loads(line)
                if event["type"] in ("sst_add", "joint_add", "fal_query", "fal_answer"):
                    dump.append(event)
    text = json.dumps(dump, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text)


@main.command("serve")
@click.option("--store", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
@click.option("--static", "static_dir", default=None, type=click.Path())
@cli_errors
def serve(store, host, port, static_dir):
    """Run the review service."""
    import uvicorn

    from .service import create_app

    app = create_app(store, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
