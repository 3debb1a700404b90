"""Variational-EM training: alternate posterior inference over latent
labels with refitting of the predictor and of the non-fixed rule weights.

Each iteration: (1) E-step BP over evidence plus predictor potentials,
posterior taken as the product of variable marginals; (2) weight updates
driven by the gap between supervision-only expectations and posterior
expectations, summed over a template's groundings; (3) predictor
training on the posteriors as soft targets, with fresh optimizer state
every iteration.
"""

import copy
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .eval import evaluate
from .factor_graph import (
    BPConfig,
    build_graph,
    product_expectations,
    run_bp,
)
from .predictor import Adam, SoftLabelSet, TrainConfig, save_module

log = logging.getLogger(__name__)

WEIGHT_ABORT = 50.0


@dataclass
class DPLConfig:
    em_iterations: int = 3
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float | None = None  # None -> select from the grid
    learning_rate_grid: tuple = (0.1, 0.01, 0.001)
    bp: BPConfig = field(default_factory=BPConfig)
    weight_lr: float = 0.1
    weight_steps: int = 25
    hard_em_imbalance: bool = True
    label_threshold: float = 0.5
    warm_start: bool = True
    seed: int = 0
    checkpoint_dir: str | None = None

    def validate(self):
        if self.em_iterations < 1:
            raise ConfigError("em_iterations must be >= 1")
        if not (0.0 < self.label_threshold < 1.0):
            raise ConfigError("label_threshold must lie in (0, 1)")
        self.bp.validate()
        return self


@dataclass
class DPLResult:
    module: object
    evidence: object
    beliefs: object
    metrics: list
    learning_rate: float


def e_step(evidence, module, dataset, bp_config=None):
    """Posterior marginals under evidence plus current predictor potentials."""
    train = dataset.train
    pred = module.predict_proba_batch(train) if train else None
    graph = build_graph(evidence, dataset, predictor_potentials=pred)
    return run_bp(graph, bp_config)


def soft_labels_from_beliefs(beliefs, dataset, hard_em_imbalance=True, threshold=0.5):
    """Posteriors as training targets, with binary minority up-weighting.

    For binary tasks the second label plays the positive role: instances
    are thresholded at `threshold` and positives get loss weight
    (#negatives / #positives), which equalizes the two sides' total
    weight. Multi-class tasks keep uniform weights.
    """
    q = beliefs.marginals
    weights = np.ones(len(beliefs.instance_ids))
    if hard_em_imbalance and dataset.n_labels == 2:
        hard_pos = q[:, 1] > threshold
        n_pos = int(hard_pos.sum())
        n_neg = len(hard_pos) - n_pos
        if n_pos == 0 or n_neg == 0:
            log.warning("hard-EM reweighting skipped: one side is empty (%d pos / %d neg)", n_pos, n_neg)
        else:
            weights = np.where(hard_pos, n_neg / n_pos, 1.0)
    return SoftLabelSet(list(beliefs.instance_ids), q.copy(), weights)


def m_step_predictor(module, beliefs, dataset, config, optimizer=None):
    """Train the predictor on the E-step posteriors; returns epoch losses."""
    labels = soft_labels_from_beliefs(
        beliefs, dataset, config.hard_em_imbalance, config.label_threshold
    )
    train_cfg = TrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate if config.learning_rate is not None else 0.1,
        seed=config.seed,
    )
    return module.fit(dataset.train, labels, train_cfg, optimizer)


def _weight_descent(evidence, graph, beliefs, config):
    """Gradient descent on non-fixed template weights.

    Per template: grad = sum over groundings of (supervision-only E[f] -
    posterior E[f]) plus the gaussian prior pull. Supervision-only
    expectations are recomputed by BP at every step since they depend on
    the moving weights.
    """
    e_q = product_expectations(graph, beliefs)
    free = [t for t in evidence if not t.fixed and t.key in e_q]
    if not free:
        return
    for _ in range(config.weight_steps):
        e_phi = run_bp(graph, config.bp, include_predictor=False).template_expectations
        for t in free:
            stat_phi = e_phi[t.key]
            stat_q = e_q[t.key]
            grad = (stat_phi.mean - stat_q.mean) * stat_phi.count
            grad += t.prior_lambda * (t.weight - t.prior_mean)
            t.weight -= config.weight_lr * grad
            if abs(t.weight) > WEIGHT_ABORT:
                raise TrainingDiverged(
                    f"weight for {t.describe()} diverged to {t.weight:.2f}"
                )


def m_step_weights(evidence, beliefs, dataset, config):
    """Public weight-update step; grounds the evidence itself."""
    graph = build_graph(evidence, dataset)
    _weight_descent(evidence, graph, beliefs, config)
    return evidence


def _metric_record(iteration, evidence, beliefs, losses, test_acc):
    return {
        "iteration": iteration,
        "q_entropy": beliefs.mean_entropy(),
        "train_loss": losses[-1] if losses else None,
        "test_accuracy": test_acc,
        "n_templates": sum(1 for _ in evidence),
        "weights": {str(t.key): float(t.weight) for t in evidence},
        "bp": {
            "iterations": beliefs.iterations,
            "converged": beliefs.converged,
            "max_residual": beliefs.max_residual,
        },
    }


def _checkpoint(directory, evidence, module, beliefs, metrics):
    os.makedirs(directory, exist_ok=True)
    evidence.save(os.path.join(directory, "evidence.json"))
    save_module(module, os.path.join(directory, "predictor"))
    with open(os.path.join(directory, "metrics.jsonl"), "w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(json.dumps(m, sort_keys=True) + "\n")
    if beliefs is not None:
        with open(os.path.join(directory, "beliefs.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {iid: [float(x) for x in beliefs.marginal(iid)] for iid in beliefs.instance_ids},
                fh,
                sort_keys=True,
            )


def _em_run(evidence, module, dataset, config, lr):
    """One full EM run at a fixed learning rate; mutates evidence and module."""
    has_test_gold = bool(dataset.test) and all(i.gold_label is not None for i in dataset.test)
    init_weights = {t.key: t.weight for t in evidence}
    metrics = []
    beliefs = None
    try:
        for t in range(1, config.em_iterations + 1):
            if not config.warm_start and t > 1:
                module.reinitialize(config.seed + t)
                for tpl in evidence:
                    if not tpl.fixed:
                        tpl.weight = init_weights[tpl.key]
            train = dataset.train
            pred = module.predict_proba_batch(train)
            graph = build_graph(evidence, dataset, predictor_potentials=pred)
            beliefs = run_bp(graph, config.bp)
            _weight_descent(evidence, graph, beliefs, config)
            optimizer = Adam(lr=lr)  # fresh history every EM iteration
            losses = m_step_predictor(
                module, beliefs, dataset, replace(config, learning_rate=lr), optimizer
            )
            test_acc = evaluate(module, dataset).accuracy if has_test_gold else None
            metrics.append(_metric_record(t, evidence, beliefs, losses, test_acc))
    except Exception:
        if config.checkpoint_dir:
            _checkpoint(config.checkpoint_dir, evidence, module, beliefs, metrics)
        raise
    return beliefs, metrics


def dpl_learn(evidence, module, dataset, config=None):
    """Run the EM loop; returns the trained predictor, evidence, and trace.

    With learning_rate unset, each grid candidate is tried on copies and
    the run with the lowest final training cross-entropy against its own
    posteriors wins; no gold labels are consulted. The winning state is
    copied back into the caller's module and evidence objects.
    """
    config = (config or DPLConfig()).validate()
    if not evidence.templates:
        log.warning("empty evidence set: training reduces to fitting the predictor's own prior")

    if config.learning_rate is not None:
        beliefs, metrics = _em_run(evidence, module, dataset, config, config.learning_rate)
        return DPLResult(module, evidence, beliefs, metrics, config.learning_rate)

    best = None
    for lr in config.learning_rate_grid:
        ev_trial = evidence.clone()
        mod_trial = copy.deepcopy(module)
        beliefs, metrics = _em_run(ev_trial, mod_trial, dataset, config, lr)
        final_q = SoftLabelSet(list(beliefs.instance_ids), beliefs.marginals.copy())
        objective = mod_trial.loss(dataset.train, final_q)
        log.info("learning-rate grid: lr=%s -> final CE %.6f", lr, objective)
        if best is None or objective < best[0]:
            best = (objective, lr, ev_trial, mod_trial, beliefs, metrics)
    _, lr, ev_best, mod_best, beliefs, metrics = best
    for tpl in evidence:
        winner = ev_best.get(tpl.key)
        if winner is not None:
            tpl.weight = winner.weight
    for name in module.param_names:
        module.params[name][...] = mod_best.params[name]
    for name in module.frozen:
        module.frozen[name][...] = mod_best.frozen[name]
    return DPLResult(module, evidence, beliefs, metrics, lr)
