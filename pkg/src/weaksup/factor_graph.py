"""Grounded factor graphs and inference over latent label variables.

Sum-product loopy BP runs on a synchronous flooding schedule with
damping, in log space (hard-weight potentials reach e^10 scale). Unary
factors contribute a static per-variable field, so messages are only
iterated for pairwise-equality and at-least-one factors; the latter get
O(n) messages via prefix/suffix products over the scope. A brute-force
enumeration oracle covers small graphs for testing.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DataError, GraphSizeError
from .evidence import ground_evidence
from .validation import check_probability_matrix

ENUMERATION_LIMIT = 2**20


@dataclass
class BPConfig:
    max_iters: int = 50
    tol: float = 1e-6
    damping: float = 0.5
    at_least_one_mode: str = "exact"  # or "noisy_or_marginals"

    def validate(self):
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not (0.0 <= self.damping < 1.0):
            raise ConfigError("damping must lie in [0, 1)")
        if self.at_least_one_mode not in ("exact", "noisy_or_marginals"):
            raise ConfigError("at_least_one_mode must be 'exact' or 'noisy_or_marginals'")
        return self


@dataclass
class TemplateStat:
    mean: float
    count: int


@dataclass
class BeliefState:
    """Per-variable marginals plus per-template expected formula values."""

    instance_ids: list
    marginals: np.ndarray  # (N, L), rows sum to 1
    template_expectations: dict  # template key -> TemplateStat
    iterations: int
    max_residual: float
    converged: bool
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {iid: i for i, iid in enumerate(self.instance_ids)}

    def marginal(self, instance_id):
        return self.marginals[self.index[instance_id]]

    def argmax_labels(self):
        return np.argmax(self.marginals, axis=1)

    def mean_entropy(self):
        q = np.clip(self.marginals, 1e-300, 1.0)
        return float(-(q * np.log(q)).sum(axis=1).mean())


class FactorGraph:
    """Bipartite graph of label variables (one per train instance) and factors."""

    def __init__(self, variables, n_labels, factors, predictor_log_potentials=None, warnings=None):
        self.variables = list(variables)
        self.n_labels = int(n_labels)
        self.factors = list(factors)
        self.predictor_log_potentials = predictor_log_potentials
        self.warnings = warnings or []
        self.var_index = {v: i for i, v in enumerate(self.variables)}
        for f in self.factors:
            for v in f.scope:
                if v not in self.var_index:
                    raise DataError(f"factor references unknown variable {v!r}")

    @property
    def n_variables(self):
        return len(self.variables)

    def scope_indices(self, factor):
        return [self.var_index[v] for v in factor.scope]


def build_graph(evidence, dataset, predictor_potentials=None):
    """Ground an evidence set over the train split into a factor graph.

    predictor_potentials, when given, is an (N_train, L) matrix of strict
    label distributions in `dataset.train` order; it is attached as one
    fixed local factor per variable.
    """
    train = dataset.train
    factors, warnings = ground_evidence(evidence, dataset)
    log_pred = None
    if predictor_potentials is not None:
        pred = check_probability_matrix(predictor_potentials, "predictor potentials")
        if pred.shape != (len(train), dataset.n_labels):
            raise DataError(
                f"predictor potentials shape {pred.shape} does not match "
                f"({len(train)}, {dataset.n_labels})"
            )
        log_pred = np.log(pred)
    return FactorGraph(
        variables=[inst.id for inst in train],
        n_labels=dataset.n_labels,
        factors=factors,
        predictor_log_potentials=log_pred,
        warnings=warnings,
    )


def _log_normalize(logv, axis=-1):
    return logv - logsumexp(logv, axis=axis, keepdims=True)


def _structure(graph, include_predictor):
    """Split factors into the static unary field and iterated message factors."""
    N, L = graph.n_variables, graph.n_labels
    fld = np.zeros((N, L))
    if include_predictor and graph.predictor_log_potentials is not None:
        fld = fld + graph.predictor_log_potentials
    pairs, alos = [], []
    for f in graph.factors:
        idx = graph.scope_indices(f)
        if f.family == "unary":
            fld[idx[0], f.target] += f.weight
        elif f.family == "pair_eq":
            pairs.append((idx[0], idx[1], f))
        elif f.family == "at_least_one":
            if len(idx) == 0:
                raise DataError("at-least-one factor with empty scope")
            alos.append((np.array(idx, dtype=int), f))
        else:
            raise ConfigError(f"unknown factor family {f.family!r}")
    return fld, pairs, alos


def _pair_message(cavity, weight):
    """Outgoing log message of an equality factor given one normalized cavity."""
    return np.log1p(cavity * (math.exp(weight) - 1.0))


def at_least_one_messages(factor, incoming, mode="exact", graph_n_labels=None):
    """Messages from an at-least-one factor to each scoped variable.

    `incoming` is an (n, L) matrix of normalized distributions: cavity
    beliefs in exact mode, full current marginals in noisy_or_marginals
    mode. Returns an (n, L) matrix of normalized message probabilities;
    row i has one value at the target label and one shared value
    elsewhere.
    """
    if mode not in ("exact", "noisy_or_marginals"):
        raise ConfigError("mode must be 'exact' or 'noisy_or_marginals'")
    incoming = np.asarray(incoming, dtype=float)
    n = incoming.shape[0]
    if n == 0:
        raise DataError("at-least-one over an empty scope")
    W = factor.weight
    r = factor.target
    pnr = np.clip(1.0 - incoming[:, r], 0.0, 1.0)  # mass off the target, per variable
    # prod_others[i] = prod_{j != i} pnr[j], via prefix/suffix products
    prefix = np.concatenate([[1.0], np.cumprod(pnr)[:-1]])
    suffix = np.concatenate([np.cumprod(pnr[::-1])[:-1][::-1], [1.0]])
    prod_others = prefix * suffix
    # log mu(y=r) = W; log mu(y!=r) = W + log((1 - P0) + P0 * e^-W)
    logm = np.empty((n, incoming.shape[1]))
    with np.errstate(divide="ignore"):
        off = W + np.log((1.0 - prod_others) + prod_others * math.exp(-W))
    logm[:] = off[:, None]
    logm[:, r] = W
    logm = _log_normalize(logm, axis=1)
    return np.exp(logm)


def run_bp(graph, config=None, include_predictor=True):
    """Sum-product BP; returns marginals and per-template pseudo-marginals.

    Non-convergence is reported in the BeliefState diagnostics, never
    raised. On acyclic graphs with exact at-least-one messages the
    marginals coincide with enumeration.
    """
    config = (config or BPConfig()).validate()
    N, L = graph.n_variables, graph.n_labels
    fld, pairs, alos = _structure(graph, include_predictor)

    # message store: per pair factor two rows (to i, to j); per alo factor one block
    pair_msgs = np.zeros((len(pairs), 2, L))
    alo_msgs = [np.zeros((len(idx), L)) for idx, _ in alos]

    def beliefs():
        b = fld.copy()
        for p, (i, j, _) in enumerate(pairs):
            b[i] += pair_msgs[p, 0]
            b[j] += pair_msgs[p, 1]
        for a, (idx, _) in enumerate(alos):
            np.add.at(b, idx, alo_msgs[a])
        return _log_normalize(b, axis=1)

    iterations = 0
    residual = 0.0
    converged = len(pairs) == 0 and len(alos) == 0
    d = config.damping
    for it in range(config.max_iters):
        if converged and it == 0:
            break
        b = beliefs()
        new_pair = np.empty_like(pair_msgs)
        for p, (i, j, f) in enumerate(pairs):
            ci = np.exp(_log_normalize(b[i] - pair_msgs[p, 0]))
            cj = np.exp(_log_normalize(b[j] - pair_msgs[p, 1]))
            new_pair[p, 1] = _log_normalize(_pair_message(ci, f.weight))
            new_pair[p, 0] = _log_normalize(_pair_message(cj, f.weight))
        new_alo = []
        for a, (idx, f) in enumerate(alos):
            if config.at_least_one_mode == "exact":
                inc = np.exp(_log_normalize(b[idx] - alo_msgs[a], axis=1))
            else:
                inc = np.exp(b[idx])
            new_alo.append(np.log(at_least_one_messages(f, inc, mode="exact")))
        residual = 0.0
        if pairs:
            mixed = (1.0 - d) * new_pair + d * pair_msgs
            residual = max(residual, float(np.max(np.abs(mixed - pair_msgs))))
            pair_msgs = mixed
        for a in range(len(alos)):
            mixed = (1.0 - d) * new_alo[a] + d * alo_msgs[a]
            residual = max(residual, float(np.max(np.abs(mixed - alo_msgs[a]))))
            alo_msgs[a] = mixed
        iterations = it + 1
        if residual < config.tol:
            converged = True
            break

    logb = beliefs()
    marginals = np.exp(logb)
    marginals = marginals / marginals.sum(axis=1, keepdims=True)

    # per-factor pseudo-marginals, aggregated per template
    sums, counts = {}, {}
    pair_pos = {id(f): p for p, (_, _, f) in enumerate(pairs)}
    alo_pos = {id(f): a for a, (_, f) in enumerate(alos)}
    for f in graph.factors:
        idx = graph.scope_indices(f)
        if f.family == "unary":
            e = float(marginals[idx[0], f.target])
        elif f.family == "pair_eq":
            p = pair_pos[id(f)]
            i, j = idx
            ci = np.exp(_log_normalize(logb[i] - pair_msgs[p, 0]))
            cj = np.exp(_log_normalize(logb[j] - pair_msgs[p, 1]))
            s = float(ci @ cj)
            ew = math.exp(f.weight)
            e = ew * s / (ew * s + (1.0 - s))
        else:
            a = alo_pos[id(f)]
            if config.at_least_one_mode == "exact":
                inc = np.exp(_log_normalize(logb[idx] - alo_msgs[a], axis=1))
            else:
                inc = np.exp(logb[idx])
            p0 = float(np.prod(np.clip(1.0 - inc[:, f.target], 0.0, 1.0)))
            e = (1.0 - p0) / ((1.0 - p0) + p0 * math.exp(-f.weight))
        key = f.template.key
        sums[key] = sums.get(key, 0.0) + e
        counts[key] = counts.get(key, 0) + 1
    stats = {k: TemplateStat(mean=sums[k] / counts[k], count=counts[k]) for k in sums}

    return BeliefState(
        instance_ids=list(graph.variables),
        marginals=marginals,
        template_expectations=stats,
        iterations=iterations,
        max_residual=float(residual),
        converged=bool(converged),
    )


def enumerate_exact(graph, include_predictor=True):
    """Exact marginals and template expectations by summing all assignments."""
    N, L = graph.n_variables, graph.n_labels
    total = L**N
    if total > ENUMERATION_LIMIT:
        raise GraphSizeError(f"{total} joint assignments exceed the enumeration limit {ENUMERATION_LIMIT}")
    fld, pairs, alos = _structure(graph, include_predictor)

    idx = np.arange(total)
    assign = np.empty((total, N), dtype=np.int64)
    for v in range(N):
        assign[:, v] = (idx // (L ** (N - 1 - v))) % L

    logw = fld[np.arange(N)[None, :], assign].sum(axis=1)
    for i, j, f in pairs:
        logw = logw + f.weight * (assign[:, i] == assign[:, j])
    for sidx, f in alos:
        logw = logw + f.weight * np.any(assign[:, sidx] == f.target, axis=1)

    logz = logsumexp(logw)
    p = np.exp(logw - logz)

    marginals = np.zeros((N, L))
    for v in range(N):
        for l in range(L):
            marginals[v, l] = p[assign[:, v] == l].sum()
    marginals = marginals / marginals.sum(axis=1, keepdims=True)

    sums, counts = {}, {}
    for f in graph.factors:
        sidx = np.array(graph.scope_indices(f), dtype=int)
        if f.family == "unary":
            fv = assign[:, sidx[0]] == f.target
        elif f.family == "pair_eq":
            fv = assign[:, sidx[0]] == assign[:, sidx[1]]
        else:
            fv = np.any(assign[:, sidx] == f.target, axis=1)
        e = float(p[fv].sum())
        key = f.template.key
        sums[key] = sums.get(key, 0.0) + e
        counts[key] = counts.get(key, 0) + 1
    stats = {k: TemplateStat(mean=sums[k] / counts[k], count=counts[k]) for k in sums}

    return BeliefState(
        instance_ids=list(graph.variables),
        marginals=marginals,
        template_expectations=stats,
        iterations=0,
        max_residual=0.0,
        converged=True,
    )


def supervision_only_expectations(graph, config=None):
    """Per-template expectations with predictor factors removed.

    Templates with zero groundings are simply absent from the result.
    """
    return run_bp(graph, config, include_predictor=False).template_expectations


def product_expectations(graph, beliefs):
    """Per-template E[f] under the factored posterior (product of marginals)."""
    q = beliefs.marginals
    pos = {iid: i for i, iid in enumerate(beliefs.instance_ids)}
    sums, counts = {}, {}
    for f in graph.factors:
        idx = [pos[v] for v in f.scope]
        if f.family == "unary":
            e = float(q[idx[0], f.target])
        elif f.family == "pair_eq":
            e = float(q[idx[0]] @ q[idx[1]])
        else:
            e = 1.0 - float(np.prod(1.0 - q[idx, f.target]))
        key = f.template.key
        sums[key] = sums.get(key, 0.0) + e
        counts[key] = counts.get(key, 0) + 1
    return {k: TemplateStat(mean=sums[k] / counts[k], count=counts[k]) for k in sums}


def graph_to_json(graph, beliefs=None):
    """Diagnostic dump of a graph (and optionally its marginals)."""
    out = {
        "variables": list(graph.variables),
        "n_labels": graph.n_labels,
        "has_predictor": graph.predictor_log_potentials is not None,
        "warnings": list(graph.warnings),
        "factors": [
            {
                "kind": f.template.kind,
                "describe": f.template.describe(),
                "family": f.family,
                "scope": list(f.scope),
                "target": f.target,
                "weight": float(f.weight),
            }
            for f in graph.factors
        ],
    }
    if beliefs is not None:
        out["marginals"] = {
            iid: [float(x) for x in beliefs.marginal(iid)] for iid in beliefs.instance_ids
        }
        out["diagnostics"] = {
            "iterations": beliefs.iterations,
            "max_residual": beliefs.max_residual,
            "converged": beliefs.converged,
        }
    return out
