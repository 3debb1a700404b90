"""Automatic rule growth: self-training proposals and reviewer queries.

After each EM run the engine scores candidate rules against the current
posteriors. Self-training picks winners by relative average weighted
attention or by lowest average posterior entropy and adds them directly;
reviewer queries go the opposite way, surfacing the *highest*-entropy
feature for a human (or scripted stand-in) to accept with a label or
reject. Every proposal is logged and never proposed twice, and accepted
answers are capped by the session budget.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus.data import OOV_ID
from .dpl import DPLConfig, dpl_learn
from .errors import BudgetExhausted, ConfigError, DataError, SessionStateError
from .eval import evaluate
from .evidence import DEFAULT_WEIGHT, EvidenceSet, SimilarityJoint, TokenUnary
from .factor_graph import build_graph, run_bp
from .predictor import build_module

log = logging.getLogger(__name__)

ENTROPY_SCORE_CAP = 1e9


@dataclass
class S4Config:
    outer_iterations: int = 5
    budget: int = 0
    modes: tuple = ("attention",)
    predictor: str = "bow_logistic"
    embedding_dim: int = 32
    attn_dim: int = 5
    dpl: DPLConfig = field(default_factory=DPLConfig)
    sst_threshold: float = 0.01
    sst_convergence: str = "full"  # or "supervision_only"
    max_sst_iters: int = 25
    pool_fraction: float = 0.025
    stop_count: int = 25
    joint_batch: int = 10
    joint_sim_floor: float = 0.8
    seed: int = 0

    def validate(self):
        allowed = {"attention", "entropy", "joint"}
        modes = set(self.modes)
        if not modes <= allowed:
            raise ConfigError(f"modes must be a subset of {sorted(allowed)}")
        if {"attention", "entropy"} <= modes:
            raise ConfigError("pick at most one unary proposal mode")
        if self.sst_convergence not in ("full", "supervision_only"):
            raise ConfigError("sst_convergence must be 'full' or 'supervision_only'")
        if self.budget < 0 or self.outer_iterations < 1:
            raise ConfigError("budget must be >= 0 and outer_iterations >= 1")
        if self.max_sst_iters < 1:
            raise ConfigError("max_sst_iters must be >= 1")
        self.dpl.validate()
        return self

    @property
    def unary_mode(self):
        for m in self.modes:
            if m in ("attention", "entropy"):
                return m
        return None

    @property
    def joint_mode(self):
        return "joint" in self.modes


@dataclass
class FALQuery:
    query_id: str
    token: str
    entropy: float
    avg_posterior: list
    candidates: dict  # label name -> rendered rule
    supporting: list  # up to 10 {instance_id, text, posterior}
    outcome: str = "pending"  # pending | accepted | rejected
    accepted_label: str | None = None

    def to_json(self):
        return {
            "query_id": self.query_id,
            "token": self.token,
            "entropy": self.entropy,
            "avg_posterior": self.avg_posterior,
            "candidates": self.candidates,
            "supporting": self.supporting,
            "outcome": self.outcome,
            "accepted_label": self.accepted_label,
        }


@dataclass
class S4Session:
    """Single-writer state of one rule-growth run."""

    evidence: EvidenceSet
    seed_evidence: EvidenceSet
    budget: int
    config: S4Config
    queries: list = field(default_factory=list)
    proposal_log: list = field(default_factory=list)
    events: list = field(default_factory=list)
    status: str = "running"  # running | awaiting_answer | done
    outer_iteration: int = 0
    used_tokens: set = field(default_factory=set)
    used_pairs: set = field(default_factory=set)
    chosen_learning_rate: float | None = None

    def __post_init__(self):
        self.used_tokens |= self.evidence.tokens_in_use()
        self.used_pairs |= self.evidence.pairs_in_use()

    def answered_count(self):
        return sum(1 for q in self.queries if q.outcome != "pending")

    def pending_query(self):
        for q in self.queries:
            if q.outcome == "pending":
                return q
        return None

    def assert_invariants(self):
        if self.answered_count() > self.budget:
            raise SessionStateError("answered queries exceed the budget")
        pending = [q for q in self.queries if q.outcome == "pending"]
        if (self.status == "awaiting_answer") != (len(pending) == 1):
            raise SessionStateError("awaiting_answer must match exactly one pending query")

    def log_event(self, event):
        self.events.append(event)

    def state_json(self):
        return {
            "status": self.status,
            "outer_iteration": self.outer_iteration,
            "n_templates": len(self.evidence),
            "budget": self.budget,
            "answered": self.answered_count(),
            "n_queries": len(self.queries),
            "learning_rate": self.chosen_learning_rate,
        }


# -- scoring ------------------------------------------------------------


def average_weighted_attention(module, beliefs, dataset, tokens=None):
    """Posterior-weighted attention mass per token, normalized by corpus count.

    Sums q_i(l) * attention(i, j) over every train occurrence (i, j) of
    each token, then divides by the token's train count. Returns a dict
    token -> length-L vector.
    """
    vocab = dataset.vocabulary
    want = None if tokens is None else {vocab.id_of(t) for t in tokens}
    acc = {}
    train = dataset.train
    alphas = module.attention_weights_batch(train)
    for inst, alpha in zip(train, alphas):
        q = beliefs.marginal(inst.id)
        for j, tid in enumerate(inst.tokens):
            if tid == OOV_ID or (want is not None and tid not in want):
                continue
            if tid not in acc:
                acc[tid] = np.zeros(dataset.n_labels)
            acc[tid] += alpha[j] * q
    out = {}
    for tid, vec in acc.items():
        token = vocab.token_of(tid)
        out[token] = vec / vocab.count_by_id(tid)
    return out


def score_attention(token, label, beliefs, module, dataset):
    """(average weighted attention, relative score) for a (token, label) rule."""
    if dataset.vocabulary.count(token) == 0:
        raise DataError(f"token {token!r} has no train occurrences")
    li = dataset.label_id(label) if isinstance(label, str) else int(label)
    vec = average_weighted_attention(module, beliefs, dataset, tokens=[token]).get(token)
    if vec is None:
        vec = np.zeros(dataset.n_labels)
    attn = float(vec[li])
    return attn, float(2 * vec[li] - vec.sum())


@dataclass
class EntropyScore:
    entropy: float
    score: float
    avg_posterior: np.ndarray
    count: int

    @property
    def best_label(self):
        return int(np.argmax(self.avg_posterior))


def _matching_train(feature, dataset):
    if isinstance(feature, str):
        tid = dataset.vocabulary.id_of(feature)
        if tid == OOV_ID:
            return []
        return dataset.train_with_token(tid)
    return [inst for inst in dataset.train if feature.evaluate(inst, dataset)]


def score_entropy(feature, beliefs, dataset):
    """Entropy (nats) of the average posterior over instances matching a feature.

    The proposal score is its reciprocal, capped at 1e9 when the entropy
    is exactly zero.
    """
    matching = _matching_train(feature, dataset)
    if not matching:
        raise DataError(f"feature {feature!r} matches no train instance")
    avg = np.mean([beliefs.marginal(inst.id) for inst in matching], axis=0)
    nz = avg[avg > 0]
    ent = float(-(nz * np.log(nz)).sum())
    score = ENTROPY_SCORE_CAP if ent == 0.0 else min(1.0 / ent, ENTROPY_SCORE_CAP)
    return EntropyScore(entropy=ent, score=score, avg_posterior=avg, count=len(matching))


def score_joint(pair, module):
    """Similarity gain of a pair under the trained vs pretrained embeddings.

    Returns None (with a warning) when either embedding is a zero vector.
    """
    a, b = pair
    cur_a, cur_b = module.embed(a, "current_pooled"), module.embed(b, "current_pooled")
    pre_a, pre_b = module.embed(a, "pretrained_mean"), module.embed(b, "pretrained_mean")
    for v, inst in ((cur_a, a), (cur_b, b), (pre_a, a), (pre_b, b)):
        if np.linalg.norm(v) == 0:
            log.warning("skipping pair with zero-vector embedding (instance %s)", inst.id)
            return None
    cos = lambda u, v: float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
    return cos(cur_a, cur_b) - cos(pre_a, pre_b)


# -- candidate pool and proposals ----------------------------------------


def candidate_tokens(session, dataset):
    """Frequency-floored candidate tokens minus stop tokens and past proposals."""
    cfg = session.config
    vocab = dataset.vocabulary
    pool = vocab.top_fraction(cfg.pool_fraction)
    stop = set(vocab.stop_tokens(cfg.stop_count))
    return [t for t in pool if t not in stop and t not in session.used_tokens]


def _mark_proposed(session, template, score):
    session.proposal_log.append({"key": str(template.key), "score": score})
    if isinstance(template, TokenUnary):
        session.used_tokens.add(template.token)
    if isinstance(template, SimilarityJoint):
        session.used_pairs.update(tuple(sorted(p)) for p in template.pairs)


def prop_sst(session, dataset, mode, module, beliefs):
    """Propose new rule templates by self-training; [] when the pool is done.

    attention / entropy modes return at most one token rule (best score,
    ties to the higher-count then lexicographically smaller token); joint
    mode returns one template batching the top similar pairs.
    """
    cfg = session.config
    if mode in ("attention", "entropy"):
        pool = candidate_tokens(session, dataset)
        if not pool:
            return []
        if mode == "attention":
            vecs = average_weighted_attention(module, beliefs, dataset, tokens=pool)
            scored = []
            for t in pool:
                vec = vecs.get(t)
                if vec is None:
                    continue
                for li in range(dataset.n_labels):
                    s = float(2 * vec[li] - vec.sum())
                    scored.append((-s, -dataset.vocabulary.count(t), t, li))
            if not scored:
                return []
            neg_s, _, token, li = min(scored)
            score = -neg_s
        else:
            scored = []
            for t in pool:
                es = score_entropy(t, beliefs, dataset)
                scored.append((-es.score, -es.count, t, es.best_label))
            neg_s, _, token, li = min(scored)
            score = -neg_s
        template = TokenUnary(
            token,
            dataset.label_name(li),
            weight=DEFAULT_WEIGHT,
            origin="sst",
            metadata={"mode": mode, "score": score},
        )
        _mark_proposed(session, template, score)
        return [template]

    if mode == "joint":
        if module.kind != "attn_embed":
            log.warning("joint proposals need an embedding predictor; skipping")
            return []
        train = dataset.train
        cur = module.embed_batch(train, "current_pooled")
        pre = module.embed_batch(train, "pretrained_mean")

        def normalize(M):
            n = np.linalg.norm(M, axis=1, keepdims=True)
            ok = n[:, 0] > 0
            M = np.divide(M, n, out=np.zeros_like(M), where=n > 0)
            return M, ok

        cur_n, cur_ok = normalize(cur)
        pre_n, pre_ok = normalize(pre)
        ok = cur_ok & pre_ok
        sim_cur = cur_n @ cur_n.T
        sim_pre = pre_n @ pre_n.T
        gain = sim_cur - sim_pre
        cand = []
        for i in range(len(train)):
            if not ok[i]:
                continue
            for j in range(i + 1, len(train)):
                if not ok[j] or sim_cur[i, j] < cfg.joint_sim_floor:
                    continue
                pair = (train[i].id, train[j].id)
                if tuple(sorted(pair)) in session.used_pairs:
                    continue
                cand.append((-float(gain[i, j]), pair))
        if not cand:
            return []
        cand.sort()
        pairs = tuple(p for _, p in cand[: cfg.joint_batch])
        template = SimilarityJoint(
            pairs,
            weight=DEFAULT_WEIGHT,
            origin="sst",
            metadata={"mode": "joint", "best_gain": -cand[0][0]},
        )
        _mark_proposed(session, template, -cand[0][0])
        return [template]

    raise ConfigError(f"unknown proposal mode {mode!r}")


def prop_fal(session, dataset, beliefs):
    """Propose the highest-entropy pool feature as a reviewer query.

    Returns None when the pool is exhausted; raises BudgetExhausted when
    all budgeted answers are already spent.
    """
    if session.answered_count() >= session.budget:
        raise BudgetExhausted(f"query budget of {session.budget} already spent")
    pool = candidate_tokens(session, dataset)
    if not pool:
        return None
    scored = []
    for t in pool:
        es = score_entropy(t, beliefs, dataset)
        scored.append((-es.entropy, -es.count, t, es))
    _, _, token, es = min(scored)
    matching = _matching_train(token, dataset)
    supporting = [
        {
            "instance_id": inst.id,
            "text": inst.raw_text,
            "posterior": [float(x) for x in beliefs.marginal(inst.id)],
        }
        for inst in matching[:10]
    ]
    query = FALQuery(
        query_id=f"q{len(session.queries):04d}",
        token=token,
        entropy=es.entropy,
        avg_posterior=[float(x) for x in es.avg_posterior],
        candidates={lab: f"contains '{token}' => {lab}" for lab in dataset.label_set},
        supporting=supporting,
    )
    session.queries.append(query)
    session.used_tokens.add(token)
    session.status = "awaiting_answer"
    session.assert_invariants()
    return query


def answer_query(session, query_id, accept=None, reject=False):
    """Resolve a pending query: accept with a label, or reject.

    Either outcome consumes budget; acceptance adds the token rule at the
    default proposal weight.
    """
    query = next((q for q in session.queries if q.query_id == query_id), None)
    if query is None:
        raise SessionStateError(f"unknown query id {query_id!r}")
    if query.outcome != "pending":
        raise SessionStateError(f"query {query_id} was already answered")
    if (accept is None) == (not reject):
        raise ConfigError("answer must either accept a label or reject")
    template = None
    if reject:
        query.outcome = "rejected"
    else:
        query.outcome = "accepted"
        query.accepted_label = accept
        template = TokenUnary(query.token, accept, weight=DEFAULT_WEIGHT, origin="fal")
        if not session.evidence.add(template):
            raise SessionStateError(f"token {query.token!r} already present in evidence")
    session.status = "running"
    session.assert_invariants()
    return template


def sst_converged(prev_beliefs, cur_beliefs, threshold=0.01):
    """True when fewer than `threshold` of instances changed argmax label."""
    if list(prev_beliefs.instance_ids) != list(cur_beliefs.instance_ids):
        raise DataError("belief states cover different instance sets")
    flips = prev_beliefs.argmax_labels() != cur_beliefs.argmax_labels()
    return float(np.mean(flips)) < threshold


# -- oracles --------------------------------------------------------------


class ScriptedOracle:
    """Reviewer stand-in backed by an oracle rule set.

    Accepts a queried token for the first label whose top-k list contains
    it; rejects otherwise.
    """

    def __init__(self, ruleset, label_order):
        self.ruleset = ruleset
        self.label_order = list(label_order)

    def __call__(self, query):
        for label in self.label_order:
            if self.ruleset.accepts(query.token, label):
                return ("accept", label)
        return ("reject", None)


# -- the outer loop ---------------------------------------------------------


@dataclass
class S4Result:
    module: object
    evidence: EvidenceSet
    session: S4Session

    @property
    def events(self):
        return self.session.events


def _convergence_beliefs(session, dataset, result):
    if session.config.sst_convergence == "full":
        return result.beliefs
    graph = build_graph(session.evidence, dataset)
    return run_bp(graph, session.config.dpl.bp, include_predictor=False)


def _run_dpl(session, module, dataset):
    cfg = session.config
    dpl_cfg = cfg.dpl
    if session.chosen_learning_rate is not None:
        dpl_cfg = replace(dpl_cfg, learning_rate=session.chosen_learning_rate)
    result = dpl_learn(session.evidence, module, dataset, dpl_cfg)
    session.chosen_learning_rate = result.learning_rate
    return result


def s4_run(seed_evidence, dataset, config, oracle=None, session=None, module=None):
    """Alternate self-training rounds with budgeted reviewer queries.

    Per outer iteration: the predictor restarts (rule weights stay warm),
    EM and single-rule proposals repeat until posterior labels stabilize,
    joint-pair rules are batched in if enabled, and one reviewer query is
    issued while budget remains. Stops early once an iteration changes
    nothing. `oracle` answers queries synchronously; with budget 0 it is
    never consulted.
    """
    config = config.validate()
    if session is None:
        if not seed_evidence.templates:
            raise ConfigError("seed evidence must not be empty")
        session = S4Session(
            evidence=seed_evidence,
            seed_evidence=seed_evidence.clone(),
            budget=config.budget,
            config=config,
        )
    if module is None:
        module = build_module(
            config.predictor,
            dataset.n_labels,
            len(dataset.vocabulary),
            dim=config.embedding_dim,
            attn_dim=config.attn_dim,
            seed=config.seed,
        )
    if config.budget > 0 and oracle is None:
        raise ConfigError("a positive budget needs an oracle to answer queries")

    has_test_gold = bool(dataset.test) and all(i.gold_label is not None for i in dataset.test)
    prev_q = None
    for outer in range(1, config.outer_iterations + 1):
        session.outer_iteration = outer
        changed = False

        for sst_iter in range(config.max_sst_iters):
            # the predictor restarts for every EM run (only rule weights
            # stay warm), so posterior drift cannot compound across runs
            module.reinitialize(config.seed + 1000 * outer + sst_iter)
            result = _run_dpl(session, module, dataset)
            acc = evaluate(module, dataset).accuracy if has_test_gold else None
            session.log_event(
                {
                    "type": "dpl",
                    "outer": outer,
                    "sst_iter": sst_iter,
                    "test_accuracy": acc,
                    "q_entropy": result.beliefs.mean_entropy(),
                    "n_templates": len(session.evidence),
                    "answered": session.answered_count(),
                    "learning_rate": result.learning_rate,
                }
            )
            cur_q = _convergence_beliefs(session, dataset, result)
            if prev_q is not None and sst_converged(prev_q, cur_q, config.sst_threshold):
                prev_q = cur_q
                break
            prev_q = cur_q
            if config.unary_mode is None:
                break
            proposals = prop_sst(session, dataset, config.unary_mode, module, result.beliefs)
            if not proposals:
                break
            for tpl in proposals:
                if session.evidence.add(tpl):
                    changed = True
                    session.log_event(
                        {"type": "sst_add", "outer": outer, "template": tpl.to_json()}
                    )

        if config.joint_mode:
            joints = prop_sst(session, dataset, "joint", module, prev_q or result.beliefs)
            for tpl in joints:
                if session.evidence.add(tpl):
                    changed = True
                    session.log_event(
                        {"type": "joint_add", "outer": outer, "template": tpl.to_json()}
                    )

        if session.answered_count() < session.budget:
            query = prop_fal(session, dataset, prev_q or result.beliefs)
            if query is not None:
                session.log_event({"type": "fal_query", "outer": outer, "query": query.to_json()})
                decision, label = oracle(query)
                if decision == "accept":
                    tpl = answer_query(session, query.query_id, accept=label)
                    session.log_event(
                        {
                            "type": "fal_answer",
                            "query_id": query.query_id,
                            "accepted": True,
                            "label": label,
                            "template": tpl.to_json(),
                        }
                    )
                else:
                    answer_query(session, query.query_id, reject=True)
                    session.log_event(
                        {"type": "fal_answer", "query_id": query.query_id, "accepted": False}
                    )
                changed = True

        if not changed:
            break

    session.status = "done"
    session.log_event(
        {
            "type": "done",
            "outer_iterations": session.outer_iteration,
            "n_templates": len(session.evidence),
            "answered": session.answered_count(),
        }
    )
    return S4Result(module=module, evidence=session.evidence, session=session)
