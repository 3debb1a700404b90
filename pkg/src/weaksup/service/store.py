"""Event-sourced session persistence and the background session runner.

Every session mutation is an event appended to events.jsonl. Restoring a
session replays the run itself (learning is deterministic) while feeding
recorded reviewer answers back in; during replay the log verifies that
re-emitted events match the recorded ones byte for byte, so corruption
or non-determinism is refused rather than silently absorbed.
"""

import json
import logging
import queue
import threading
import time
import uuid
from pathlib import Path

from ..corpus import load_dataset
from ..corpus.oracle import OracleRuleSet
from ..dpl import DPLConfig
from ..errors import ConfigError, DataError, SessionStateError
from ..evidence import EvidenceSet
from ..s4 import S4Config, S4Session, ScriptedOracle, s4_run

log = logging.getLogger(__name__)


def parse_session_request(body):
    """Validate a session-creation request; returns the canonical dict."""
    if "dataset" not in body:
        raise ConfigError("session request needs a 'dataset' path")
    seed = body.get("seed_evidence")
    if not seed:
        raise ConfigError("session request needs non-empty 'seed_evidence'")
    oracle = body.get("oracle", {"kind": "interactive"})
    if oracle.get("kind") not in ("interactive", "scripted"):
        raise ConfigError("oracle kind must be 'interactive' or 'scripted'")
    if oracle["kind"] == "scripted" and "path" not in oracle:
        raise ConfigError("scripted oracle needs a 'path'")
    return {
        "dataset": body["dataset"],
        "labels": body.get("labels"),
        "seed_evidence": seed,
        "oracle": oracle,
        "config": body.get("config", {}),
    }


def s4_config_from_request(config):
    dpl_keys = {"em_iterations", "epochs", "learning_rate", "batch_size"}
    dpl = DPLConfig(**{k: v for k, v in config.items() if k in dpl_keys})
    dpl.seed = config.get("seed", 0)
    s4_keys = {
        "outer_iterations",
        "budget",
        "modes",
        "predictor",
        "embedding_dim",
        "attn_dim",
        "sst_threshold",
        "max_sst_iters",
        "pool_fraction",
        "stop_count",
        "joint_batch",
        "joint_sim_floor",
        "seed",
    }
    kwargs = {k: v for k, v in config.items() if k in s4_keys}
    if "modes" in kwargs:
        kwargs["modes"] = tuple(kwargs["modes"])
    unknown = set(config) - s4_keys - dpl_keys
    if unknown:
        raise ConfigError(f"unknown session config fields: {sorted(unknown)}")
    return S4Config(dpl=dpl, **kwargs).validate()


class EventLog:
    """Append-only JSONL log that verifies replayed events against disk."""

    def __init__(self, path):
        self.path = Path(path)
        self.recorded = []
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for n, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        self.recorded.append(json.loads(line))
                    except json.JSONDecodeError:
                        raise DataError(f"{self.path}: line {n}: corrupted event log") from None
        self.cursor = 0
        self._lock = threading.Lock()

    def emit(self, event):
        with self._lock:
            if self.cursor < len(self.recorded):
                expected = self.recorded[self.cursor]
                if json.dumps(event, sort_keys=True) != json.dumps(expected, sort_keys=True):
                    raise DataError(
                        f"replay diverged from the stored log at event {self.cursor}; refusing to continue"
                    )
                self.cursor += 1
                return
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
            self.cursor += 1
            self.recorded.append(event)

    def events(self):
        with self._lock:
            return list(self.recorded)

    def recorded_answers(self):
        out = []
        for e in self.recorded:
            if e.get("type") == "fal_answer":
                out.append(("accept", e["label"]) if e.get("accepted") else ("reject", None))
        return out


class _RunnerOracle:
    """Feeds recorded answers during replay, then blocks on the live queue."""

    def __init__(self, runner, replay_answers, scripted=None):
        self.runner = runner
        self.replay_answers = list(replay_answers)
        self.scripted = scripted

    def __call__(self, query):
        if self.replay_answers:
            return self.replay_answers.pop(0)
        if self.scripted is not None:
            return self.scripted(query)
        return self.runner.answers.get()


class SessionRunner:
    """Owns one session's thread; all mutations flow through it."""

    def __init__(self, session_id, directory, request):
        self.id = session_id
        self.directory = Path(directory)
        self.request = request
        self.log = EventLog(self.directory / "events.jsonl")
        self.answers = queue.Queue()
        self.thread = None
        self.error = None

        self.dataset = load_dataset(request["dataset"], labels=request.get("labels"))
        self.config = s4_config_from_request(request.get("config", {}))
        seed_spec = request["seed_evidence"]
        if isinstance(seed_spec, dict) and "path" in seed_spec:
            evidence = EvidenceSet.load(seed_spec["path"])
        else:
            evidence = EvidenceSet.from_json(seed_spec)
        self.session = S4Session(
            evidence=evidence,
            seed_evidence=evidence.clone(),
            budget=self.config.budget,
            config=self.config,
        )
        self.session.log_event = self._log_event  # persist every event
        scripted = None
        if request["oracle"]["kind"] == "scripted":
            ruleset = OracleRuleSet.load(request["oracle"]["path"])
            scripted = ScriptedOracle(ruleset, self.dataset.label_set)
        self.oracle = _RunnerOracle(self, self.log.recorded_answers(), scripted)

    def _log_event(self, event):
        self.session.events.append(event)
        self.log.emit(event)

    # -- lifecycle -------------------------------------------------------

    @property
    def started(self):
        return self.thread is not None

    @property
    def running(self):
        return self.thread is not None and self.thread.is_alive()

    def step(self):
        """Start (or confirm) the background run; returns current status."""
        if self.error:
            raise SessionStateError(f"session failed: {self.error}")
        if self.session.status == "done":
            return "done"
        if not self.running:
            self.thread = threading.Thread(target=self._run, daemon=True)
            self.thread.start()
        return self.status()

    def _run(self):
        try:
            s4_run(
                self.session.evidence,
                self.dataset,
                self.config,
                oracle=self.oracle,
                session=self.session,
            )
        except Exception as exc:  # surfaced on the next API call
            log.exception("session %s failed", self.id)
            self.error = str(exc)

    def status(self):
        if self.error:
            return "failed"
        if not self.started:
            return "created"
        return self.session.status

    def submit_answer(self, query_id, accept=None, reject=False):
        """Validate and enqueue a reviewer answer; waits for it to apply."""
        pending = self.session.pending_query()
        if pending is None or self.session.status != "awaiting_answer":
            raise SessionStateError("session is not awaiting an answer")
        if pending.query_id != query_id:
            known = {q.query_id for q in self.session.queries}
            if query_id in known:
                raise SessionStateError(f"query {query_id} was already answered")
            raise DataError(f"unknown query id {query_id!r}")
        if accept is not None and accept not in self.dataset.label_set:
            raise ConfigError(f"label {accept!r} not in {self.dataset.label_set}")
        self.answers.put(("accept", accept) if accept is not None else ("reject", None))
        # wait until the runner applies it so responses reflect the outcome
        for _ in range(500):
            if pending.outcome != "pending":
                break
            time.sleep(0.01)
        return pending.outcome

    # -- views -------------------------------------------------------------

    def state_json(self):
        state = self.session.state_json()
        state["id"] = self.id
        state["status"] = self.status()
        state["error"] = self.error
        return state

    def query_json(self):
        pending = self.session.pending_query()
        if pending is None:
            return {"pending": False, "query": None}
        return {"pending": True, "query": pending.to_json()}

    def factors_json(self):
        return {
            "templates": [
                {**t.to_json(), "describe": t.describe(), "key": str(t.key)}
                for t in self.session.evidence
            ],
            "n_templates": len(self.session.evidence),
        }

    def metrics_json(self):
        rows = [e for e in self.log.events() if e.get("type") == "dpl"]
        return {"metrics": rows}


class SessionStore:
    """Sessions on disk under one root; live runners cached in memory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.runners = {}
        self._lock = threading.Lock()

    def create(self, body):
        request = parse_session_request(body)
        session_id = body.get("session_id") or uuid.uuid4().hex[:12]
        directory = self.root / session_id
        if directory.exists():
            raise ConfigError(f"session {session_id} already exists")
        directory.mkdir(parents=True)
        with open(directory / "config.json", "w", encoding="utf-8") as fh:
            json.dump(request, fh, indent=2, sort_keys=True)
        runner = SessionRunner(session_id, directory, request)
        with self._lock:
            self.runners[session_id] = runner
        return runner

    def get(self, session_id):
        with self._lock:
            if session_id in self.runners:
                return self.runners[session_id]
        directory = self.root / session_id
        if not directory.exists():
            raise KeyError(session_id)
        with open(directory / "config.json", encoding="utf-8") as fh:
            request = json.load(fh)
        runner = SessionRunner(session_id, directory, request)
        if runner.log.recorded:
            # resume by replaying the recorded run (deterministic)
            runner.step()
        with self._lock:
            self.runners[session_id] = runner
        return runner

    def list_ids(self):
        on_disk = sorted(p.name for p in self.root.iterdir() if p.is_dir())
        return on_disk

    def drop_live(self, session_id=None):
        """Forget live runners (simulates a restart; disk state remains)."""
        with self._lock:
            if session_id is None:
                self.runners.clear()
            else:
                self.runners.pop(session_id, None)
