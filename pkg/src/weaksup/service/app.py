"""HTTP surface for interactive review sessions.

JSON over HTTP, schemas committed under schemas/. Learning steps run in
a per-session background thread; the step endpoint returns immediately
and clients poll session state. Reviewer answers are accepted whenever
the session is awaiting one.
"""

import csv
import io
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles

from ..errors import ConfigError, DataError, SessionStateError
from .store import SessionStore

STATIC_DIR = Path(__file__).resolve().parents[3] / "frontend" / "dist"


def _http_error(exc):
    if isinstance(exc, SessionStateError):
        return HTTPException(status_code=409, detail=str(exc))
    if isinstance(exc, ConfigError):
        return HTTPException(status_code=400, detail=str(exc))
    if isinstance(exc, DataError):
        return HTTPException(status_code=422, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


def create_app(store_path, static_dir=None):
    app = FastAPI(title="weaksup review service")
    store = SessionStore(store_path)
    app.state.store = store

    def runner_of(session_id):
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}") from None
        except (DataError, ConfigError) as exc:
            raise _http_error(exc) from None

    @app.get("/api/health")
    def health():
        return {"ok": True, "sessions": store.list_ids()}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        try:
            runner = store.create(body)
        except (ConfigError, DataError) as exc:
            raise _http_error(exc) from None
        return {"session_id": runner.id, "state": runner.state_json()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return runner_of(session_id).state_json()

    @app.post("/sessions/{session_id}/step", status_code=202)
    def step(session_id: str):
        runner = runner_of(session_id)
        try:
            status = runner.step()
        except SessionStateError as exc:
            raise _http_error(exc) from None
        return {"session_id": session_id, "status": status}

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str):
        return runner_of(session_id).query_json()

    @app.post("/sessions/{session_id}/query/{query_id}/answer")
    def answer(session_id: str, query_id: str, body: dict):
        runner = runner_of(session_id)
        accept = body.get("accept")
        reject = bool(body.get("reject"))
        if (accept is None) == (not reject):
            raise HTTPException(status_code=400, detail="body must contain 'accept' or 'reject'")
        try:
            outcome = runner.submit_answer(query_id, accept=accept, reject=reject)
        except (SessionStateError, ConfigError, DataError) as exc:
            raise _http_error(exc) from None
        return {"session_id": session_id, "query_id": query_id, "outcome": outcome}

    @app.get("/sessions/{session_id}/factors")
    def factors(session_id: str):
        return runner_of(session_id).factors_json()

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str, format: str = "json"):
        data = runner_of(session_id).metrics_json()
        if format == "csv":
            buf = io.StringIO()
            rows = data["metrics"]
            fields = ["outer", "sst_iter", "test_accuracy", "q_entropy", "n_templates", "answered"]
            writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
            return Response(content=buf.getvalue(), media_type="text/csv")
        return data

    static = Path(static_dir) if static_dir else STATIC_DIR
    if static.is_dir():
        app.mount("/", StaticFiles(directory=str(static), html=True), name="ui")

    return app
