from .app import create_app
from .store import EventLog, SessionRunner, SessionStore

__all__ = ["create_app", "EventLog", "SessionRunner", "SessionStore"]
