"""Runnable server: wire a store and backends into the HTTP app.

Configuration comes from a JSON file (section ``backend`` for provider
settings, ``server`` for bind address and data directory) with
environment overrides. A ``mock`` section pointing at a script file
swaps in the deterministic scripted backend, which is handy for demos
and frontend development without credentials.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .backends import BackendConfig, BackendSet, OpenAICompatBackend, ScriptedMockBackend
from .service import create_app
from .store import SessionStore

DEFAULT_DATA_DIR = "./goaltrack-data"


def load_config_file(path: Optional[str]) -> dict[str, Any]:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        value = json.load(fh)
    if not isinstance(value, dict):
        raise ValueError("config file must contain a JSON object")
    return value


def build_backends(config: dict[str, Any]) -> BackendSet:
    mock = config.get("mock")
    if mock:
        script_path = mock if isinstance(mock, str) else mock.get("script")
        with open(script_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        embeddings = raw.pop("embeddings", {}) if isinstance(raw.get("embeddings"), dict) else {}
        return BackendSet.shared(ScriptedMockBackend(script=raw, embeddings=embeddings))
    backend_config = BackendConfig.from_dict(config.get("backend", {}))
    return BackendSet.shared(OpenAICompatBackend(backend_config))


def make_app(config: dict[str, Any]):
    server = config.get("server", {})
    data_dir = os.environ.get("GOALTRACK_DATA_DIR") or server.get("data_dir") or DEFAULT_DATA_DIR
    store = SessionStore(Path(data_dir))
    return create_app(store, build_backends(config), frontend_dir=config.get("frontend"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="goaltrack-serve")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--mock", help="scripted mock JSON path (overrides config)")
    parser.add_argument("--data-dir", help="session log directory (overrides config)")
    parser.add_argument("--frontend", help="static directory to serve at / (e.g. the built web client)")
    args = parser.parse_args(argv)

    try:
        config = load_config_file(args.config)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load config: {exc}", file=sys.stderr)
        return 2
    if args.mock:
        config["mock"] = args.mock
    if args.data_dir:
        config.setdefault("server", {})["data_dir"] = args.data_dir
    if args.frontend:
        config["frontend"] = args.frontend

    server = config.get("server", {})
    host = args.host or server.get("host", "127.0.0.1")
    port = args.port or int(server.get("port", 8000))

    import uvicorn

    uvicorn.run(make_app(config), host=host, port=port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
