"""Backends: scripted mock behavior, structured-output retries, embeddings,
and transport error mapping for the HTTP provider."""

from __future__ import annotations

import json
import socket
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goaltrack.backends import (
    BackendConfig,
    ChatMessage,
    OpenAICompatBackend,
    RETRY_SUFFIX,
    ScriptedMockBackend,
    complete_structured,
    normalize_embedding,
)
from goaltrack.errors import (
    DimensionMismatch,
    InvalidConfig,
    MalformedOutput,
    MissingScriptEntry,
    ProviderRefusal,
    ProviderTimeout,
)


class TestChatMessage:
    def test_roles_validated(self):
        with pytest.raises(ValueError):
            ChatMessage("narrator", "hi")

    def test_user_content_must_be_nonempty(self):
        with pytest.raises(ValueError):
            ChatMessage("user", "")
        ChatMessage("system", "")  # system prompts may be empty


class TestBackendConfig:
    def test_timeout_positive(self):
        with pytest.raises(InvalidConfig):
            BackendConfig(timeout=0)

    def test_retries_nonnegative(self):
        with pytest.raises(InvalidConfig):
            BackendConfig(max_retries=-1)


class TestScriptedChat:
    def test_chunks_concatenate_to_script(self):
        mock = ScriptedMockBackend(script={"chat:1": "Paris is lovely in spring."})
        chunks = list(mock.complete_chat([ChatMessage("user", "hi")], tag="chat:1"))
        assert "".join(chunks) == "Paris is lovely in spring."
        assert len(chunks) > 1

    def test_empty_message_list_rejected(self):
        mock = ScriptedMockBackend(script={"chat:1": "x"})
        with pytest.raises(ValueError):
            list(mock.complete_chat([], tag="chat:1"))

    def test_missing_tag_is_hard_error(self):
        mock = ScriptedMockBackend(script={})
        with pytest.raises(MissingScriptEntry):
            list(mock.complete_chat([ChatMessage("user", "hi")], tag="chat:9"))

    def test_determinism(self):
        mock = ScriptedMockBackend(script={"chat:1": "same every time"})
        first = list(mock.complete_chat([ChatMessage("user", "a")], tag="chat:1"))
        second = list(mock.complete_chat([ChatMessage("user", "a")], tag="chat:1"))
        assert first == second

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=200))
    def test_streaming_integrity(self, reply):
        mock = ScriptedMockBackend(script={"chat:1": reply})
        chunks = list(mock.complete_chat([ChatMessage("user", "x")], tag="chat:1"))
        assert "".join(chunks) == reply


class TestCompleteStructured:
    def test_parses_json(self):
        mock = ScriptedMockBackend(script={"infer:1": '{"clauses": []}'})
        assert complete_structured(mock, "p", tag="infer:1") == {"clauses": []}

    def test_retry_until_valid(self):
        mock = ScriptedMockBackend(
            script={"infer:1": ["not json", "still not", '{"ok": true}']}
        )
        assert complete_structured(mock, "p", tag="infer:1", retries=2) == {"ok": True}

    def test_no_retries_surfaces_malformed(self):
        mock = ScriptedMockBackend(script={"infer:1": "nope"})
        with pytest.raises(MalformedOutput) as excinfo:
            complete_structured(mock, "p", tag="infer:1", retries=0)
        assert excinfo.value.raw_text == "nope"

    def test_retry_prompt_carries_corrective_suffix(self):
        seen: list[str] = []

        class Spy(ScriptedMockBackend):
            def raw_completion(self, prompt, *, tag):
                seen.append(prompt)
                return super().raw_completion(prompt, tag=tag)

        mock = Spy(script={"t": ["bad", '{"a": 1}']})
        complete_structured(mock, "base prompt", tag="t", retries=1)
        assert seen[0] == "base prompt"
        assert seen[1] == "base prompt\n\n" + RETRY_SUFFIX

    def test_code_fence_stripped(self):
        mock = ScriptedMockBackend(script={"t": '```json\n{"a": 1}\n```'})
        assert complete_structured(mock, "p", tag="t") == {"a": 1}


class TestEmbeddings:
    def test_table_lookup_preserves_order(self):
        mock = ScriptedMockBackend(embeddings={"a": (1, 0), "b": (0, 1)})
        vectors = mock.embed(["a", "b"])
        assert np.allclose(vectors, [[1.0, 0.0], [0.0, 1.0]])

    def test_normalized_at_boundary(self):
        assert np.allclose(normalize_embedding((3, 4)), [0.6, 0.8])
        mock = ScriptedMockBackend(embeddings={"x": (3, 4)})
        assert np.allclose(mock.embed(["x"])[0], [0.6, 0.8])

    def test_unit_norm_tolerance(self):
        mock = ScriptedMockBackend(embeddings={"x": (0.3, -1.2, 7.7)})
        assert abs(np.linalg.norm(mock.embed(["x"])[0]) - 1.0) <= 1e-6

    def test_identical_inputs_identical_vectors(self):
        mock = ScriptedMockBackend(embeddings={"a": (2, 5)})
        vectors = mock.embed(["a", "a"])
        assert np.array_equal(vectors[0], vectors[1])

    def test_ragged_batch_rejected(self):
        mock = ScriptedMockBackend(embeddings={"a": (1, 0), "b": (0, 1, 0)})
        with pytest.raises(DimensionMismatch):
            mock.embed(["a", "b"])

    def test_zero_vector_rejected(self):
        mock = ScriptedMockBackend(embeddings={"a": (0, 0)})
        with pytest.raises(DimensionMismatch):
            mock.embed(["a"])


class TestHttpProviderErrors:
    def test_non_2xx_is_provider_refusal(self):
        import http.server

        class Refuse(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                self.send_response(503)
                self.end_headers()
                self.wfile.write(b"overloaded")

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Refuse)
        port = server.server_address[1]
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            backend = OpenAICompatBackend(
                BackendConfig(endpoint=f"http://127.0.0.1:{port}/v1", timeout=5)
            )
            with pytest.raises(ProviderRefusal) as excinfo:
                backend.raw_completion("hello", tag="t")
            assert excinfo.value.status_code == 503
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=2.0)

    def test_unresponsive_endpoint_times_out(self):
        # a socket that accepts connections but never answers
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.bind(("127.0.0.1", 0))
        server.listen(1)
        port = server.getsockname()[1]
        done = threading.Event()

        def hold_open():
            try:
                conn, _ = server.accept()
                done.wait(2.0)
                conn.close()
            except OSError:
                pass

        thread = threading.Thread(target=hold_open, daemon=True)
        thread.start()
        try:
            backend = OpenAICompatBackend(
                BackendConfig(endpoint=f"http://127.0.0.1:{port}/v1", timeout=0.2)
            )
            with pytest.raises(ProviderTimeout):
                backend.raw_completion("hello", tag="t")
        finally:
            done.set()
            server.close()
            thread.join(timeout=2.0)
