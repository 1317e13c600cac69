"""In-process chat-completion stub server for transport tests.

Behaviors are scripted per request index or computed from the request body,
so retry schedules, OOV replies, and concurrency caps are all testable
without a network."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

Behavior = dict[str, Any]
# keys: "status" (default 200), "reply" (completion text), "delay" seconds,
# "raw_body" to override the response JSON entirely.


class StubLLMServer:
    def __init__(
        self,
        script: list[Behavior] | None = None,
        reply_fn: Callable[[str, int], Behavior] | None = None,
        default_reply: str = "informational",
    ):
        self.script = script or []
        self.reply_fn = reply_fn
        self.default_reply = default_reply
        self.requests: list[dict[str, Any]] = []
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()
        self._count = 0
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # silence
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length)) if length else {}
                with stub._lock:
                    index = stub._count
                    stub._count += 1
                    stub.in_flight += 1
                    stub.max_in_flight = max(stub.max_in_flight, stub.in_flight)
                    stub.requests.append(
                        {"index": index, "body": body, "auth": self.headers.get("Authorization")}
                    )
                try:
                    behavior = stub._behavior_for(body, index)
                    if behavior.get("delay"):
                        time.sleep(behavior["delay"])
                    status = behavior.get("status", 200)
                    if "raw_body" in behavior:
                        payload = behavior["raw_body"].encode("utf-8")
                    elif status == 200:
                        payload = json.dumps(
                            {
                                "choices": [
                                    {"message": {"role": "assistant", "content": behavior.get("reply", stub.default_reply)}}
                                ],
                                "usage": {"prompt_tokens": 7, "completion_tokens": 2},
                            }
                        ).encode("utf-8")
                    else:
                        payload = json.dumps({"error": f"stub status {status}"}).encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                finally:
                    with stub._lock:
                        stub.in_flight -= 1

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def _behavior_for(self, body: dict[str, Any], index: int) -> Behavior:
        if self.reply_fn is not None:
            prompt = ""
            messages = body.get("messages") or []
            if messages:
                prompt = str(messages[-1].get("content", ""))
            return self.reply_fn(prompt, index)
        if index < len(self.script):
            return self.script[index]
        return {"reply": self.default_reply}

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubLLMServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
