"""Webhook service: signed deliveries in, serialized reconciles out.

Deliveries are verified against a shared secret (HMAC SHA-256 over the
raw body), then queued per repository; a worker per repository applies
reconciles strictly in order while different repositories proceed in
parallel.  A health endpoint reports liveness and the last accepted
delivery.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import queue
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from tracegraph.docmodel import DEFAULT_MANAGED_HEADING
from tracegraph.gateway import EventDecodeError, EventEnvelope, Gateway, decode_event
from tracegraph.reconcile import AuditLog, ReconcileError, reconcile_event

logger = logging.getLogger(__name__)

DEFAULT_QUEUE_SIZE = 64


def verify_signature(payload: bytes, signature_header: str | None, secret: str) -> bool:
    """Check an ``X-Hub-Signature-256`` header against the shared secret."""
    if not signature_header or not signature_header.startswith("sha256="):
        return False
    expected = hmac.new(secret.encode("utf-8"), payload, hashlib.sha256).hexdigest()
    return hmac.compare_digest(expected, signature_header[len("sha256=") :])


class WebhookServer:
    """HTTP front end over the reconciler.

    POST /webhook accepts deliveries; GET /healthz reports status.
    """

    def __init__(
        self,
        gateway: Gateway,
        secret: str,
        host: str = "127.0.0.1",
        port: int = 0,
        audit: AuditLog | None = None,
        heading: str = DEFAULT_MANAGED_HEADING,
        queue_size: int = DEFAULT_QUEUE_SIZE,
    ) -> None:
        self.gateway = gateway
        self.secret = secret
        self.audit = audit
        self.heading = heading
        self.queue_size = queue_size
        self.last_delivery: str | None = None
        self._queues: dict[str, queue.Queue] = {}
        self._workers: dict[str, threading.Thread] = {}
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._httpd.daemon_threads = True
        self._serve_thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> None:
        self._serve_thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._serve_thread.start()
        logger.info("webhook server listening on port %d", self.port)

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._stopping.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        for q in self._queues.values():
            q.put(None)

    def drain(self, timeout: float = 5.0) -> None:
        """Block until queued reconciles finish; for tests."""
        for q in list(self._queues.values()):
            with q.all_tasks_done:
                deadline = timeout
                while q.unfinished_tasks and deadline > 0:
                    q.all_tasks_done.wait(0.05)
                    deadline -= 0.05

    def enqueue(self, env: EventEnvelope) -> bool:
        """Queue an event for its repository; False when the queue is full."""
        key = env.repo.key.lower()
        with self._lock:
            if key not in self._queues:
                self._queues[key] = queue.Queue(maxsize=self.queue_size)
                worker = threading.Thread(target=self._worker, args=(key,), daemon=True)
                self._workers[key] = worker
                worker.start()
        try:
            self._queues[key].put_nowait(env)
        except queue.Full:
            return False
        return True

    def _worker(self, key: str) -> None:
        q = self._queues[key]
        while not self._stopping.is_set():
            env = q.get()
            if env is None:
                q.task_done()
                return
            try:
                outcome = reconcile_event(env, self.gateway, audit=self.audit, heading=self.heading)
                logger.info("%s: %d patch(es) applied", outcome.trigger, len(outcome.applied))
            except ReconcileError:
                logger.exception("reconcile failed for %s", env.summary())
            except Exception:
                logger.exception("unexpected error handling %s", env.summary())
            finally:
                q.task_done()

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # route through logging, not stderr
                logger.debug("http: " + fmt, *args)

            def _respond(self, status: int, payload: dict, extra_headers: dict | None = None) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                for name, value in (extra_headers or {}).items():
                    self.send_header(name, value)
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self) -> None:
                if self.path != "/healthz":
                    self._respond(404, {"error": "not found"})
                    return
                self._respond(
                    200,
                    {
                        "status": "ok",
                        "last_delivery": server.last_delivery,
                        "queued": {k: q.qsize() for k, q in server._queues.items()},
                    },
                )

            def do_POST(self) -> None:
                if self.path != "/webhook":
                    self._respond(404, {"error": "not found"})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                payload = self.rfile.read(length)
                if not verify_signature(payload, self.headers.get("X-Hub-Signature-256"), server.secret):
                    self._respond(401, {"error": "signature verification failed"})
                    return
                event_name = self.headers.get("X-GitHub-Event", "")
                try:
                    env = decode_event(payload.decode("utf-8", errors="replace"), event_name)
                except EventDecodeError as exc:
                    self._respond(400, {"error": str(exc)})
                    return
                server.last_delivery = datetime.now(timezone.utc).isoformat()
                if env is None:
                    self._respond(202, {"status": "ignored", "event": event_name})
                    return
                if not server.enqueue(env):
                    self._respond(503, {"error": "queue full"}, {"Retry-After": "1"})
                    return
                self._respond(202, {"status": "accepted", "event": env.summary()})

        return Handler
