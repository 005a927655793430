"""HTTP service over sessions: creation, stepping, interventions, SSE event
streams, artifact/ledger downloads and watermark verification.

Plain http.server threading stack; JSON bodies in and out, server-sent
events for the one-way live stream (resumable via Last-Event-ID).  Requests
touching one session serialize through that session's lock; distinct
sessions proceed concurrently.  Every transition persists a snapshot and the
.provlog under the store directory, so a restarted service can list and
continue existing sessions (components are re-derived from the attempt log,
which is deterministic).
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict
from email.parser import BytesParser
from email.policy import HTTP as HTTP_POLICY
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import orchestrator, planner, provenance, raster, watermark
from .generator import GenConfig
from .orchestrator import Intervention, Session, SessionConfig
from .planner import PlanEdit
from .png import encode_png


class GatewayError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.detail = detail or {}


def _bad_request(message, detail=None):
    return GatewayError(400, "bad_request", str(message), detail)


CONFIG_FIELDS = {
    "mode": str,
    "tau": float,
    "max_attempts": int,
    "on_exhaust": str,
    "canvas_w": int,
    "canvas_h": int,
    "eta": float,
    "seed": int,
    "lambda": float,
    "key": str,  # hex
    "theta": float,
    "account_id": str,
    "project_id": str,
    "fixed_clock": int,
    "session_id": str,
}


def parse_config(raw: dict | None) -> SessionConfig:
    raw = raw or {}
    kwargs = {}
    for name, value in raw.items():
        if name not in CONFIG_FIELDS:
            raise _bad_request(f"unknown config field {name!r}")
        cast = CONFIG_FIELDS[name]
        try:
            if name == "key":
                kwargs["key"] = int(str(value), 16)
            elif name == "lambda":
                kwargs["lam"] = float(value)
            else:
                kwargs[name] = cast(value)
        except (TypeError, ValueError) as exc:
            raise _bad_request(f"bad config field {name}: {exc}")
    try:
        return SessionConfig(**kwargs)
    except (orchestrator.OrchestratorError, Exception) as exc:
        raise _bad_request(f"invalid config: {exc}")


# ---------------------------------------------------------------------------
# Store


class SessionHandle:
    def __init__(self, session: Session):
        self.session = session
        self.lock = threading.RLock()
        self.cond = threading.Condition(self.lock)


class SessionStore:
    """In-memory registry backed by snapshot files under a root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.handles: dict[str, SessionHandle] = {}
        self.lock = threading.Lock()
        for snap in sorted(self.root.glob("*/snapshot.json")):
            try:
                session = restore_session(snap.parent)
            except Exception:
                continue  # unreadable snapshots are skipped, not fatal
            self._register(session)

    def _register(self, session: Session) -> SessionHandle:
        handle = SessionHandle(session)
        session.listeners.append(lambda s, ev: self._on_event(handle, s))
        self.handles[session.id] = handle
        return handle

    def _on_event(self, handle: SessionHandle, session: Session):
        persist_session(self.root / session.id, session)
        handle.cond.notify_all()

    def create(self, prompt: str, cfg: SessionConfig) -> SessionHandle:
        session = orchestrator.start_session(prompt, cfg)
        with self.lock:
            if session.id in self.handles:
                raise GatewayError(409, "illegal_state", f"session {session.id} already exists")
            handle = self._register(session)
        with handle.lock:
            persist_session(self.root / session.id, session)
        return handle

    def get(self, sid: str) -> SessionHandle:
        handle = self.handles.get(sid)
        if handle is None:
            raise GatewayError(404, "not_found", f"no session {sid}")
        return handle

    def all(self) -> list[SessionHandle]:
        return list(self.handles.values())


# ---------------------------------------------------------------------------
# Persistence


def _score_dict(score) -> dict:
    return {"value": score.value, "parts": score.parts} if score else None


def session_snapshot(session: Session) -> dict:
    cfg = asdict(session.config)
    cfg["key"] = f"{session.config.key:016x}"
    return {
        "id": session.id,
        "state": session.state,
        "state_label": session.state_label(),
        "current": session.current,
        "prompt": session.plan.prompt.source_text,
        "prompt_dsl": planner.render_prompt(session.plan.prompt),
        "config": cfg,
        "plan": {
            "revision": session.plan.revision,
            "subtasks": [
                {"id": st.id, "kind": st.kind, "constraints": st.constraints}
                for st in session.plan.subtasks
            ],
        },
        "attempts": {
            sid: [
                {"number": a.number, "score": _score_dict(a.score), "eta": a.eta_used}
                for a in attempts
            ]
            for sid, attempts in session.attempts.items()
        },
        "accepted": {
            sid: comp.attempt for sid, comp in session.components.items()
        },
        "retry_grants": dict(session.retry_grants),
        "events": [ev.as_dict() for ev in session.events],
        "payload_hex": session.payload.hex() if session.payload else None,
        "psnr": session.artifact_psnr,
        "failure_reason": session.failure_reason,
    }


def persist_session(directory: Path, session: Session) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "snapshot.json").write_text(
        json.dumps(session_snapshot(session), sort_keys=True, indent=1)
    )
    (directory / "ledger.provlog").write_bytes(provenance.export(session.ledger))
    if session.artifact is not None and not (directory / "artifact.ppm").exists():
        (directory / "artifact.ppm").write_bytes(raster.write_ppm(session.artifact))


def restore_session(directory: Path) -> Session:
    """Rebuild a session from its snapshot; components are re-rendered from
    the attempt log (generation is a pure function of seed/subtask/attempt)."""
    from . import generator as gen_mod

    snap = json.loads((directory / "snapshot.json").read_text())
    cfg_raw = dict(snap["config"])
    cfg_raw["key"] = int(cfg_raw["key"], 16)
    cfg_raw["lam"] = cfg_raw.pop("lam")
    cfg = SessionConfig(**cfg_raw)
    prompt = planner.parse_any(snap["prompt"])
    plan = planner.Plan(
        tuple(
            planner.Subtask(st["id"], st["kind"], st["constraints"])
            for st in snap["plan"]["subtasks"]
        ),
        prompt,
        snap["plan"]["revision"],
    )
    session = Session(id=snap["id"], config=cfg, plan=plan, ledger=provenance.import_ledger(
        (directory / "ledger.provlog").read_bytes()
    ))
    session.state = snap["state"]
    session.current = snap["current"]
    session.retry_grants = {k: int(v) for k, v in snap["retry_grants"].items()}
    session.failure_reason = snap["failure_reason"]
    session.artifact_psnr = snap["psnr"]
    if snap["payload_hex"]:
        session.payload = watermark.payload_from_hex(snap["payload_hex"])

    for sid, attempts in snap["attempts"].items():
        st = plan.subtask(sid)
        for a in attempts:
            acfg = GenConfig(cfg.canvas_w, cfg.canvas_h, a["eta"], cfg.seed)
            comp = gen_mod.generate(st, acfg, a["number"])
            score = None
            if a["score"]:
                from .reviewer import ReviewScore

                score = ReviewScore(a["score"]["value"], a["score"]["parts"], sid, a["number"])
            session.attempts.setdefault(sid, []).append(
                orchestrator.Attempt(a["number"], score, comp, a["eta"])
            )
    for sid, number in snap["accepted"].items():
        for attempt in session.attempts.get(sid, []):
            if attempt.number == number:
                session.components[sid] = attempt.component
    artifact_path = directory / "artifact.ppm"
    if artifact_path.exists():
        session.artifact = raster.read_ppm(artifact_path.read_bytes())
    session.events = [orchestrator.Event(**ev) for ev in snap["events"]]
    return session


# ---------------------------------------------------------------------------
# HTTP handler


def _session_resource(session: Session) -> dict:
    return session_snapshot(session)


def _session_summary(session: Session) -> dict:
    return {
        "id": session.id,
        "state": session.state,
        "state_label": session.state_label(),
        "revision": session.plan.revision,
        "events": len(session.events),
        "payload_hex": session.payload.hex() if session.payload else None,
    }


def build_intervention(body: dict) -> Intervention:
    kind = body.get("kind")
    if not kind:
        raise _bad_request("intervention needs a kind")
    edit = None
    if body.get("edit"):
        e = body["edit"]
        edit = PlanEdit(op=e.get("op", ""), target=e.get("target"), payload=e.get("payload") or {})
    return Intervention(
        kind=kind,
        edit=edit,
        subtask=body.get("subtask"),
        action=body.get("action"),
        path=body.get("path"),
        value=body.get("value"),
    )


class GatewayHandler(BaseHTTPRequestHandler):
    store: SessionStore = None  # set by serve()
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- plumbing ----------------------------------------------------------

    def _send_json(self, status: int, obj: dict):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, content_type: str, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        # CORS preflight for the browser dashboard.
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _send_error_obj(self, err: GatewayError):
        self._send_json(
            err.status, {"error": {"code": err.code, "message": str(err), "detail": err.detail}}
        )

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise _bad_request(f"invalid JSON body: {exc}")
        if not isinstance(obj, dict):
            raise _bad_request("body must be a JSON object")
        return obj

    def _dispatch(self, method: str):
        try:
            path = self.path.split("?")[0].rstrip("/")
            parts = [p for p in path.split("/") if p]
            self._route(method, parts)
        except GatewayError as err:
            self._send_error_obj(err)
        except (orchestrator.IllegalState, orchestrator.IllegalIntervention) as exc:
            self._send_error_obj(GatewayError(409, "illegal_state", str(exc)))
        except orchestrator.PromptRejected as exc:
            self._send_error_obj(GatewayError(400, "bad_request", str(exc)))
        except BrokenPipeError:
            pass
        except Exception as exc:  # never leak a traceback over the wire
            self._send_error_obj(GatewayError(500, "internal", f"{type(exc).__name__}: {exc}"))

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    # -- routing -----------------------------------------------------------

    def _route(self, method: str, parts: list[str]):
        store = self.store
        if method == "GET" and parts == ["healthz"]:
            return self._send_json(200, {"status": "ok"})
        if parts and parts[0] == "sessions":
            if method == "GET" and len(parts) == 1:
                with store.lock:
                    handles = store.all()
                sessions = []
                for h in handles:
                    with h.lock:
                        sessions.append(_session_summary(h.session))
                return self._send_json(200, {"sessions": sessions})
            if method == "POST" and len(parts) == 1:
                body = self._read_json()
                prompt = body.get("prompt")
                if not prompt or not isinstance(prompt, str):
                    raise _bad_request("body needs a 'prompt' string")
                handle = store.create(prompt, parse_config(body.get("config")))
                with handle.lock:
                    return self._send_json(201, _session_resource(handle.session))
            if len(parts) >= 2:
                handle = store.get(parts[1])
                rest = parts[2:]
                if method == "GET" and rest == []:
                    with handle.lock:
                        return self._send_json(200, _session_resource(handle.session))
                if method == "GET" and rest == ["events"]:
                    return self._stream_events(handle)
                if method == "GET" and rest == ["artifact"]:
                    return self._artifact(handle)
                if method == "GET" and rest == ["ledger"]:
                    with handle.lock:
                        data = provenance.export(handle.session.ledger)
                    return self._send_bytes(200, "text/plain; charset=utf-8", data)
                if method == "POST" and rest == ["step"]:
                    return self._step(handle)
                if method == "POST" and rest == ["interventions"]:
                    return self._intervene(handle)
        if method == "POST" and parts == ["verify", "watermark"]:
            return self._verify_watermark()
        raise GatewayError(404, "not_found", f"no route {method} /{'/'.join(parts)}")

    # -- endpoints ---------------------------------------------------------

    def _step(self, handle: SessionHandle):
        body = self._read_json()
        count = body.get("count", 1)
        if not isinstance(count, int) or count < 1:
            raise _bad_request("count must be a positive integer")
        events = []
        with handle.lock:
            session = handle.session
            for _ in range(count):
                if session.state in orchestrator.TERMINAL or session.state in orchestrator.AWAITING:
                    break
                events.append(orchestrator.step(session).as_dict())
            if not events:
                raise GatewayError(
                    409, "illegal_state", f"cannot step in state {session.state_label()}"
                )
            return self._send_json(
                200, {"events": events, "session": _session_summary(session)}
            )

    def _intervene(self, handle: SessionHandle):
        body = self._read_json()
        iv = build_intervention(body)
        with handle.lock:
            ev = orchestrator.intervene(handle.session, iv)
            return self._send_json(
                200, {"event": ev.as_dict(), "session": _session_summary(handle.session)}
            )

    def _artifact(self, handle: SessionHandle):
        want_png = "format=png" in (self.path.split("?", 1) + [""])[1]
        with handle.lock:
            session = handle.session
            if session.artifact is None:
                raise GatewayError(404, "not_found", "artifact not available yet")
            if want_png:
                return self._send_bytes(200, "image/png", encode_png(session.artifact))
            return self._send_bytes(
                200, "image/x-portable-pixmap", raster.write_ppm(session.artifact)
            )

    def _stream_events(self, handle: SessionHandle):
        last_id = 0
        header = self.headers.get("Last-Event-ID")
        if header:
            try:
                last_id = int(header)
            except ValueError:
                pass
        for key, value in [p.split("=", 1) for p in (self.path.split("?", 1) + [""])[1].split("&") if "=" in p]:
            if key == "since":
                try:
                    last_id = max(last_id, int(value))
                except ValueError:
                    pass
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Connection", "close")
        self.end_headers()
        try:
            self.wfile.write(b"retry: 2000\n\n")
            while True:
                with handle.lock:
                    session = handle.session
                    pending = [ev for ev in session.events if ev.seq > last_id]
                    terminal = session.state in orchestrator.TERMINAL
                    if not pending and not terminal:
                        handle.cond.wait(timeout=5.0)
                        pending = [ev for ev in session.events if ev.seq > last_id]
                for ev in pending:
                    payload = json.dumps(ev.as_dict())
                    self.wfile.write(
                        f"event: transition\nid: {ev.seq}\ndata: {payload}\n\n".encode()
                    )
                    last_id = ev.seq
                self.wfile.flush()
                if terminal and not pending:
                    self.wfile.write(b": end\n\n")
                    self.wfile.flush()
                    return
                if not pending:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            return

    def _verify_watermark(self):
        ctype = self.headers.get("Content-Type", "")
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        if "multipart/form-data" not in ctype:
            raise _bad_request("expected multipart/form-data")
        msg = BytesParser(policy=HTTP_POLICY).parsebytes(
            b"Content-Type: " + ctype.encode() + b"\r\n\r\n" + raw
        )
        fields: dict[str, bytes] = {}
        for part in msg.iter_parts():
            name = part.get_param("name", header="content-disposition")
            if name:
                fields[name] = part.get_payload(decode=True) or b""
        if "image" not in fields:
            raise _bad_request("multipart field 'image' is required")
        try:
            img = raster.read_ppm(fields["image"])
        except raster.RasterError as exc:
            raise _bad_request(f"bad image: {exc}")
        key_text = fields.get("key", b"").decode("ascii", "replace").strip()
        try:
            key = int(key_text, 16) if key_text else watermark.WatermarkConfig.key
        except ValueError:
            raise _bad_request(f"bad key {key_text!r}")
        reference = None
        ref_text = fields.get("reference", b"").decode("ascii", "replace").strip()
        if ref_text:
            try:
                reference = watermark.payload_from_hex(ref_text)
            except (ValueError, watermark.WatermarkError) as exc:
                raise _bad_request(f"bad reference payload: {exc}")
        try:
            result = watermark.detect(img, watermark.WatermarkConfig(key=key), reference)
        except watermark.ImageTooSmall as exc:
            raise _bad_request(str(exc))
        return self._send_json(
            200,
            {
                "crc_ok": result.crc_ok,
                "payload_hex": result.payload().hex(),
                "recovery_rate": result.recovery_rate,
                "sync": list(result.sync),
                "scale": result.scale_used,
                "confidence": result.confidence,
            },
        )


def serve(bind: str = "127.0.0.1:8787", store_dir: str | Path = "aegis-store") -> ThreadingHTTPServer:
    """Start the service (non-blocking); returns the server object."""
    host, _, port = bind.partition(":")
    store = SessionStore(store_dir)
    handler = type("BoundHandler", (GatewayHandler,), {"store": store})
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port or 8787)), handler)
    server.store = store
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
