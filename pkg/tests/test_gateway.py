import json
import threading
import time

import pytest
import requests

from aegis import gateway, provenance, raster

PROMPT = "Red dragon flying above a medieval castle during a dramatic sunset"

CFG = {
    "mode": "interactive",
    "eta": 0.2,
    "seed": 9,
    "fixed_clock": 1_700_000_000,
    "canvas_w": 128,
    "canvas_h": 128,
}


@pytest.fixture()
def service(tmp_path):
    server = gateway.serve("127.0.0.1:0", tmp_path / "store")
    host, port = server.server_address[:2]
    base = f"http://{host}:{port}"
    yield base, server, tmp_path / "store"
    server.shutdown()


def make_session(base, config=None, prompt=PROMPT):
    r = requests.post(f"{base}/sessions", json={"prompt": prompt, "config": config or CFG})
    assert r.status_code == 201, r.text
    return r.json()


def test_healthz(service):
    base, _, _ = service
    r = requests.get(f"{base}/healthz")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_unknown_session_404_envelope(service):
    base, _, _ = service
    r = requests.get(f"{base}/sessions/unknown")
    assert r.status_code == 404
    err = r.json()["error"]
    assert err["code"] == "not_found"
    assert "message" in err


def test_error_codes_documented_set(service):
    base, _, _ = service
    cases = [
        requests.post(f"{base}/sessions", json={"config": {}}),  # missing prompt
        requests.get(f"{base}/sessions/nope"),
        requests.post(f"{base}/sessions", json={"prompt": "qwerty asdf"}),
    ]
    for r in cases:
        assert r.json()["error"]["code"] in {
            "bad_request",
            "not_found",
            "illegal_state",
            "verification_failed",
            "internal",
        }


def test_create_and_fetch_session(service):
    base, _, _ = service
    created = make_session(base)
    sid = created["id"]
    assert created["state"] == "await_plan_approval"
    fetched = requests.get(f"{base}/sessions/{sid}").json()
    assert fetched["id"] == sid
    assert fetched["plan"]["subtasks"][0]["id"] == "st-0-dragon"
    listing = requests.get(f"{base}/sessions").json()["sessions"]
    assert any(s["id"] == sid for s in listing)


def test_bad_config_rejected(service):
    base, _, _ = service
    r = requests.post(f"{base}/sessions", json={"prompt": PROMPT, "config": {"tau": 1.5}})
    assert r.status_code == 400
    r = requests.post(f"{base}/sessions", json={"prompt": PROMPT, "config": {"nope": 1}})
    assert r.status_code == 400


def test_step_intervene_artifact_ledger_flow(service):
    base, _, store = service
    sid = make_session(base)["id"]

    # Stepping while awaiting approval is illegal.
    r = requests.post(f"{base}/sessions/{sid}/step", json={"count": 1})
    assert r.status_code == 409
    assert r.json()["error"]["code"] == "illegal_state"

    r = requests.post(
        f"{base}/sessions/{sid}/interventions",
        json={"kind": "edit_plan", "edit": {"op": "set_attribute", "target": "st-0-dragon",
                                            "payload": {"color": "#00FF00"}}},
    )
    assert r.status_code == 200
    r = requests.post(f"{base}/sessions/{sid}/interventions", json={"kind": "approve_plan"})
    assert r.status_code == 200
    assert r.json()["session"]["state_label"].startswith("generating")

    r = requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
    assert r.status_code == 200
    assert r.json()["session"]["state"] == "done"

    art = requests.get(f"{base}/sessions/{sid}/artifact")
    assert art.status_code == 200
    assert art.headers["Content-Type"] == "image/x-portable-pixmap"
    img = raster.read_ppm(art.content)
    assert (img.width, img.height) == (128, 128)

    png = requests.get(f"{base}/sessions/{sid}/artifact?format=png")
    assert png.status_code == 200
    assert png.content[:8] == b"\x89PNG\r\n\x1a\n"

    led = requests.get(f"{base}/sessions/{sid}/ledger")
    ledger = provenance.import_ledger(led.content)
    assert provenance.verify(ledger) is None
    human = [rec.action for rec in ledger.records if rec.agent == "human"]
    assert human == ["plan.edited", "plan.approved"]

    # Persistence: snapshot + provlog on disk.
    assert (store / sid / "snapshot.json").exists()
    assert (store / sid / "ledger.provlog").exists()
    assert (store / sid / "artifact.ppm").exists()


def test_artifact_404_before_done(service):
    base, _, _ = service
    sid = make_session(base)["id"]
    r = requests.get(f"{base}/sessions/{sid}/artifact")
    assert r.status_code == 404


def collect_sse(base, sid, stop_state, events, connected, last_id=None):
    headers = {"Last-Event-ID": str(last_id)} if last_id is not None else {}
    with requests.get(f"{base}/sessions/{sid}/events", stream=True, timeout=30, headers=headers) as resp:
        connected.set()
        for line in resp.iter_lines():
            text = line.decode()
            if text.startswith("data: "):
                ev = json.loads(text[6:])
                events.append(ev)
                if ev["state_after"] == stop_state:
                    return


def test_sse_stream_delivers_every_event_once_in_order(service):
    base, _, _ = service
    sid = make_session(base, config={**CFG, "mode": "auto"})["id"]
    events = []
    connected = threading.Event()
    t = threading.Thread(target=collect_sse, args=(base, sid, "done", events, connected), daemon=True)
    t.start()
    assert connected.wait(5)
    requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
    t.join(timeout=15)
    assert not t.is_alive()
    seqs = [ev["seq"] for ev in events]
    assert seqs == sorted(set(seqs))
    assert seqs[0] == 1  # full replay from the start
    resource = requests.get(f"{base}/sessions/{sid}").json()
    assert len(resource["events"]) == len(events)


def test_sse_resume_via_last_event_id(service):
    base, _, _ = service
    sid = make_session(base, config={**CFG, "mode": "auto"})["id"]
    requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
    all_events = requests.get(f"{base}/sessions/{sid}").json()["events"]
    cut = all_events[2]["seq"]
    events = []
    connected = threading.Event()
    t = threading.Thread(
        target=collect_sse, args=(base, sid, "done", events, connected), kwargs={"last_id": cut}, daemon=True
    )
    t.start()
    t.join(timeout=15)
    assert [ev["seq"] for ev in events] == [ev["seq"] for ev in all_events if ev["seq"] > cut]


def test_verify_watermark_endpoint(service):
    base, _, _ = service
    sid = make_session(base, config={**CFG, "mode": "auto", "canvas_w": 256, "canvas_h": 256})["id"]
    requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
    payload_hex = requests.get(f"{base}/sessions/{sid}").json()["payload_hex"]
    art = requests.get(f"{base}/sessions/{sid}/artifact").content

    r = requests.post(
        f"{base}/verify/watermark",
        files={"image": ("artifact.ppm", art)},
        data={"reference": payload_hex},
    )
    assert r.status_code == 200
    body = r.json()
    assert body["crc_ok"] is True
    assert body["payload_hex"] == payload_hex
    assert body["recovery_rate"] == 1.0

    r = requests.post(
        f"{base}/verify/watermark",
        files={"image": ("artifact.ppm", art)},
        data={"key": "00000000deadbeef"},
    )
    assert r.json()["crc_ok"] is False

    r = requests.post(f"{base}/verify/watermark", files={"image": ("x.ppm", b"not a ppm")})
    assert r.status_code == 400


def test_restart_restores_sessions(service, tmp_path):
    base, server, store = service
    sid = make_session(base, config={**CFG, "mode": "auto"})["id"]
    requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
    done = requests.get(f"{base}/sessions/{sid}").json()
    server.shutdown()

    server2 = gateway.serve("127.0.0.1:0", store)
    try:
        host, port = server2.server_address[:2]
        base2 = f"http://{host}:{port}"
        restored = requests.get(f"{base2}/sessions/{sid}").json()
        assert restored["state"] == "done"
        assert restored["payload_hex"] == done["payload_hex"]
        art = requests.get(f"{base2}/sessions/{sid}/artifact")
        assert art.status_code == 200
    finally:
        server2.shutdown()


def test_http_run_matches_cli_run_byte_for_byte(service, tmp_path):
    # Same prompt/seed/fixed clock through HTTP and through the CLI must
    # produce identical artifact and provlog bytes.
    from aegis.cli import main as cli_main

    config = {"mode": "auto", "eta": 0.2, "seed": 7, "fixed_clock": 0,
              "canvas_w": 256, "canvas_h": 256}
    base, _, _ = service
    sid = make_session(base, config=config)["id"]
    requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
    http_artifact = requests.get(f"{base}/sessions/{sid}/artifact").content
    http_ledger = requests.get(f"{base}/sessions/{sid}/ledger").content

    out = tmp_path / "cli"
    code = cli_main([
        "run", "--prompt", PROMPT, "--seed", "7", "--fixed-clock", "0",
        "--eta", "0.2", "--canvas", "256", "--out", str(out),
    ])
    assert code == 0
    assert (out / "artifact.ppm").read_bytes() == http_artifact
    assert (out / "ledger.provlog").read_bytes() == http_ledger


def test_mid_session_restore_can_continue(service):
    base, server, store = service
    sid = make_session(base)["id"]  # interactive, awaiting approval
    requests.post(f"{base}/sessions/{sid}/interventions", json={"kind": "approve_plan"})
    requests.post(f"{base}/sessions/{sid}/step", json={"count": 3})
    server.shutdown()

    server2 = gateway.serve("127.0.0.1:0", store)
    try:
        host, port = server2.server_address[:2]
        base2 = f"http://{host}:{port}"
        r = requests.post(f"{base2}/sessions/{sid}/step", json={"count": 100})
        assert r.status_code == 200
        assert r.json()["session"]["state"] == "done"
        led = requests.get(f"{base2}/sessions/{sid}/ledger")
        assert provenance.verify(provenance.import_ledger(led.content)) is None
    finally:
        server2.shutdown()
