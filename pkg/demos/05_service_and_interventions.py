"""Driving the HTTP gateway: create an interactive session, watch its SSE
stream, edit and approve the plan, step to completion, then verify the
artifact's watermark over the wire.
"""

import json
import threading

import requests

from aegis import gateway

server = gateway.serve("127.0.0.1:0", "demo-out/store")
host, port = server.server_address[:2]
base = f"http://{host}:{port}"
print(f"gateway at {base}")

r = requests.post(
    f"{base}/sessions",
    json={
        "prompt": "Red dragon flying above a medieval castle during a dramatic sunset",
        "config": {"mode": "interactive", "eta": 0.2, "seed": 31, "fixed_clock": 1_700_000_000},
    },
)
sid = r.json()["id"]
print(f"created session {sid}: {r.json()['state_label']}")


def tail_events():
    with requests.get(f"{base}/sessions/{sid}/events", stream=True, timeout=60) as resp:
        for line in resp.iter_lines():
            text = line.decode()
            if text.startswith("data: "):
                ev = json.loads(text[6:])
                print(f"  [sse #{ev['seq']}] {ev['state_before']} -> {ev['state_after']}: {ev['summary']}")
                if ev["state_after"] == "done":
                    return


watcher = threading.Thread(target=tail_events, daemon=True)
watcher.start()

requests.post(
    f"{base}/sessions/{sid}/interventions",
    json={"kind": "edit_plan",
          "edit": {"op": "set_attribute", "target": "st-0-dragon", "payload": {"color": "#22AA22"}}},
)
requests.post(f"{base}/sessions/{sid}/interventions", json={"kind": "approve_plan"})
requests.post(f"{base}/sessions/{sid}/step", json={"count": 100})
watcher.join(timeout=30)

resource = requests.get(f"{base}/sessions/{sid}").json()
print(f"\nfinal state: {resource['state_label']}, payload {resource['payload_hex']}")

artifact = requests.get(f"{base}/sessions/{sid}/artifact").content
verdict = requests.post(
    f"{base}/verify/watermark",
    files={"image": ("artifact.ppm", artifact)},
    data={"reference": resource["payload_hex"]},
).json()
print(f"verify over the wire: crc_ok={verdict['crc_ok']} recovery={verdict['recovery_rate']}")

server.shutdown()
