"""End-to-end pipeline walk-through.

A freeform prompt is decomposed into subtasks, each subtask is generated and
reviewed against its constraints, accepted components are composited, and
the result leaves the pipeline carrying a blind watermark plus a verified
provenance ledger.  Outputs land in demo-out/.
"""

from pathlib import Path

from aegis import orchestrator, provenance, raster, watermark

OUT = Path("demo-out")
OUT.mkdir(exist_ok=True)

cfg = orchestrator.SessionConfig(
    mode="auto",
    eta=0.25,          # generator infidelity: high enough to trigger retries
    tau=0.80,          # reviewer acceptance threshold
    seed=2024,
    fixed_clock=1_700_000_000,
    account_id="studio-42",
    project_id="dragon-poster",
)

session = orchestrator.start_session(
    "Red dragon flying above a medieval castle during a dramatic sunset", cfg
)
print(f"session {session.id}")
print("plan:")
for st in session.plan.subtasks:
    print(f"  {st.id:22s} {st.kind:10s} {st.constraints}")

orchestrator.run(session)
print(f"\nfinal state: {session.state_label()}")

for sid, attempts in session.attempts.items():
    trail = ", ".join(f"#{a.number}={a.score.value:.3f}" for a in attempts)
    kept = session.components[sid].attempt
    print(f"  {sid}: {trail} -> kept #{kept}")

print(f"\nwatermark payload: {session.payload.hex()}")
print(f"imperceptibility:  {session.artifact_psnr:.2f} dB")

det = watermark.detect(session.artifact, session.watermark_config(), reference=session.payload)
print(f"blind detection:   crc_ok={det.crc_ok} recovery={det.recovery_rate:.3f}")

violation = provenance.verify(session.ledger)
print(f"ledger:            {len(session.ledger.records)} records, "
      f"{'intact' if violation is None else violation}")

(OUT / "artifact.ppm").write_bytes(raster.write_ppm(session.artifact))
(OUT / "session.provlog").write_bytes(provenance.export(session.ledger))
print(f"\nwrote {OUT}/artifact.ppm and {OUT}/session.provlog")
