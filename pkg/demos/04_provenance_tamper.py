"""Tamper-evidence of the hash-chained ledger: any edit to an exported log
is caught by verification, byte by byte.
"""

from aegis import provenance

ledger = provenance.Ledger("sess-demo")
for i, (agent, action) in enumerate(
    [
        ("planner", "plan.created"),
        ("generator", "component.generated"),
        ("reviewer", "review.scored"),
        ("human", "review.overridden"),
        ("integrator", "composite.created"),
        ("protector", "watermark.embedded"),
    ]
):
    ledger = provenance.append(
        ledger, timestamp=1_700_000_000_000 + i, agent=agent, action=action, params={"step": i}
    )

data = provenance.export(ledger)
print(f"{len(ledger.records)} records, {len(data)} bytes exported")
print("verify:", provenance.verify(ledger) or "ok")

# Flip one byte in the middle of record 3's params.
pos = data.index(b'"step":3') + 8
mutated = data[:pos] + bytes([data[pos] ^ 0x01]) + data[pos + 1 :]
try:
    provenance.import_ledger(mutated)
    print("tampered import: NOT DETECTED (bug!)")
except (provenance.ParseError, provenance.VerificationFailed) as exc:
    print(f"tampered import rejected: {exc}")

# Exhaustive: every single-byte flip must be caught.
undetected = 0
for pos in range(len(data)):
    candidate = data[:pos] + bytes([data[pos] ^ 0x01]) + data[pos + 1 :]
    try:
        provenance.import_ledger(candidate)
        undetected += 1
    except (provenance.ParseError, provenance.VerificationFailed):
        pass
print(f"exhaustive byte flips: {len(data)} tried, {undetected} undetected")
