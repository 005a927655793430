"""Command-line interface: run the pipeline, serve the HTTP gateway, verify
watermarks and ledgers, build the fixture corpus, run the benchmark.

Exit codes: 0 success, 1 domain failure (pipeline failed, watermark not
detected, ledger violation), 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from pathlib import Path

from . import benchmark, corpus, gateway, orchestrator, provenance, raster, watermark


def _fail_usage(message: str) -> int:
    print(message, file=sys.stderr)
    return 2


def _parse_key(text: str | None) -> int:
    if text is None:
        return watermark.WatermarkConfig.key
    return int(text, 16)


def cmd_run(args) -> int:
    if bool(args.prompt) == bool(args.prompt_file):
        return _fail_usage("run: provide exactly one of --prompt or --prompt-file")
    try:
        prompt = args.prompt or Path(args.prompt_file).read_text("utf-8")
    except OSError as exc:
        return _fail_usage(f"run: cannot read prompt file: {exc}")
    try:
        cfg = orchestrator.SessionConfig(
            mode=args.mode,
            tau=args.tau,
            max_attempts=args.max_attempts,
            eta=args.eta,
            seed=args.seed,
            lam=args.strength,
            key=_parse_key(args.key),
            theta=args.theta,
            canvas_w=args.canvas,
            canvas_h=args.canvas,
            account_id=args.account,
            project_id=args.project,
            fixed_clock=args.fixed_clock,
        )
    except (orchestrator.OrchestratorError, ValueError) as exc:
        return _fail_usage(f"run: {exc}")

    try:
        session = orchestrator.start_session(prompt, cfg)
    except orchestrator.PromptRejected as exc:
        return _fail_usage(f"run: prompt rejected: {exc}")
    orchestrator.run(session)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ledger.provlog").write_bytes(provenance.export(session.ledger))
    report = {
        "session_id": session.id,
        "state": session.state,
        "subtasks": [
            {
                "id": sid,
                "attempts": [
                    {"number": a.number, "score": a.score.value if a.score else None}
                    for a in attempts
                ],
                "accepted": session.components[sid].attempt if sid in session.components else None,
            }
            for sid, attempts in session.attempts.items()
        ],
    }
    if session.state == orchestrator.DONE:
        (out / "artifact.ppm").write_bytes(raster.write_ppm(session.artifact))
        report["psnr_db"] = session.artifact_psnr
        report["payload_hex"] = session.payload.hex()
    else:
        report["failure_reason"] = session.failure_reason or session.state_label()
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))

    print(f"session {session.id}: {session.state_label()}")
    for st in report["subtasks"]:
        scores = ", ".join(
            f"#{a['number']}={a['score']:.3f}" if a["score"] is not None else f"#{a['number']}=?"
            for a in st["attempts"]
        )
        print(f"  {st['id']}: {scores} -> accepted #{st['accepted']}")
    if session.state == orchestrator.DONE:
        print(f"  psnr: {session.artifact_psnr:.2f} dB  payload: {session.payload.hex()}")
        return 0
    print(f"  failed: {report.get('failure_reason')}", file=sys.stderr)
    return 1


def cmd_serve(args) -> int:
    store = args.store or os.environ.get("AEGIS_STORE") or "aegis-store"
    try:
        server = gateway.serve(args.bind, store)
    except OSError as exc:
        return _fail_usage(f"serve: cannot bind {args.bind}: {exc}")
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port} (store: {store})", flush=True)
    try:
        threading.Event().wait()  # request threads do the work
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_verify_watermark(args) -> int:
    try:
        img = raster.read_ppm(Path(args.image).read_bytes())
    except (OSError, raster.RasterError) as exc:
        return _fail_usage(f"verify-watermark: {exc}")
    reference = None
    if args.reference:
        try:
            reference = watermark.payload_from_hex(args.reference)
        except (ValueError, watermark.WatermarkError) as exc:
            return _fail_usage(f"verify-watermark: bad reference: {exc}")
    try:
        cfg = watermark.WatermarkConfig(key=_parse_key(args.key), lam=args.strength)
        result = watermark.detect(img, cfg, reference)
    except (ValueError, watermark.WatermarkError) as exc:
        return _fail_usage(f"verify-watermark: {exc}")
    print(f"crc_ok: {result.crc_ok}")
    print(f"payload: {result.payload().hex()}")
    if result.recovery_rate is not None:
        print(f"recovery_rate: {result.recovery_rate:.6f}")
    print(f"sync: dx={result.sync[0]} dy={result.sync[1]}  scale: {result.scale_used}")
    print(f"confidence: {result.confidence:.3f}")
    return 0 if result.crc_ok else 1


def cmd_verify_ledger(args) -> int:
    try:
        data = Path(args.provlog).read_bytes()
    except OSError as exc:
        return _fail_usage(f"verify-ledger: {exc}")
    try:
        ledger = provenance.import_ledger(data, verify_chain=False)
    except provenance.ParseError as exc:
        print(f"invalid: parse error: {exc}")
        return 1
    violation = provenance.verify(ledger)
    if violation is not None:
        print(f"invalid: {violation.kind} at record {violation.index}")
        return 1
    print(f"ok: {len(ledger.records)} records")
    return 0


def cmd_corpus(args) -> int:
    paths = corpus.build_corpus(args.out)
    print(f"{len(paths)} fixtures in {args.out}")
    return 0


def cmd_benchmark(args) -> int:
    fixtures = corpus.load_corpus(args.corpus)
    cfg = watermark.WatermarkConfig(lam=args.strength, key=_parse_key(args.key))
    attacks = args.attacks.split(",") if args.attacks else None
    if attacks:
        unknown = [a for a in attacks if a not in benchmark.ATTACKS]
        if unknown:
            return _fail_usage(f"benchmark: unknown attacks {unknown}")
    rows = benchmark.run_attacks(fixtures, cfg, attacks)
    comparison = benchmark.compare_modes(fixtures, cfg)
    rows += comparison.integrated_rows + comparison.posthoc_rows
    benchmark.write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    print(
        f"integrated mean recovery {comparison.integrated_mean:.4f}, "
        f"post-hoc {comparison.posthoc_mean:.4f}, gap {comparison.gap:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aegis")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline end to end")
    run.add_argument("--prompt")
    run.add_argument("--prompt-file")
    run.add_argument("--out", default="aegis-out")
    run.add_argument("--mode", choices=["auto", "interactive"], default="auto")
    run.add_argument("--tau", type=float, default=0.70)
    run.add_argument("--max-attempts", type=int, default=3)
    run.add_argument("--eta", type=float, default=0.0)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--lambda", dest="strength", type=float, default=4.0)
    run.add_argument("--key", help="64-bit key, hex")
    run.add_argument("--theta", type=float, default=0.3)
    run.add_argument("--canvas", type=int, default=512)
    run.add_argument("--account", default="acct-demo")
    run.add_argument("--project", default="proj-demo")
    run.add_argument("--fixed-clock", type=int)
    run.set_defaults(fn=cmd_run)

    serve_p = sub.add_parser("serve", help="start the HTTP gateway")
    serve_p.add_argument("--bind", default="127.0.0.1:8787")
    serve_p.add_argument("--store", help="session store directory (or AEGIS_STORE)")
    serve_p.set_defaults(fn=cmd_serve)

    vw = sub.add_parser("verify-watermark", help="detect a watermark in a PPM image")
    vw.add_argument("image")
    vw.add_argument("--key")
    vw.add_argument("--lambda", dest="strength", type=float, default=4.0)
    vw.add_argument("--reference", help="expected payload, 16 hex chars")
    vw.set_defaults(fn=cmd_verify_watermark)

    vl = sub.add_parser("verify-ledger", help="verify a .provlog hash chain")
    vl.add_argument("provlog")
    vl.set_defaults(fn=cmd_verify_ledger)

    cp = sub.add_parser("corpus", help="build the 20-image fixture corpus")
    cp.add_argument("--out", default="aegis-corpus")
    cp.set_defaults(fn=cmd_corpus)

    bm = sub.add_parser("benchmark", help="robustness benchmark -> CSV")
    bm.add_argument("--corpus", default="aegis-corpus")
    bm.add_argument("--out", default="benchmark.csv")
    bm.add_argument("--attacks", help="comma-separated attack names")
    bm.add_argument("--lambda", dest="strength", type=float, default=4.0)
    bm.add_argument("--key")
    bm.set_defaults(fn=cmd_benchmark)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
