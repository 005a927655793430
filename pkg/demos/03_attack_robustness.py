"""Robustness sweep over the attack suite, plus the integrated-vs-post-hoc
comparison, on a small slice of the fixture corpus.  The full 20-image
benchmark is `aegis benchmark --corpus <dir> --out benchmark.csv`.
"""

from pathlib import Path

from aegis import benchmark, corpus

fixtures = corpus.load_corpus(Path("demo-out") / "corpus")[:6]
print(f"{len(fixtures)} fixtures\n")

rows = benchmark.run_attacks(fixtures)
print(f"{'fixture':14s} {'attack':18s} {'recovery':>8s}  crc")
for r in rows:
    print(f"{r.fixture:14s} {r.attack:18s} {r.recovery_rate:8.4f}  {r.crc_ok}")

comparison = benchmark.compare_modes(fixtures, quality=75)
print(f"\nintegrated mean recovery after q=75: {comparison.integrated_mean:.4f}")
print(f"post-hoc baseline (unit-amplitude pixel mark): {comparison.posthoc_mean:.4f}")
print(f"gap: {comparison.gap * 100:.1f} points")

out = Path("demo-out") / "benchmark.csv"
benchmark.write_csv(rows + comparison.integrated_rows + comparison.posthoc_rows, out)
print(f"\nwrote {out}")
