"""Regenerate the embedded triangle quadrature tables in src/trifr/data."""

from pathlib import Path

from trifr.polybasis import EMBEDDED_STRENGTHS, _table_name, symmetrized_rule, write_rule

DATA = Path(__file__).resolve().parents[1] / "src" / "trifr" / "data"

if __name__ == "__main__":
    for s in EMBEDDED_STRENGTHS:
        rule = symmetrized_rule(s)
        write_rule(rule, DATA / _table_name(s))
        print(f"strength {s:2d}: {len(rule)} points")
