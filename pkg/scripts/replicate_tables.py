"""Simulation study over the built-in scenarios: one summary row per scenario.

Example (desk scale, about 5 minutes per scenario on one core)::

    python3 scripts/replicate_tables.py --scenarios sep-05 --replicates 10 --out results/table_sep.csv

``--scenarios all-sep`` / ``all-gn`` select whole families; ``--replicates 200``
matches the full study size and is meant for overnight runs.
"""

import argparse
import sys
import time

from stlgcp import io
from stlgcp.scenarios import CATALOG, get_scenario, replicate_scenario, table_header, table_row


def resolve(names):
    out = []
    for name in names:
        if name in ("all-sep", "all-gn"):
            prefix = name[4:] + "-"
            out += [s for s in CATALOG if s.startswith(prefix)]
        else:
            out.append(get_scenario(name).id)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", nargs="+", default=["sep-05"])
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--n-expected", type=float, default=1000.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="table.csv")
    args = ap.parse_args(argv)
    ids = resolve(args.scenarios)
    families = {CATALOG[s].model.family for s in ids}
    if len(families) > 1:
        ap.error("pick scenarios from one family per table (sep-* or gn-*)")
    rows = []
    for sid in ids:
        start = time.perf_counter()
        row = replicate_scenario(CATALOG[sid], args.replicates, args.seed, n_jobs=args.threads,
                                 n_expected=args.n_expected)
        rows.append(table_row(row))
        summary = "  ".join(f"{k}: median {row[k]['median']:.3g} mean {row[k]['mean']:.3g} (ref {row['reference_mean'][k]})"
                            for k in row["true"])
        print(f"{sid} [{time.perf_counter() - start:.0f} s]  {summary}", flush=True)
    io.write_csv(args.out, table_header(CATALOG[ids[0]].names), rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
