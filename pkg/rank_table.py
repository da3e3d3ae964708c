import os
import json
import argparse
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from dotenv import load_dotenv

from coeff import CoeffDomain
from construct import DATA_DIR
from search import SearchConfig, SplitPolicy, search_campaign
from lift import lift_and_classify

# Load environment variables
load_dotenv()

TABLE_FILE = DATA_DIR / "rank_table.json"


def load_rank_table(path=TABLE_FILE):
    """{(n, m): {"rank": r, "lift": class}} for the bundled Z2 table (n >= m)."""
    with open(path) as f:
        doc = json.load(f)
    return {(c["n"], c["m"]): {"rank": c["rank"], "lift": c["lift"]} for c in doc["cells"]}


def select_cells(table, max_degree=3, cells=None):
    if cells:
        return [cell for cell in cells if cell in table]
    return sorted(cell for cell in table if cell[0] <= max_degree)


def run_cell(n, m, cfg, table, lift=False):
    """Search one cell and compare the best rank (and lifting class) with the table."""
    expected = table[n, m]
    if cfg.target_rank is None:
        cfg = replace(cfg, target_rank=expected["rank"])
    result = search_campaign(n, m, cfg)
    row = {
        "n": n,
        "m": m,
        "rank": result.rank,
        "table_rank": expected["rank"],
        "matches": result.rank == expected["rank"],
        "beats_table": result.rank < expected["rank"],
        "walk": result.walk_id,
        "steps": result.steps_taken,
    }
    if lift:
        report = lift_and_classify(result.best)
        row["lift"] = report.table_class
        row["table_lift"] = expected["lift"]
    return row


def run_table(cells, cfg, table, lift=False):
    print(f"\n{'='*70}")
    print(f"Z2 RANK TABLE CAMPAIGN ({len(cells)} cells, seed {cfg.seed})")
    print(f"{'='*70}\n")

    results = []
    for i, (n, m) in enumerate(cells, 1):
        print(f"[{i}/{len(cells)}] ({n},{m})")
        row = run_cell(n, m, cfg, table, lift=lift)
        if row["beats_table"]:
            print(f"  ✓ rank {row['rank']} (table {row['table_rank']}, improved!)")
        elif row["matches"]:
            print(f"  ✓ rank {row['rank']}")
        else:
            print(f"  ⚠ rank {row['rank']} (table {row['table_rank']})")
        if lift:
            print(f"    lift: {row['lift']} (table {row['table_lift']})")
        results.append(row)

    print(f"\n{'='*70}")
    print(f"RESULTS")
    print(f"{'='*70}\n")
    print(f"Cells matching the table: {sum(1 for r in results if r['matches'])}/{len(results)}")
    print(f"Cells above the table rank: {sum(1 for r in results if r['rank'] > r['table_rank'])}")
    return results


def save_results(results, cfg, output_file=None):
    if output_file is None:
        output_dir = Path(os.getenv("POLYFLIP_OUTPUT_DIR", "output"))
        output_dir.mkdir(parents=True, exist_ok=True)
        output_file = output_dir / "rank_table_results.json"
    output_file = Path(output_file)
    doc = {
        "seed": cfg.seed,
        "max_steps": cfg.max_steps,
        "walks": cfg.walks,
        "timestamp": datetime.now().isoformat(),
        "cells": results,
    }
    with open(output_file, "w") as f:
        json.dump(doc, f, indent=2)
    print(f"\nResults saved to: {output_file}\n")
    return output_file


def parse_cells(text):
    cells = []
    for item in text.split(";"):
        n, m = item.split(",")
        cells.append((int(n), int(m)))
    return cells


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Re-run the Z2 rank table with flip-graph walks.")
    parser.add_argument("--max-degree", type=int, default=3, help="Largest n to run (default: 3)")
    parser.add_argument("--cells", type=str, default=None, help="Explicit cells, e.g. '2,2;3,1' (default: all up to --max-degree)")
    parser.add_argument("--seed", type=int, default=0, help="Campaign seed (default: 0)")
    parser.add_argument("--max-steps", type=int, default=1_000_000, help="Flip budget per walk (default: 1000000)")
    parser.add_argument("--plateau", type=int, default=50_000, help="Plateau length before a split (default: 50000)")
    parser.add_argument("--walks", type=int, default=int(os.getenv("POLYFLIP_WALKS", "8")), help="Walks per cell (default: $POLYFLIP_WALKS or 8)")
    parser.add_argument("--lift", action="store_true", help="Also lift each best scheme and compare its class")
    parser.add_argument("--output", type=str, default=None, help="Results file (default: output/rank_table_results.json)")

    args = parser.parse_args()

    table = load_rank_table()
    cells = select_cells(table, args.max_degree, parse_cells(args.cells) if args.cells else None)
    cfg = SearchConfig(seed=args.seed, max_steps=args.max_steps, plateau_limit=args.plateau,
                       split_policy=SplitPolicy(), walks=args.walks, domain=CoeffDomain.gf2())
    results = run_table(cells, cfg, table, lift=args.lift)
    save_results(results, cfg, args.output)
