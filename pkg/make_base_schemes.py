import argparse
from dotenv import load_dotenv

from construct import DATA_DIR, ConstructionError, walk_deg2_base
from tensor import is_multiplication_tensor, save_scheme

# Load environment variables
load_dotenv()


def make_base_schemes(degrees=(5, 6, 7), seed=0, max_steps=200_000, force=False):
    """Write data/deg2_base_<n>.json, the rank 2n+1 starting blocks of the (n,2) family."""
    written = []
    for n in degrees:
        path = DATA_DIR / f"deg2_base_{n}.json"
        if path.exists() and not force:
            print(f"⚠ [deg2] {path.name} already bundled, skipping (use --force)")
            continue
        try:
            s = walk_deg2_base(n, seed=seed, max_steps=max_steps)
        except ConstructionError as e:
            print(f"✗ [deg2] ({n},2): {e}")
            continue
        if not is_multiplication_tensor(s) or s.rank != 2 * n + 1:
            print(f"✗ [deg2] ({n},2): walk ended at rank {s.rank}")
            continue
        # bundled file is replaced only once the new scheme checks out
        save_scheme(s, path)
        print(f"✓ [deg2] ({n},2) rank {s.rank} saved to {path}")
        written.append(path)
    return written


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Regenerate the bundled (n,2) base schemes over Z2.")
    parser.add_argument("--degrees", type=int, nargs="+", default=[5, 6, 7], help="Degrees n to build (default: 5 6 7)")
    parser.add_argument("--seed", type=int, default=0, help="Walk seed (default: 0)")
    parser.add_argument("--max-steps", type=int, default=200_000, help="Flip budget (default: 200000)")
    parser.add_argument("--force", action="store_true", help="Overwrite bundled files")

    args = parser.parse_args()

    make_base_schemes(args.degrees, args.seed, args.max_steps, args.force)
