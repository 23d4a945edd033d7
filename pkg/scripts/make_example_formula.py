"""Regenerate the shipped example formula (synthetic data, fixed seed)."""
import argparse
from pathlib import Path

from memsched.prior_predictor import fit_example_formula, save_formula

OUT = Path(__file__).resolve().parents[1] / "src" / "memsched" / "data" / "beagle_example.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alpha", type=float, default=0.2)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    formula = fit_example_formula(alpha=args.alpha, seed=args.seed)
    header = {"source": "synthetic", "generator": "gen_synthetic_beagle",
              "n_train": 4000, "n_cal": 2000, "seed": args.seed, "alpha": args.alpha}
    save_formula(formula, args.out, header=header)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
