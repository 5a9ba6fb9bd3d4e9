import argparse
import os
import sys

sys.path.append(os.getcwd())
from evaluation.eval_harness import main as run_harness


def main():
    parser = argparse.ArgumentParser(description="Run the preset evaluation suite")
    parser.add_argument("--config", default=None)
    parser.add_argument("--manifold", default=None, help="SMAN file (default: train the synthetic car manifold)")
    args = parser.parse_args()

    out = run_harness(args.config, args.manifold)
    print("results_csv", os.path.abspath("evaluation/results.csv"))
    print("summary_json", os.path.abspath("evaluation/summary.json"))
    print("mean_f1", out["summary"].get("mean_f1"))


if __name__ == "__main__":
    main()
