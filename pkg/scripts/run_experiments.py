"""Run the desk-scale training experiments and dump their summaries as JSON.

    python scripts/run_experiments.py --out results/ [--only full no_cons ...]

Experiments:
    full        default loss, N_s=8
    no_cons     lambda_cons = 0
    no_wcd      alpha = beta = 0
    ns1, ns4    N_s = 1 and 4
    chamfer     consistency measured with Chamfer instead of aligned MSE
    single_view one partial view per training shape
    ttadapt     pretrain on spheres/cuboids, adapt on held-out cylinders
"""
import argparse
import json
import logging
import time
from pathlib import Path

from aclspc.experiments import ADAPT_SPLITS, EXPERIMENTS, HELDOUT_SPLIT, adaptation_configs, run_adaptation, run_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*")
    ap.add_argument("--epochs", type=int, help="override the epoch count (quick looks only)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    names = args.only or [*EXPERIMENTS, "ttadapt"]
    for name in names:
        t0 = time.time()
        if name == "ttadapt":
            pre_cfg, adapt_cfg = adaptation_configs()
            if args.epochs:
                pre_cfg = pre_cfg.replace(epochs=args.epochs)
            res = run_adaptation(pre_cfg, adapt_cfg, *ADAPT_SPLITS)
        else:
            cfg, train_split = EXPERIMENTS[name]
            if args.epochs:
                cfg = cfg.replace(epochs=args.epochs)
            res = run_toy(cfg, train_split, HELDOUT_SPLIT)
        summary = {"name": name, "config": res.cfg.to_dict(), "heldout": res.heldout.as_dict(),
                   "extra": res.extra, "seconds": time.time() - t0,
                   "final_loss": res.history[-1].__dict__ if res.history else None}
        (out / f"{name}.json").write_text(json.dumps(summary, indent=1))
        logging.info("%s done in %.0fs: %s", name, summary["seconds"], summary["heldout"])


if __name__ == "__main__":
    main()
