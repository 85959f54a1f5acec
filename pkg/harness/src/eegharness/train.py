"""Entry point: cross-validated training driven by a single JSON config.

    python -m eegharness.train --config config.json

Config keys (defaults in parentheses): dataset ("bonn"), data_dir,
out_dir ("harness_out"), sets (["A", "E"]), window (64), qat_bits
(null), epochs (50), lr (1e-3), seed (0), folds (5).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets, training


def run(config: dict) -> dict:
    dataset = config.get("dataset", "bonn")
    if dataset != "bonn":
        raise ValueError(
            f"unsupported dataset {dataset!r}; prediction pipelines are "
            "driven programmatically (see labeling/features modules)"
        )
    X, y = datasets.bonn_windows(config["data_dir"],
                                 sets=tuple(config.get("sets", ("A", "E"))),
                                 window=int(config.get("window", 64)))
    result = training.train_cv(
        X, y,
        qat_bits=config.get("qat_bits"),
        epochs=int(config.get("epochs", training.DEFAULT_EPOCHS)),
        lr=float(config.get("lr", training.DEFAULT_LR)),
        seed=int(config.get("seed", 0)),
        n_folds=int(config.get("folds", 5)),
    )
    paths = training.export_best(result, X, y, config.get("out_dir", "harness_out"))
    return {"summary": result.summary, "paths": {k: str(v) for k, v in paths.items()}}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="eegharness.train")
    parser.add_argument("--config", required=True, help="JSON config file")
    args = parser.parse_args(argv)
    try:
        config = json.loads(Path(args.config).read_text())
        outcome = run(config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(outcome["summary"], indent=2, sort_keys=True))
    print(f"exported: {outcome['paths']}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
