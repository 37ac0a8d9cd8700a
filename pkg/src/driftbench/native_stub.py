"""Reference external method: the native trainer behind the file protocol.

Usage (as an external command template)::

    ["{python}", "-m", "driftbench.native_stub", "{workdir}"]

``meta.json`` options select the data-selection mode and model:
``{"selection": "all_labeled", "model": {...}, "batch_plan": {...}}``.
"""
from __future__ import annotations

import sys
from pathlib import Path

from .data import BatchPlan, format_float
from .models.external import read_workdir
from .models.training import MethodSpec, ModelSpec, score, select_training_data, train


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    workdir = Path(args[0] if args else ".")
    wd = read_workdir(workdir)
    opts = wd.meta.get("options", {})
    spec = MethodSpec(
        name=opts.get("name", "native-stub"),
        selection=opts.get("selection", "all_labeled"),
        model=ModelSpec.from_dict(opts.get("model")),
        batch_plan=BatchPlan(**opts.get("batch_plan", {})),
    )
    train_sets, holdout = select_training_data(wd.view, spec.selection)
    model = train(spec, train_sets, holdout, seed=int(wd.meta["seed"]), fpr_budget=float(wd.meta["fpr_budget"]))
    scores = score(model, wd.view.test)
    (workdir / "scores.csv").write_text("".join(format_float(s) + "\n" for s in scores), encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
