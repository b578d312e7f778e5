"""Command line interface.

Subcommands: ``train``, ``eval``, ``ablate``, ``lpa``, ``gen-data``,
``gradcheck``.  Exit codes: 0 success, 1 run error, 2 config/data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import gen_planted_partition, load_dataset, save_bundle
from .errors import ConfigError, DataError, EngineError
from .gradcheck import run_suite
from .graph import sym_norm_adj
from .label_tricks import inference_label_input
from .lpa import LpaConfig, lpa_iterate, lpa_predict
from .metrics import accuracy
from .train import (
    ablation_json,
    ablation_table_md,
    layer_specs_from_config,
    metrics_to_json,
    run_ablation,
    train,
)

GRADCHECK_THRESHOLD = 1e-4


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_bundle(cfg: RunConfig, data_override: str | None):
    path = data_override or cfg.data_path
    if not path:
        raise ConfigError("no dataset path given (data.path or --data)")
    return load_dataset(path)


def _single_run_table(cfg: RunConfig, bundle, result) -> str:
    cell = (f"{100 * result.mean:.2f} ± {100 * result.std:.2f}"
            if len(result.per_seed) > 1 else f"{100 * result.mean:.2f}")
    return (
        "| dataset | model | loss | label trick | metric |\n"
        "| --- | --- | --- | --- | --- |\n"
        f"| {bundle.meta.name} | {cfg.model_kind} | {cfg.loss.kind} | "
        f"{'on' if cfg.label_trick.enabled else 'off'} | {cell} |\n"
    )


def _save_model(outdir: Path, cfg: RunConfig, bundle, store) -> None:
    arrays = {p.name: p.value for p in store.params()}
    np.savez(outdir / "params.npz", **arrays)
    specs = layer_specs_from_config(cfg, bundle.num_features,
                                    bundle.labels.num_classes)
    (outdir / "model.json").write_text(json.dumps({
        "specs": [s.to_dict() for s in specs],
        "config": cfg.to_flat_dict(),
    }, indent=2), encoding="utf-8")


def cmd_train(args) -> int:
    cfg = RunConfig.from_file(args.config, args.set or [])
    bundle = _load_bundle(cfg, args.data)
    result, store, logs = train(cfg, bundle)
    outdir = Path(args.out or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_text(outdir / "metrics.json",
                json.dumps(metrics_to_json(cfg, bundle, result), indent=2))
    _write_text(outdir / "table.md", _single_run_table(cfg, bundle, result))
    _write_text(outdir / "log.txt", "\n".join(logs) + "\n")
    _save_model(outdir, cfg, bundle, store)
    print(f"{bundle.meta.name}: test {result.metric_name} "
          f"{100 * result.mean:.2f} ± {100 * result.std:.2f} "
          f"({len(cfg.seeds)} seed(s)); outputs in {outdir}")
    return 0


def cmd_eval(args) -> int:
    from .layers import LayerSpec, build_model
    from .train import evaluate

    model_dir = Path(args.model_dir)
    manifest = json.loads((model_dir / "model.json").read_text(encoding="utf-8"))
    cfg = RunConfig.from_raw(manifest["config"])
    bundle = _load_bundle(cfg, args.data)
    rng = np.random.default_rng(0)
    specs = [LayerSpec(**d) for d in manifest["specs"]]
    model = build_model(specs, bundle.graph, rng, dropout=cfg.dropout)
    saved = np.load(model_dir / "params.npz")
    for p in model.store.params():
        np.copyto(p.value, saved[p.name])
    valid = evaluate(model, cfg, bundle, bundle.labels.valid_idx)
    test = evaluate(model, cfg, bundle, bundle.labels.test_idx)
    print(f"valid {100 * valid:.2f}  test {100 * test:.2f}")
    if args.out:
        _write_text(Path(args.out) / "eval_metrics.json", json.dumps({
            "schema": 1, "valid_metric": valid, "test_metric": test,
        }, indent=2))
    return 0


def cmd_ablate(args) -> int:
    cfg = RunConfig.from_file(args.config, args.set or [])
    bundle = _load_bundle(cfg, args.data)
    axes: dict[str, list[str]] = {}
    for spec in args.axis or []:
        if "=" not in spec:
            raise ConfigError("--axis must look like key=value1,value2")
        key, _, values = spec.partition("=")
        axes[key.strip()] = [v.strip() for v in values.split(",") if v.strip()]
    if not axes:
        raise ConfigError("ablate needs at least one --axis")
    cells = run_ablation(cfg, axes, bundle)
    outdir = Path(args.out or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_text(outdir / "metrics.json",
                json.dumps(ablation_json(cfg, cells), indent=2))
    table = ablation_table_md(bundle.meta.name, cfg.model_kind, cells)
    _write_text(outdir / "table.md", table)
    _write_text(outdir / "log.txt", "\n".join(
        f"{c.name}: {'error ' + c.error if c.error else f'{100 * c.result.mean:.2f}'}"
        for c in cells) + "\n")
    print(table)
    failed = [c for c in cells if c.error]
    if failed:
        print(f"{len(failed)} cell(s) failed; see metrics.json", file=sys.stderr)
        return 1
    return 0


def cmd_lpa(args) -> int:
    bundle = load_dataset(args.data)
    cfg = LpaConfig(lam=args.lam, max_iters=args.max_iters, tol=args.tol)
    adj = sym_norm_adj(bundle.graph, renormalize=args.renormalize)
    y0 = inference_label_input(bundle.labels)
    y, iters = lpa_iterate(adj, y0, cfg)
    test_acc = accuracy(y, bundle.labels, bundle.labels.test_idx)
    print(f"LPA converged in {iters} iterations; "
          f"test accuracy {100 * test_acc:.2f}")
    if args.out:
        _write_text(Path(args.out) / "metrics.json", json.dumps({
            "schema": 1, "method": "lpa", "lambda": cfg.lam,
            "iters": iters, "test_accuracy": test_acc,
        }, indent=2))
    _ = lpa_predict(y)
    return 0


def cmd_gen_data(args) -> int:
    rng = np.random.default_rng(args.seed)
    bundle = gen_planted_partition(
        n=args.n, num_classes=args.classes, p_in=args.p_in, p_out=args.p_out,
        feat_dim=args.feat_dim, feat_noise=args.feat_noise,
        label_rate=args.label_rate, rng=rng,
    )
    save_bundle(bundle, args.out)
    print(f"wrote {bundle.meta.name}: {bundle.graph.num_nodes} nodes, "
          f"{bundle.graph.num_edges} arcs -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(seed=args.seed)
    worst_name = max(results, key=results.get)
    worst = results[worst_name]
    for name in sorted(results):
        print(f"{name:24s} {results[name]:.3e}")
    print(f"worst: {worst:.3e} ({worst_name})")
    return 0 if worst < GRADCHECK_THRESHOLD else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodeclf",
                                description="Node-classification engine")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--set", action="append", metavar="key=value")
    t.add_argument("--data", help="override data.path")
    t.add_argument("--out", help="override output.dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model")
    e.add_argument("--model-dir", required=True)
    e.add_argument("--data", help="override data.path")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run an ablation grid")
    a.add_argument("--config", required=True)
    a.add_argument("--set", action="append", metavar="key=value")
    a.add_argument("--axis", action="append", metavar="key=v1,v2",
                   help="axis to vary; label_trick.mode=off,input,reuse is special")
    a.add_argument("--data")
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    l = sub.add_parser("lpa", help="label propagation baseline")
    l.add_argument("--data", required=True)
    l.add_argument("--lambda", dest="lam", type=float, default=0.9)
    l.add_argument("--max-iters", type=int, default=1000)
    l.add_argument("--tol", type=float, default=1e-9)
    l.add_argument("--renormalize", action="store_true")
    l.add_argument("--out")
    l.set_defaults(func=cmd_lpa)

    g = sub.add_parser("gen-data", help="generate a planted-partition dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--p-in", type=float, default=0.05)
    g.add_argument("--p-out", type=float, default=0.005)
    g.add_argument("--feat-dim", type=int, default=16)
    g.add_argument("--feat-noise", type=float, default=1.0)
    g.add_argument("--label-rate", type=float, default=0.6)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except EngineError as e:
        print(f"run error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
