"""Command-line entry point: ``stgd <subcommand> ...``.

Exit codes: 0 success, 1 validation / numeric failure (or gradcheck over tolerance),
2 usage error or missing input file.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import TrainConfig, load_config
from .data import generate_dataset, read_jsonl, write_jsonl
from .errors import STGDError
from .metrics import count_params, count_trainable_params
from .model import STGDModel

log = logging.getLogger("stgd")


class _UsageError(Exception):
    pass


def _existing(path, what):
    if path is not None and not Path(path).exists():
        raise _UsageError(f"{what} {path} does not exist")
    return path


def _config(args) -> TrainConfig:
    return load_config(_existing(args.config, "config file"))


def cmd_gen_data(args):
    cfg = _config(args)
    n = cfg.n_train if args.n is None else args.n
    seed = cfg.seed if args.seed is None else args.seed
    out = Path(args.out)
    if not out.parent.exists():
        raise _UsageError(f"output directory {out.parent} does not exist")
    write_jsonl(generate_dataset(cfg, n, seed), out)
    print(f"wrote {n} clips to {out}")
    return 0


def cmd_train(args):
    from .training import save_model, train

    cfg = _config(args)
    data = read_jsonl(_existing(args.data, "dataset"))
    val = read_jsonl(_existing(args.val, "validation dataset")) if args.val else None
    use_adapters = False if args.no_adapters else None
    result = train(cfg, data, val, use_adapters=use_adapters, steps=args.steps)
    path = save_model(result.model, args.out, {"steps": len(result.history)})
    last = result.history[-1]
    print(f"trained {len(result.history)} steps, final loss {last['loss']:.6f}; checkpoint {path}")
    return 0


def cmd_eval(args):
    from .training import evaluate_checkpoint

    _existing(args.ckpt, "checkpoint")
    data = read_jsonl(_existing(args.data, "dataset"))
    report = evaluate_checkpoint(args.ckpt, data)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    print(text, end="")
    return 0


def cmd_gradcheck(args):
    from .training import check_model_gradients

    cfg = _config(args)
    rep = check_model_gradients(cfg, tol=args.tol, n_coords=args.n_coords)
    for name, err in rep.per_param().items():
        print(f"{err:10.3e}  {name}")
    w = rep.worst()
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status}: max relative error {rep.max_rel_error:.3e} (tol {args.tol:g}) over {rep.n_checked} "
          f"coordinates; worst {w.param}{list(w.index)}")
    return 0 if rep.passed else 1


def cmd_count_params(args):
    cfg = _config(args)
    model = STGDModel(cfg, False if args.no_adapters else None)
    total = count_params(model)
    trainable = count_trainable_params(model)
    print(f"total      {total}")
    print(f"frozen     {total - trainable}")
    print(f"trainable  {trainable}")
    print(f"fraction   {trainable / total:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stgd", description="Adapter-tuned video grounding on synthetic clips.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic JSONL dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train adapters and heads, write a checkpoint")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--val", help="optional validation JSONL, evaluated every log_every steps")
    t.add_argument("--steps", type=int, help="override config steps")
    t.add_argument("--no-adapters", action="store_true", help="heads-only baseline")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint, write a JSON report")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of all trainable gradients")
    c.add_argument("--config")
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--n-coords", type=int, default=20)
    c.set_defaults(func=cmd_gradcheck)

    n = sub.add_parser("count-params", help="print parameter counts")
    n.add_argument("--config")
    n.add_argument("--no-adapters", action="store_true")
    n.set_defaults(func=cmd_count_params)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"stgd {args.command}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"stgd {args.command}: {e}", file=sys.stderr)
        return 2
    except (STGDError, ValueError, ArithmeticError) as e:
        print(f"stgd {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
