"""Command line: one subcommand per experiment kind plus ``suite``.

    kdv5lab a2-growth --N 8,16,32,64 --out-dir results
    kdv5lab suite --config configs/acceptance.ini --jobs 2

The output directory defaults to $KDV5_OUT_DIR, then ./kdv5lab-out. The exit
status is 0 when every check passes, 1 when one fails and 2 on usage errors.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import KINDS, load_config, make_spec
from .errors import UsageError
from .experiments import SUMMARY_COLUMNS, Table, run

OUT_DIR_ENV = "KDV5_OUT_DIR"
DEFAULT_OUT_DIR = "kdv5lab-out"


def _common(p):
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    p.add_argument("--seed", type=int, help="seed for randomized kinds")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--tolerance", action="append", default=[], metavar="KEY=VALUE",
                   help="override a parameter or tolerance (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="kdv5lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, schema in KINDS.items():
        p = sub.add_parser(kind, help=f"run one {kind} experiment")
        _common(p)
        p.add_argument("--id", default=kind, help="experiment id (output subdirectory)")
        for key, (typ, default) in schema.items():
            if key == "seed":
                continue
            p.add_argument(f"--{key}", dest=f"param_{key}", metavar=typ.upper(),
                           help=f"default {default!r}")
    p = sub.add_parser("suite", help="run every experiment in a config file")
    _common(p)
    p.add_argument("--config", required=True, help="sectioned key-value config file")
    return parser


def _overrides(pairs):
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--tolerance expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _apply(spec, overrides, seed):
    values = {k: v for k, v in spec.params.items()}
    schema = KINDS[spec.kind]
    for key, value in overrides.items():
        if key not in schema:
            raise UsageError(f"{spec.id}: unknown key {key!r} for kind {spec.kind}")
        values[key] = value
    if seed is not None and "seed" in schema:
        values["seed"] = seed
    return make_spec(spec.id, spec.kind, values, f"{spec.id}: ")


def specs_from_args(args):
    overrides = _overrides(args.tolerance)
    if args.command == "suite":
        specs = load_config(args.config)
    else:
        values = {k[len("param_"):]: v for k, v in vars(args).items()
                  if k.startswith("param_") and v is not None}
        if "seed" in KINDS[args.command] and args.seed is None:
            raise UsageError(f"kind {args.command} is randomized and needs --seed")
        if args.seed is not None and "seed" in KINDS[args.command]:
            values["seed"] = str(args.seed)
        specs = [make_spec(args.id, args.command, values)]
    return [_apply(s, overrides, args.seed) for s in specs]


def execute(specs, out_dir, jobs=1):
    """Run specs (in a process pool when jobs > 1) and write all reports."""
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            bundles = list(pool.map(run, specs))
    else:
        bundles = [run(s) for s in specs]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for b in bundles:
        b.write(out_dir)
        rows.extend(b.summary_rows())
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(Table(SUMMARY_COLUMNS, rows).to_csv("summary"))
    return bundles


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        specs = specs_from_args(args)
    except UsageError as exc:
        print(f"kdv5lab: error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    bundles = execute(specs, out_dir, args.jobs)
    for b in bundles:
        status = "PASS" if b.passed else "FAIL"
        print(f"{status} {b.id} ({b.kind}, {b.seconds:.1f} s)")
        for c in b.checks:
            print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name} = {c.value:.6g} ({c.threshold})")
        for n in b.notes:
            print(f"    note: {n}")
    return 0 if all(b.passed for b in bundles) else 1


if __name__ == "__main__":
    sys.exit(main())
