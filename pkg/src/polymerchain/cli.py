"""Command line interface.

    polymerchain scan-critical SPEC [--seed N] [--threads N] [--out DIR]
    polymerchain lyapunov | ids | levels | deviations | transport | exponents | identities SPEC ...
    polymerchain run SPEC ...            (any kind)
    polymerchain plot CSV --kind {lyapunov,ids,transport} [--out FILE] [--q Q]

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .config import parse_spec
from .errors import NumericalError, ValidationError
from .plot import PLOT_KINDS, plot
from .runner import VERBS, output_path, run, write_report

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def bundled_spec(name: str) -> Path:
    """Path of a spec shipped with the package, e.g. ``dimer_0.5.spec``."""
    return Path(str(resources.files("polymerchain") / "specs" / name))


def _resolve_spec(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    cand = bundled_spec(arg if arg.endswith(".spec") else arg + ".spec")
    return cand if cand.exists() else p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polymerchain",
                                 description="Random polymer chains near critical energies.")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in list(VERBS) + ["run"]:
        kind = f"kind {VERBS[verb]}" if verb in VERBS else "any kind"
        p = sub.add_parser(verb, help=f"run a spec of {kind}")
        p.add_argument("spec", help="spec file, or the name of a bundled spec")
        p.add_argument("--seed", type=int, default=None, help="override the spec seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (results do not depend on it)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--svg", action="store_true", help="also write an SVG plot")
    p = sub.add_parser("plot", help="render a report CSV as SVG")
    p.add_argument("csv")
    p.add_argument("--kind", required=True, choices=sorted(PLOT_KINDS))
    p.add_argument("--out", default=None, help="SVG file")
    p.add_argument("--q", type=float, default=2.0, help="moment exponent for transport plots")
    sub.add_parser("list-specs", help="print the bundled spec names")
    return ap


def _main(args) -> int:
    if args.verb == "list-specs":
        for p in sorted((resources.files("polymerchain") / "specs").iterdir(),
                        key=lambda x: x.name):
            if p.name.endswith(".spec"):
                print(p.name)
        return EXIT_OK
    if args.verb == "plot":
        print(plot(args.csv, args.kind, args.out, args.q))
        return EXIT_OK
    spec = parse_spec(_resolve_spec(args.spec))
    if args.verb != "run" and VERBS[args.verb] != spec.kind:
        raise ValidationError(f"verb '{args.verb}' expects kind {VERBS[args.verb]}, "
                              f"spec has {spec.kind}", key="kind", line=spec.lines.get("kind"))
    report = run(spec, seed=args.seed, workers=args.threads)
    path = write_report(report, output_path(spec, args.out))
    print(report.summary)
    print(f"wrote {path}")
    if args.svg or "svg" in spec.output:
        kind = {v: k for k, v in PLOT_KINDS.items()}.get(spec.kind)
        if kind is not None:
            q = spec.get("q", 2.0)
            print(f"wrote {plot(path, kind, output_path(spec, args.out, 'svg', '.svg'), q)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _main(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
