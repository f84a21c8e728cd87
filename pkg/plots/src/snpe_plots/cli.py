"""CLI: render benchmark figures from a manifest.

    plot --manifest out/desk_scale/manifest.json --kind iterations --out fig1.png
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot",
                                     description=__doc__.strip().splitlines()[0])
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True)
    parser.add_argument("--linear", action="store_true",
                        help="linear instead of log scale on the gap axis")
    args = parser.parse_args(argv)
    try:
        result = render(PlotSpec(manifest=args.manifest, kind=args.kind,
                                 out=args.out, log_scale=not args.linear))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.path} ({result.n_curves} curves)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
