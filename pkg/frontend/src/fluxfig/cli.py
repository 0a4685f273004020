"""``fluxlab-plot --spec <json>``: render one figure per spec file.

Exit codes: 0 on success, 2 on any spec or input-schema problem (the
message includes the column diff for mismatched CSV headers).
"""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, render
from .tables import SchemaError

__all__ = ["main"]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fluxlab-plot",
        description="Render fluxlab CLI result files into figures.",
    )
    parser.add_argument("--spec", required=True, nargs="+",
                        help="figure spec JSON file(s)")
    args = parser.parse_args(argv)

    for spec_path in args.spec:
        try:
            info = render(FigureSpec.from_json(spec_path))
        except SchemaError as exc:
            print(f"fluxlab-plot: schema error: {exc}", file=sys.stderr)
            return 2
        print(f"{spec_path} -> {info['output']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
