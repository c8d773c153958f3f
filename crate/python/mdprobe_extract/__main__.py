"""``python -m mdprobe_extract SPEC.json OUT_DIR``

SPEC holds ``phi_plus``, ``phi_minus`` and optional ``labels`` and ``meta``.
"""

import json
import sys

from .container import write_container


def main(argv=None):
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    with open(args[0]) as f:
        spec = json.load(f)
    write_container(args[1], spec["phi_plus"], spec["phi_minus"], spec.get("labels"), spec.get("meta"))
    print(args[1])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
