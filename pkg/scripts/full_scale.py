"""Full-resolution harmonic-generation runs (n = 2048, up to M = 20).

This is an opt-in workload measured in hours per configuration.  It writes one
config per method into ``--workdir`` and runs them with ``tdras sweep``; the
usual output files land under $TDRAS_OUTPUT_ROOT (or next to the configs).

    python3 scripts/full_scale.py --atom be --only S D MCTDHF
"""
import argparse
import sys
from pathlib import Path

from tdras.cli import main as tdras_main

ATOMS = {"be": (4, 4), "c": (6, 6)}

# name -> (method, partition) per atom; partition None for reference methods
RUNS = {
    "be": {
        "MCTDHF": ("MCTDHF", "0 20 0"),
        "TDHF": ("TDHF", "0 2 0"),
        "S": ("S", "0 2 2"),
        "D": ("D", "0 2 2"),
        "SD": ("SD", "0 2 2"),
        "D20": ("D", "0 2 18"),
        "TDCIS": ("TDCIS", None),
        "SAE": ("SAE", None),
    },
    "c": {
        "MCTDHF": ("MCTDHF", "0 14 0"),
        "TDHF": ("TDHF", "0 3 0"),
        "S": ("S", "0 3 3"),
        "D": ("D", "0 3 3"),
        "SD": ("SD", "0 3 3"),
        "CASSCF": ("CASSCF", "1 5 0"),
        "TDCIS": ("TDCIS", None),
        "SAE": ("SAE", None),
    },
}

TEMPLATE = """[method]
name = {method}
{partition}
[system]
Z = {Z}
electrons = {ne}

[grid]
x_min = -300
x_max = 300
points = 2048

[pulse]
f0 = 0.0755
omega = 0.0570
cycles = 3
gauge = {gauge}

[cap]
onset = 0.8
strength = 0.01
order = 2

[propagate]
sample_dt = 0.5

[output]
directory = full_{atom}_{tag}
"""


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--atom", choices=sorted(ATOMS), default="be")
    ap.add_argument("--only", nargs="*", help="subset of run tags")
    ap.add_argument("--gauge", choices=("length", "velocity"), default="length")
    ap.add_argument("--workdir", default="full_scale_configs")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    runs = RUNS[args.atom]
    tags = args.only or list(runs)
    unknown = set(tags) - set(runs)
    if unknown:
        ap.error(f"unknown run tags {sorted(unknown)}; choose from {sorted(runs)}")
    Z, ne = ATOMS[args.atom]
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    for tag in tags:
        method, part = runs[tag]
        text = TEMPLATE.format(method=method, partition=f"partition = {part}\n" if part else "", Z=Z, ne=ne,
                               gauge=args.gauge, atom=args.atom, tag=tag.lower())
        (work / f"{args.atom}_{tag.lower()}.cfg").write_text(text)
    return tdras_main(["sweep", str(work / f"{args.atom}_*.cfg"), "--jobs", str(args.jobs)])


if __name__ == "__main__":
    sys.exit(main())
