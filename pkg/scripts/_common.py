import argparse
import logging

from dp_pwa.experiment import emit_outputs


def parser(description, out_default):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", default=out_default)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def finish(result, out, verbose=False):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    rows = sorted(result.summary, key=lambda r: (r.mechanism, r.sweep_value))
    print(f"{'mechanism':<16} {rows[0].sweep_name:>6} {'mean':>9} {'2sigma':>9}")
    for r in rows:
        print(f"{r.mechanism:<16} {r.sweep_value:>6g} {r.mean:>9.4f} {r.two_sigma:>9.4f}")
    for path in emit_outputs(result, out, ["csv", "json", "plotscript"]):
        print("wrote", path)
