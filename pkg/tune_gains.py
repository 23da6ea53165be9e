"""Scratch tuning sweep for the level-route scenario gains (not shipped)."""
import itertools
import json
import numpy as np
import nadi

BASE = json.load(open("src/nadi/scenarios/aircraft_level_route.json"))


def run(k_block, k0, clamp, integral):
    raw = json.loads(json.dumps(BASE))
    raw["gains"].pop("poles", None)
    raw["gains"]["k_blocks"] = [list(k_block)] * 3
    raw["gains"]["k_integral"] = [k0 if integral else 0.0] * 3
    raw["integral_limit"] = clamp
    cfg = nadi.config_from_dict(raw)
    trace, summary = nadi.run_scenario(cfg)
    ts = np.array([r.t for r in trace])
    errs = np.array([r.err for r in trace])
    vs = np.array([r.vs for r in trace])
    i3 = np.argmin(np.abs(ts - 3.0))
    return dict(
        diverged=summary.diverged,
        max_e20=float(np.max(np.abs(errs[ts > 20]))) if not summary.diverged else np.inf,
        mean5=float(np.mean(np.abs(errs[ts >= 20]))),
        mean5_axes=np.mean(np.abs(errs[ts >= 20]), axis=0),
        vs_ratio=float(vs[i3] / vs[1:].max()),
        v25=float(trace[-1].state[3]),
    )


def main():
    k2 = 1.4
    for k1 in (0.4, 0.5, 0.6):
        base = run((k1, k2), 0.0, 100.0, False)
        print(
            f"k1={k1} NO-INT: bias axes {np.round(base['mean5_axes'], 3)}, "
            f"max_e20 {base['max_e20']:.2f}, vs {base['vs_ratio']:.1e}, V25 {base['v25']:.2f}",
            flush=True,
        )
        for frac, clamp in itertools.product((0.13, 0.16, 0.20), (15.0, 25.0)):
            k0 = frac * k1
            res = run((k1, k2), k0, clamp, True)
            ratio = res["mean5"] / base["mean5"]
            ok = (
                res["max_e20"] < 2.0
                and ratio < 0.10
                and res["vs_ratio"] < 1e-3
                and abs(res["v25"] - 50.0) < 0.5
                and max(base["mean5_axes"]) > 0.5
            )
            print(
                f"  k0={k0:.3f} C={clamp}: max_e20={res['max_e20']:.2f} "
                f"mean5={res['mean5']:.3f} ratio={ratio:.3f} vs={res['vs_ratio']:.1e} "
                f"V25={res['v25']:.2f} {'PASS' if ok else ''}",
                flush=True,
            )


if __name__ == "__main__":
    main()
