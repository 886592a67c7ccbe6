#!/usr/bin/env python3
"""Weyl-law study: zero-noise slopes on both geometries, then a noisy
torus ensemble.  Writes JSON reports under out/weyl/."""

import json
from pathlib import Path

from heatpara.experiments import StudyConfig, weyl_study

OUT = Path("out/weyl")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for kind in ("torus", "dirichlet-square"):
        cfg = StudyConfig(geometry=kind, N=64, n_t=128, out_dir=str(OUT))
        rep = weyl_study(cfg, zero_noise=True)
        (OUT / f"zero_{kind}.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
        print(f"{kind}: slope {rep['pooled_slope']:.4f} "
              f"target {rep['target_slope']:.4f} dev {rep['rel_deviation']:.2%}")
    cfg = StudyConfig(geometry="torus", N=32, n_t=128, seeds=tuple(range(10)),
                      eps_list=(2.0**-6,), out_dir=str(OUT))
    rep = weyl_study(cfg)
    (OUT / "noisy_torus.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    print(f"noisy torus pooled: {rep['pooled_slope']:.4f} dev {rep['rel_deviation']:.2%}")


if __name__ == "__main__":
    main()
