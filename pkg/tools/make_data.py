"""Regenerate the data files shipped in ``src/gedamage/data``.

Writes the three notched-plate meshes and the default network weights,
trained with seed 0 on synthetic closed-form data with gradual softening
(``studies.WEIGHTS_GENERATOR``).
"""

import argparse
import logging
from pathlib import Path

from gedamage import fitting, io
from gedamage import networks as nn
from gedamage.materials import ClosedFormParams
from gedamage.studies import NOTCH, WEIGHTS_GENERATOR, notched_meshes

DATA = Path(__file__).resolve().parents[1] / "src" / "gedamage" / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--skip-fit", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    for name, mesh in notched_meshes(generate=True).items():
        io.write_inp(mesh, DATA / f"notched_{name}.inp",
                     heading=f"notched plate {NOTCH['width']}x{NOTCH['height']}x{NOTCH['thickness']} mm, "
                     f"notch radius {NOTCH['radius']} mm, {mesh.n_elements} elements")
        print(name, mesh.n_elements)
    if not args.skip_fit:
        res = fitting.fit(fitting.synthetic_data(ClosedFormParams.from_young(**WEIGHTS_GENERATOR)), seed=0)
        print("relative rmse", res.rel_rmse)
        nn.save_weights(res.params, DATA / "default_weights.json")


if __name__ == "__main__":
    main()
