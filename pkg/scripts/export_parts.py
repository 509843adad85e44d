"""Write the five procedural test parts as OBJ meshes.

usage: python3 scripts/export_parts.py [out_dir]
"""

import sys
from pathlib import Path

from depowder.simulator.mesh import write_obj
from depowder.simulator.parts import PART_NAMES, get_part


def main(out="parts"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name in PART_NAMES:
        part = get_part(name)
        lo, hi = part.mesh.bounds()
        size = " x ".join(f"{100 * d:.1f}" for d in hi - lo)
        write_obj(part.mesh, out / f"{name}.obj", comment=f"{name}: {size} cm, xi = {part.xi} cm, units m")
        print(f"{name:10s} {len(part.mesh.faces):6d} faces  {size} cm")


if __name__ == "__main__":
    main(*sys.argv[1:])
