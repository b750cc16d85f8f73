"""Write the shipped mesh files for the Hertz punch.

    python3 scripts/make_meshes.py [output-dir]

Output is deterministic; tests regenerate the files and compare.
"""

import sys
from pathlib import Path

from enrichcontact.meshgen import half_disk
from enrichcontact.mesh import save_mesh

PUNCHES = {
    "hertz_punch_fine.msh": dict(n_xi=96, n_eta=40),
}


def write_all(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    for name, kw in PUNCHES.items():
        save_mesh(half_disk(**kw), out / name, f"half-disk punch, r=10, center (0,10), {kw}")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "enrichcontact" / "data" / "meshes"
    write_all(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
