import numpy as np


def write_qm9_record(path, index, n_atoms, zpve, broken=False):
    """Synthesize one QM9-layout record file for parser and assembly tests."""
    rng = np.random.default_rng(index)
    props = ["157.7", "157.7", "157.7", "0.", "13.2", "-0.38", "0.11", "0.50",
             "35.3", repr(zpve), "-40.4", "-40.4", "-40.4", "-40.4", "6.4"]
    lines = [str(n_atoms), "gdb " + str(index) + "\t" + "\t".join(props)]
    pos = rng.uniform(-3, 3, size=(n_atoms, 3))
    if broken:
        pos[1] = pos[0]  # coincident pair breaks the Coulomb matrix
    for i in range(n_atoms):
        el = "C" if i % 4 == 0 else "H"
        lines.append(f"{el}\t{pos[i, 0]:.6f}\t{pos[i, 1]:.6f}\t{pos[i, 2]:.6f}\t0.0")
    lines.append("100.0\t200.0")
    path.write_text("\n".join(lines) + "\n")
