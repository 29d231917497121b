"""Dataset parsing, assembly, and deterministic 70/10/20 splits.

Source formats: multi-record XYZ (count line, comment line, atom lines),
per-molecule QM9 record files (count, tagged property line, atom lines with
Mulliken charges, then frequencies/SMILES/InChI), and CSV property tables
with a header row. Floats may use Fortran 'D' or QM9's '*^' exponent
markers.

The three benchmark assemblies mirror the datasets studied here: relative
energies of peri-condensed hydrocarbons (ECM features padded to 62), band
gap and formation energy of lead-free double perovskites (31 tabulated
features, the categorical symmetry column excluded), and ZPVE of the
16-atom QM9 subset (ECM padded to 16, Hartree converted to eV). The source
files are fetched by the user; ``verify-data`` checks the expected counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import GeometryInconsistent, Molecule, ecm

HARTREE_TO_EV = 27.211386245988

_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La "
    "Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po "
    "At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr"
).split()
ATOMIC_NUMBERS = {symbol: i + 1 for i, symbol in enumerate(_SYMBOLS)}


class XyzParseError(ValueError):
    """Malformed geometry record; message carries file and line context."""


class DatasetError(ValueError):
    """Dataset assembly failed (missing columns, missing ids, bad cells)."""


def parse_float(token: str) -> float:
    """Parse a float accepting 'D'/'d' and QM9's '*^' exponent markers."""
    return float(token.replace("*^", "e").replace("D", "E").replace("d", "e"))


def _atomic_number(symbol: str, where: str) -> int:
    try:
        return ATOMIC_NUMBERS[symbol]
    except KeyError:
        raise XyzParseError(f"{where}: unknown element symbol {symbol!r}") from None


def parse_xyz(path) -> list[Molecule]:
    """Parse a multi-record XYZ file; the comment line doubles as the id."""
    path = Path(path)
    lines = path.read_text().splitlines()
    molecules: list[Molecule] = []
    i = 0
    record = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        where = f"{path.name}:{i + 1}"
        try:
            n = int(lines[i].strip())
        except ValueError:
            raise XyzParseError(
                f"{where}: expected an atom count for record {record}, got {lines[i]!r}"
            ) from None
        if n < 1:
            raise XyzParseError(f"{where}: record {record} declares {n} atoms")
        if i + 2 + n > len(lines):
            raise XyzParseError(
                f"{where}: record {record} declares {n} atoms but the file ends early"
            )
        comment = lines[i + 1].strip()
        numbers = np.empty(n, dtype=int)
        positions = np.empty((n, 3))
        for j in range(n):
            line_no = i + 2 + j
            parts = lines[line_no].split()
            if len(parts) < 4:
                raise XyzParseError(
                    f"{path.name}:{line_no + 1}: record {record}: atom line needs "
                    f"symbol and 3 coordinates, got {lines[line_no]!r}"
                )
            numbers[j] = _atomic_number(parts[0], f"{path.name}:{line_no + 1}")
            try:
                positions[j] = [parse_float(p) for p in parts[1:4]]
            except ValueError:
                raise XyzParseError(
                    f"{path.name}:{line_no + 1}: record {record}: bad coordinate in "
                    f"{lines[line_no]!r}"
                ) from None
        mol_id = comment if comment else f"{path.stem}:{record}"
        molecules.append(Molecule(numbers=numbers, positions=positions, id=mol_id))
        i += 2 + n
        record += 1
    return molecules


# Property-line tags of a QM9 record, in file order after the 'gdb' marker
# and the molecule index.
QM9_PROPERTY_NAMES = [
    "rot_a", "rot_b", "rot_c", "dipole", "polarizability", "homo", "lumo",
    "gap", "r2", "zpve", "u0", "u298", "h298", "g298", "cv",
]


def parse_qm9_record(path) -> tuple[Molecule, dict]:
    """Parse one QM9 per-molecule file into (Molecule, properties in Hartree/native units)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 2:
        raise XyzParseError(f"{path.name}: truncated QM9 record")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise XyzParseError(f"{path.name}:1: expected an atom count, got {lines[0]!r}") from None
    tokens = lines[1].split()
    if len(tokens) < 2 + len(QM9_PROPERTY_NAMES) or tokens[0] != "gdb":
        raise XyzParseError(
            f"{path.name}:2: property line does not match the QM9 tag layout "
            f"(want 'gdb <index> <15 values>', got {lines[1]!r})"
        )
    try:
        props = {
            name: parse_float(tok)
            for name, tok in zip(QM9_PROPERTY_NAMES, tokens[2 : 2 + len(QM9_PROPERTY_NAMES)])
        }
    except ValueError:
        raise XyzParseError(f"{path.name}:2: bad property value in {lines[1]!r}") from None
    if len(lines) < 2 + n:
        raise XyzParseError(f"{path.name}: declares {n} atoms but the file ends early")
    numbers = np.empty(n, dtype=int)
    positions = np.empty((n, 3))
    for j in range(n):
        parts = lines[2 + j].split()
        if len(parts) < 4:
            raise XyzParseError(f"{path.name}:{3 + j}: atom line too short: {lines[2 + j]!r}")
        numbers[j] = _atomic_number(parts[0], f"{path.name}:{3 + j}")
        try:
            positions[j] = [parse_float(p) for p in parts[1:4]]
        except ValueError:
            raise XyzParseError(f"{path.name}:{3 + j}: bad coordinate in {lines[2 + j]!r}") from None
    mol_id = f"gdb_{tokens[1]}"
    return Molecule(numbers=numbers, positions=positions, id=mol_id), props


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    ids: list[str]
    unit: str
    provenance: str = ""

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        n = self.X.shape[0]
        if self.X.shape[1] < 1:
            raise DatasetError(f"{self.name}: feature dimension must be > 0")
        if self.y.shape != (n,) or len(self.ids) != n:
            raise DatasetError(
                f"{self.name}: row counts disagree (X {n}, y {self.y.shape}, ids {len(self.ids)})"
            )
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DatasetError(f"{self.name}: non-finite entries")
        if not self.unit:
            raise DatasetError(f"{self.name}: target unit label is required")

    @property
    def n_samples(self) -> int:
        return int(self.X.shape[0])

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return len(self.train) + len(self.validation) + len(self.test)


def make_split(n: int, seed: int) -> Split:
    """Deterministic 70/10/20 split: floor for validation and test, remainder to train."""
    if n < 10:
        raise DatasetError(f"need at least 10 rows to populate all splits, got {n}")
    n_val = int(np.floor(0.10 * n))
    n_test = int(np.floor(0.20 * n))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    return Split(
        train=perm[:n_train],
        validation=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
        seed=seed,
    )


def _featurize_molecules(
    molecules: list[Molecule],
    targets: dict[str, float],
    pad_to: int,
    sort: str = "abs",
) -> tuple[np.ndarray, np.ndarray, list[str], list[dict]]:
    rows, ys, ids, dropped = [], [], [], []
    for mol in molecules:
        if mol.id not in targets:
            raise DatasetError(f"no target value for geometry id {mol.id!r}")
        try:
            rows.append(ecm(mol, pad_to=pad_to, sort=sort))
        except GeometryInconsistent as exc:
            dropped.append({"id": mol.id, "reason": str(exc)})
            continue
        ys.append(targets[mol.id])
        ids.append(mol.id)
    if not rows:
        raise DatasetError("no molecules survived featurization")
    return np.vstack(rows), np.asarray(ys), ids, dropped


def _read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty CSV")
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return [h.strip() for h in header], rows


def _find_column(header: list[str], candidates: list[str], what: str, path) -> int:
    lowered = [h.lower() for h in header]
    for cand in candidates:
        if cand in lowered:
            return lowered.index(cand)
    raise DatasetError(f"{path}: missing {what} column (looked for any of {candidates})")


_ID_CANDIDATES = ["name", "molecule", "id", "mol_id", "identifier"]
_REL_ENERGY_CANDIDATES = ["erel_ev", "rel_energy_ev", "relative_energy_ev", "erel", "relative_energy"]
_TOTAL_ENERGY_CANDIDATES = ["etot_ev", "total_energy_ev", "etot", "total_energy", "energy_ev", "energy"]


def build_compas3(
    xyz_path,
    energy_csv,
    pad_to: int = 62,
    id_column: str | None = None,
    energy_column: str | None = None,
    sort: str = "abs",
) -> Dataset:
    """Relative energies of peri-condensed hydrocarbons from XYZ + CSV.

    Targets come from a relative-energy column (eV) when one exists;
    otherwise from a total-energy column, re-referenced to the lowest-energy
    isomer within each molecular formula. Geometries that fail ECM
    generation are dropped and logged in the provenance.
    """
    molecules = parse_xyz(xyz_path)
    header, rows = _read_csv_table(energy_csv)
    if id_column is not None:
        idc = _find_column(header, [id_column.lower()], "id", energy_csv)
    else:
        idc = _find_column(header, _ID_CANDIDATES, "id", energy_csv)
    relative = True
    if energy_column is not None:
        ec = _find_column(header, [energy_column.lower()], "energy", energy_csv)
    else:
        lowered = [h.lower() for h in header]
        ec = next((lowered.index(c) for c in _REL_ENERGY_CANDIDATES if c in lowered), None)
        if ec is None:
            relative = False
            ec = _find_column(header, _TOTAL_ENERGY_CANDIDATES, "energy", energy_csv)
    targets: dict[str, float] = {}
    for i, row in enumerate(rows, start=2):
        try:
            targets[row[idc].strip()] = parse_float(row[ec])
        except (ValueError, IndexError):
            raise DatasetError(f"{energy_csv}:{i}: bad energy cell in column {header[ec]!r}") from None
    if not relative:
        by_formula: dict[str, list[str]] = {}
        for mol in molecules:
            by_formula.setdefault(mol.formula(), []).append(mol.id)
        for members in by_formula.values():
            present = [m for m in members if m in targets]
            if not present:
                continue
            floor = min(targets[m] for m in present)
            for m in present:
                targets[m] = targets[m] - floor
    X, y, ids, dropped = _featurize_molecules(molecules, targets, pad_to, sort)
    provenance = json.dumps(
        {
            "source_xyz": str(xyz_path),
            "source_energies": str(energy_csv),
            "relative_column_found": relative,
            "n_parsed": len(molecules),
            "n_kept": len(ids),
            "dropped": dropped,
        },
        sort_keys=True,
    )
    return Dataset(name="compas3", X=X, y=y, ids=ids, unit="eV", provenance=provenance)


_BANDGAP_CANDIDATES = ["band_gap", "bandgap", "band gap", "band_gap_ev", "gap", "eg"]
_FORMATION_CANDIDATES = [
    "formation_energy", "heat_of_formation", "formation_energy_ev_atom",
    "formation", "hof", "delta_h", "dhf",
]
_SYMMETRY_CANDIDATES = ["symmetry", "sym", "structure", "crystal_system", "unit_cell_symmetry"]


def build_perovskites(csv_path) -> tuple[Dataset, Dataset]:
    """Band-gap and formation-energy datasets sharing the tabulated features.

    The categorical symmetry column is excluded from the features; rows with
    any missing cell are dropped and counted in the provenance. Non-numeric
    feature cells elsewhere are an error.
    """
    header, rows = _read_csv_table(csv_path)
    gap_c = _find_column(header, _BANDGAP_CANDIDATES, "band gap", csv_path)
    form_c = _find_column(header, _FORMATION_CANDIDATES, "heat of formation", csv_path)
    lowered = [h.lower() for h in header]
    sym_c = next((lowered.index(c) for c in _SYMMETRY_CANDIDATES if c in lowered), None)
    id_c = next((lowered.index(c) for c in _ID_CANDIDATES if c in lowered), None)
    skip = {gap_c, form_c, sym_c, id_c} - {None}
    feature_cols = [j for j in range(len(header)) if j not in skip]
    if not feature_cols:
        raise DatasetError(f"{csv_path}: no feature columns left")

    X_rows, gaps, forms, ids = [], [], [], []
    n_missing = 0
    for i, row in enumerate(rows, start=2):
        cells = [row[j].strip() if j < len(row) else "" for j in range(len(header))]
        needed = feature_cols + [gap_c, form_c]
        if any(cells[j] == "" or cells[j].lower() in ("na", "nan") for j in needed):
            n_missing += 1
            continue
        feats = []
        for j in feature_cols:
            try:
                feats.append(parse_float(cells[j]))
            except ValueError:
                raise DatasetError(
                    f"{csv_path}:{i}: non-numeric cell {cells[j]!r} in column {header[j]!r}"
                ) from None
        try:
            gaps.append(parse_float(cells[gap_c]))
            forms.append(parse_float(cells[form_c]))
        except ValueError:
            raise DatasetError(f"{csv_path}:{i}: non-numeric target cell") from None
        X_rows.append(feats)
        ids.append(cells[id_c] if id_c is not None else f"row{i}")
    if not X_rows:
        raise DatasetError(f"{csv_path}: no complete rows")
    X = np.asarray(X_rows)
    provenance = json.dumps(
        {
            "source": str(csv_path),
            "n_source_rows": len(rows),
            "n_kept": len(X_rows),
            "n_dropped_missing": n_missing,
            "feature_columns": [header[j] for j in feature_cols],
            "symmetry_column_excluded": header[sym_c] if sym_c is not None else None,
        },
        sort_keys=True,
    )
    ds_gap = Dataset(
        name="perovskites_bandgap", X=X, y=np.asarray(gaps), ids=list(ids),
        unit="eV", provenance=provenance,
    )
    ds_form = Dataset(
        name="perovskites_formation", X=X.copy(), y=np.asarray(forms), ids=list(ids),
        unit="eV/atom", provenance=provenance,
    )
    return ds_gap, ds_form


def build_qm9_zpve(qm9_dir, n_atoms: int = 16, sort: str = "abs") -> Dataset:
    """ZPVE (eV) of the QM9 molecules with exactly ``n_atoms`` atoms.

    ECM features are padded to ``n_atoms`` (every retained molecule has that
    many atoms, so no padding actually occurs); molecules whose geometry
    breaks the Coulomb matrix are dropped and logged.
    """
    qm9_dir = Path(qm9_dir)
    paths = sorted(qm9_dir.glob("*.xyz"))
    if not paths:
        raise DatasetError(f"{qm9_dir}: no .xyz record files found")
    rows, ys, ids, dropped = [], [], [], []
    n_matching = 0
    for p in paths:
        mol, props = parse_qm9_record(p)
        if mol.n_atoms != n_atoms:
            continue
        n_matching += 1
        try:
            rows.append(ecm(mol, pad_to=n_atoms, sort=sort))
        except GeometryInconsistent as exc:
            dropped.append({"id": mol.id, "reason": str(exc)})
            continue
        ys.append(props["zpve"] * HARTREE_TO_EV)
        ids.append(mol.id)
    if not rows:
        raise DatasetError(f"{qm9_dir}: no {n_atoms}-atom molecules survived featurization")
    provenance = json.dumps(
        {
            "source": str(qm9_dir),
            "n_records": len(paths),
            "n_atoms_filter": n_atoms,
            "n_matching": n_matching,
            "n_kept": len(ids),
            "dropped": dropped,
        },
        sort_keys=True,
    )
    return Dataset(
        name=f"qm9_zpve_{n_atoms}atom",
        X=np.vstack(rows),
        y=np.asarray(ys),
        ids=ids,
        unit="eV",
        provenance=provenance,
    )


def save_dataset(ds: Dataset, csv_path) -> Path:
    """Canonical featurized CSV (id, f_1..f_d, target) plus a provenance sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f_{j + 1}" for j in range(ds.dim)] + ["target"])
        for i in range(ds.n_samples):
            writer.writerow(
                [ds.ids[i]] + [repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))]
            )
    sidecar = csv_path.with_suffix(csv_path.suffix + ".provenance.json")
    checksum = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    sidecar.write_text(
        json.dumps(
            {
                "name": ds.name,
                "unit": ds.unit,
                "n_rows": ds.n_samples,
                "dim": ds.dim,
                "csv_sha256": checksum,
                "provenance": ds.provenance,
            },
            indent=1,
            sort_keys=True,
        )
    )
    return sidecar


def load_dataset(csv_path, unit: str | None = None, name: str | None = None) -> Dataset:
    csv_path = Path(csv_path)
    header, rows = _read_csv_table(csv_path)
    if not header or header[0] != "id" or header[-1] != "target":
        raise DatasetError(f"{csv_path}: expected header id,f_1..f_d,target")
    sidecar = csv_path.with_suffix(csv_path.suffix + ".provenance.json")
    provenance = ""
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        unit = unit or meta.get("unit")
        name = name or meta.get("name")
        provenance = meta.get("provenance", "")
    if unit is None:
        raise DatasetError(f"{csv_path}: no provenance sidecar; pass the target unit explicitly")
    ids, X_rows, ys = [], [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{csv_path}:{i}: expected {len(header)} cells, got {len(row)}")
        ids.append(row[0])
        try:
            X_rows.append([float(v) for v in row[1:-1]])
            ys.append(float(row[-1]))
        except ValueError:
            raise DatasetError(f"{csv_path}:{i}: non-numeric cell") from None
    return Dataset(
        name=name or csv_path.stem,
        X=np.asarray(X_rows),
        y=np.asarray(ys),
        ids=ids,
        unit=unit,
        provenance=provenance,
    )


def read_target_table(path, id_column: str | None = None, value_column: str | None = None) -> dict[str, float]:
    """Read an (id, value) mapping from a CSV property table.

    With two columns the non-id one is the value; wider tables need an
    explicit ``value_column``.
    """
    header, rows = _read_csv_table(path)
    if id_column is not None:
        idc = _find_column(header, [id_column.lower()], "id", path)
    else:
        lowered = [h.lower() for h in header]
        idc = next((lowered.index(c) for c in _ID_CANDIDATES if c in lowered), 0)
    if value_column is not None:
        vc = _find_column(header, [value_column.lower()], "target", path)
    elif len(header) == 2:
        vc = 1 - idc
    else:
        raise DatasetError(f"{path}: more than two columns; name the target column")
    out: dict[str, float] = {}
    for i, row in enumerate(rows, start=2):
        try:
            out[row[idc].strip()] = parse_float(row[vc])
        except (ValueError, IndexError):
            raise DatasetError(f"{path}:{i}: bad value cell in column {header[vc]!r}") from None
    return out


# Expected corpus statistics used by the verify-data command.
EXPECTED_COUNTS = {
    "qm9": {"n_matching": 14270, "n_kept": 14252, "n_dropped": 18, "dim": 16},
    "compas3": {"dim": 62},
    "perovskites": {"dim": 31},
}


def verify_counts(kind: str, ds_or_pair) -> tuple[bool, list[str]]:
    """Compare an assembled dataset against the published corpus statistics."""
    messages = []
    ok = True

    def check(label, got, want):
        nonlocal ok
        good = got == want
        ok = ok and good
        messages.append(f"{'ok' if good else 'MISMATCH'}: {label} = {got} (expected {want})")

    if kind == "qm9":
        ds = ds_or_pair
        meta = json.loads(ds.provenance)
        want = EXPECTED_COUNTS["qm9"]
        check("16-atom molecules before drops", meta["n_matching"], want["n_matching"])
        check("molecules kept", ds.n_samples, want["n_kept"])
        check("dropped (inconsistent geometry)", len(meta["dropped"]), want["n_dropped"])
        check("feature dimension", ds.dim, want["dim"])
    elif kind == "compas3":
        check("feature dimension", ds_or_pair.dim, EXPECTED_COUNTS["compas3"]["dim"])
    elif kind == "perovskites":
        ds_gap, ds_form = ds_or_pair
        check("band-gap feature dimension", ds_gap.dim, EXPECTED_COUNTS["perovskites"]["dim"])
        check("formation feature dimension", ds_form.dim, EXPECTED_COUNTS["perovskites"]["dim"])
    else:
        raise DatasetError(f"unknown dataset kind {kind!r}")
    return ok, messages
