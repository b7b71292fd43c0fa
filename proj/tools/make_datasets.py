#!/usr/bin/env python3
"""Build the ESOL and FreeSolv 3D SDF files shipped under data/.

Input is the MoleculeNet CSV for each dataset (SMILES + experimental value).
Each molecule gets one ETKDG conformer refined with MMFF94, hydrogens are
removed after embedding (heavy-atom graph, coordinates kept), and the result
is written as an MDL V2000 SDF plus an (id, target) CSV sidecar.

Molecules with a single heavy atom carry no bonds and are dropped, which
leaves 1127 ESOL and 639 FreeSolv records.

Requires RDKit (`pip install rdkit`). Only needed to regenerate data/.
"""

import argparse
import csv
import sys

from rdkit import Chem, RDLogger
from rdkit.Chem import AllChem

RDLogger.DisableLog("rdApp.*")

DATASETS = {
    "esol": ("smiles", "measured log solubility in mols per litre"),
    "freesolv": ("smiles", "expt"),
}


def embed(smiles, seed):
    mol = Chem.AddHs(Chem.MolFromSmiles(smiles))
    params = AllChem.ETKDGv3()
    params.randomSeed = seed
    if AllChem.EmbedMolecule(mol, params) != 0:
        params.useRandomCoords = True
        if AllChem.EmbedMolecule(mol, params) != 0:
            return None
    if AllChem.MMFFHasAllMoleculeParams(mol):
        AllChem.MMFFOptimizeMolecule(mol, maxIters=2000)
    else:
        AllChem.UFFOptimizeMolecule(mol, maxIters=2000)
    return Chem.RemoveHs(mol)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("name", choices=sorted(DATASETS))
    ap.add_argument("csv_in")
    ap.add_argument("out_prefix")
    ap.add_argument("--seed", type=int, default=20200715)
    args = ap.parse_args()

    smiles_col, target_col = DATASETS[args.name]
    writer = Chem.SDWriter(args.out_prefix + ".sdf")
    writer.SetForceV3000(False)
    rows = []
    with open(args.csv_in, newline="") as fh:
        for idx, rec in enumerate(csv.DictReader(fh)):
            smi = rec[smiles_col]
            if Chem.MolFromSmiles(smi).GetNumAtoms() < 2:
                continue
            mol = embed(smi, args.seed)
            if mol is None:
                print(f"embedding failed: {idx} {smi}", file=sys.stderr)
                continue
            mol_id = f"{args.name}_{idx:04d}"
            target = float(rec[target_col])
            mol.SetProp("_Name", mol_id)
            for key in list(mol.GetPropNames()):
                mol.ClearProp(key)
            mol.SetProp("target", repr(target))
            mol.SetProp("smiles", smi)
            writer.write(mol)
            rows.append((mol_id, target))
    writer.close()

    with open(args.out_prefix + ".csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "target"])
        for mol_id, target in rows:
            w.writerow([mol_id, repr(target)])
    print(f"{args.name}: {len(rows)} molecules")


if __name__ == "__main__":
    main()
