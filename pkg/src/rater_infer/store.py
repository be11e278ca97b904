"""Reading and writing chain traces, reports and density grids as CSV/JSON.

Floats are written with 17 significant digits so every value survives a
round trip exactly, and nothing time-dependent is written, so identical runs
produce identical bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import BadParameter, IoError
from .sampler import ChainDraws

FLOAT_FMT = "%.17g"
ENTITY_FAMILIES = ("theta", "tau", "inv_sigma2")


def _fmt(x):
    return FLOAT_FMT % x


def write_matrix_csv(path, header, columns):
    """Write equal-length columns under ``header``."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].shape[0] if cols else 0
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(n):
                w.writerow([_fmt(c[i]) if c.dtype.kind == "f" else str(c[i]) for c in cols])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_matrix_csv(path):
    """Read a numeric CSV written by :func:`write_matrix_csv` into ``{column: array}``."""
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IoError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        arr = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise IoError(f"{path}: non-numeric entry ({exc})") from exc
    return {name: arr[:, k] for k, name in enumerate(header)}


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _to_jsonable(dataclasses.asdict(obj))
    return obj


def dumps(obj):
    """Deterministic JSON text (sorted keys, 2-space indent)."""
    return json.dumps(_to_jsonable(obj), indent=2, sort_keys=True)


def write_json(path, obj):
    try:
        Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"{path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------- chain traces


def trace_files(chain):
    return {
        "scalars": f"scalars_chain{chain}.csv",
        "theta": f"theta_chain{chain}.csv",
        "tau": f"tau_chain{chain}.csv",
        "inv_sigma2": f"inv_sigma2_chain{chain}.csv",
        "atoms": f"atoms_chain{chain}.csv",
    }


def write_chain_traces(draws, directory, chain):
    """Write one chain's traces; returns the file names written."""
    d = Path(directory)
    files = trace_files(chain)
    names = list(draws.scalars)
    write_matrix_csv(d / files["scalars"], names, [draws.scalars[n] for n in names])
    for fam in ENTITY_FAMILIES:
        arr = getattr(draws, fam)
        write_matrix_csv(d / files[fam], [f"{fam}[{k}]" for k in range(arr.shape[1])], list(arr.T))
    header, cols = [], []
    atoms = dict(draws.atoms, counts1=draws.counts1, counts2=draws.counts2)
    extras = {k: v for k, v in draws.extras.items() if isinstance(v, np.ndarray) and v.shape[:1] == (draws.n_draws,)}
    for name, arr in list(atoms.items()) + [(f"extra.{k}", v) for k, v in extras.items()]:
        arr = arr.reshape(arr.shape[0], -1)
        header += [f"{name}[{k}]" for k in range(arr.shape[1])]
        cols += [arr[:, k].astype(float) for k in range(arr.shape[1])]
    write_matrix_csv(d / files["atoms"], header, cols)
    return sorted(files.values())


def _group_indexed(table):
    """``{"mu[0]": .., "mu[1]": ..}`` to ``{"mu": (n, 2) array}``."""
    groups = {}
    for col, values in table.items():
        name, _, idx = col.partition("[")
        groups.setdefault(name, []).append((int(idx.rstrip("]")), values))
    return {k: np.column_stack([v for _, v in sorted(parts)]) for k, parts in groups.items()}


def read_chain_traces(directory, chain):
    """Inverse of :func:`write_chain_traces` (draw metadata not restored)."""
    d = Path(directory)
    files = trace_files(chain)
    scalars = read_matrix_csv(d / files["scalars"])
    n = len(next(iter(scalars.values()))) if scalars else 0
    ent = {}
    for fam in ENTITY_FAMILIES:
        table = read_matrix_csv(d / files[fam])
        ent[fam] = _group_indexed(table).get(fam, np.empty((n, 0)))
    atoms = _group_indexed(read_matrix_csv(d / files["atoms"]))
    extras = {k[len("extra."):]: atoms.pop(k) for k in list(atoms) if k.startswith("extra.")}
    counts1 = atoms.pop("counts1", np.empty((n, 0))).astype(np.int64)
    counts2 = atoms.pop("counts2", np.empty((n, 0))).astype(np.int64)
    return ChainDraws(
        theta=ent["theta"],
        tau=ent["tau"],
        inv_sigma2=ent["inv_sigma2"],
        scalars=scalars,
        atoms=atoms,
        counts1=counts1,
        counts2=counts2,
        burn_in=0,
        thin=1,
        model_kind="",
        extras=extras,
        centered=True,
    )


def pool_draws(chains):
    """Stack the draws of several chains of the same model."""
    if not chains:
        raise BadParameter("no chains to pool")
    first = chains[0]
    if len(chains) == 1:
        return first

    def cat(get):
        return np.concatenate([get(c) for c in chains], axis=0)

    extras = {}
    for k, v in first.extras.items():
        if isinstance(v, np.ndarray) and v.shape[:1] == (first.n_draws,):
            extras[k] = cat(lambda c, k=k: c.extras[k])
        else:
            extras[k] = v
    warnings = {}
    for c in chains:
        for k, v in c.warnings.items():
            warnings[k] = warnings.get(k, 0) + v
    return dataclasses.replace(
        first,
        theta=cat(lambda c: c.theta),
        tau=cat(lambda c: c.tau),
        inv_sigma2=cat(lambda c: c.inv_sigma2),
        scalars={k: cat(lambda c, k=k: c.scalars[k]) for k in first.scalars},
        atoms={k: cat(lambda c, k=k: c.atoms[k]) for k in first.atoms},
        counts1=cat(lambda c: c.counts1),
        counts2=cat(lambda c: c.counts2),
        warnings=warnings,
        extras=extras,
    )


def write_density_csv(grid, path):
    write_matrix_csv(path, ["point", "mean", "lo", "hi"], [grid.points, grid.mean, grid.lo, grid.hi])
