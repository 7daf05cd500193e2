"""Writers for radial profiles, lattice fields and JSON reports."""
import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from werkzeug.utils import secure_filename

from kpeaks.artifacts.table import CsvTable
from kpeaks.fields3d.lattice import Field3D
from kpeaks.radial_core import RadialProfile


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def save_json(obj: Dict, out_dir: Path, name: str) -> Path:
    """Write a UTF-8 JSON file with indent 2, keys in insertion order."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / secure_filename(name)
    with open(path, mode="w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False, default=_default)
        f.write("\n")
    return path


def profile_header(profile: RadialProfile, residual_sup: float) -> Dict:
    """lambda, p, tail constants and the residual of a profile."""
    tail = profile.tail
    return dict(
        lam=profile.lam,
        p=profile.p,
        diffusion=profile.diffusion,
        u0=profile.central_value,
        tail_amplitude=None if tail is None else tail.amplitude,
        sigma=None if tail is None else tail.rate,
        r_match=None if tail is None else tail.r_match,
        residual_sup=residual_sup,
    )


def save_profile(
    profile: RadialProfile, residual_sup: float, out_dir: Path, stem: str
) -> Tuple[Path, Path]:
    """Write r, u, u' as CSV with a JSON header next to it."""
    rows = [
        dict(r=r, u=u, du=du)
        for r, u, du in zip(profile.grid.nodes, profile.values, profile.derivs)
    ]
    table = CsvTable(["r", "u", "du"], rows)
    csv_path = table.save(out_dir, f"{stem}.csv")
    header = profile_header(profile, residual_sup)
    json_path = save_json(header, out_dir, f"{stem}.json")
    return csv_path, json_path


def save_field(field: Field3D, out_dir: Path, stem: str) -> Tuple[Path, Path]:
    """Write the lattice values as little-endian float64, x fastest.

    A JSON header goes next to the binary file.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    bin_path = out_dir / secure_filename(f"{stem}.bin")
    bin_path.write_bytes(field.to_bytes())
    json_path = save_json(field.header(), out_dir, f"{stem}.json")
    return bin_path, json_path
