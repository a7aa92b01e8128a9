"""CSV field I/O and JSON report serialization."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .lattice import Grid, Raster, ScalarField, build_domain, rasterize


class FieldFormatError(ValueError):
    pass


def _cell(v: float) -> str:
    return repr(float(v))


def field_to_csv(f: ScalarField) -> str:
    """Row-major text: one line per index along axis 0, empty cell outside the domain."""
    inside = f.raster.inside
    vals = f.values
    if vals.ndim == 1:
        vals, inside = vals[:, None], inside[:, None]
    rows = vals.reshape(vals.shape[0], -1)
    mask = inside.reshape(inside.shape[0], -1)
    lines = [",".join(_cell(v) if m else "" for v, m in zip(r, mk)) for r, mk in zip(rows, mask)]
    return "\n".join(lines) + "\n"


def csv_to_values(text: str, raster: Raster) -> np.ndarray:
    shape = raster.grid.shape
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != shape[0]:
        raise FieldFormatError(f"expected {shape[0]} rows, got {len(lines)}")
    width = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    out = np.zeros((shape[0], width))
    seen = np.zeros((shape[0], width), dtype=bool)
    for i, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != width:
            raise FieldFormatError(f"row {i}: expected {width} cells, got {len(cells)}")
        for j, c in enumerate(cells):
            if c:
                out[i, j] = float(c)
                seen[i, j] = True
    out = out.reshape(shape)
    if not np.array_equal(seen.reshape(shape), raster.inside):
        raise FieldFormatError("filled cells do not match the domain mask")
    return out


def grid_sidecar(raster: Raster, domain_spec: Mapping[str, Any]) -> dict:
    return {"domain": domain_spec, "grid": raster.grid.to_dict()}


def write_field(path: str | Path, f: ScalarField, domain_spec: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(field_to_csv(f))
    if domain_spec is not None:
        side = path.with_suffix(".grid.json")
        with open(side, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(grid_sidecar(f.raster, domain_spec), indent=2) + "\n")
    return path


def read_field(path: str | Path, raster: Raster | None = None) -> ScalarField:
    """Read a CSV field; without a raster, rebuild it from the ``.grid.json`` sidecar."""
    path = Path(path)
    if raster is None:
        with open(path.with_suffix(".grid.json"), encoding="utf-8") as fh:
            side = json.load(fh)
        grid = Grid.from_dict(side["grid"])
        raster = rasterize(build_domain(side["domain"]), grid.h)
        if raster.grid != grid:
            raise FieldFormatError("sidecar grid does not match the rasterized domain")
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return ScalarField(raster, csv_to_values(text, raster))


def profile_to_csv(radii: Iterable[float], values: Iterable[float]) -> str:
    lines = ["r,u"] + [f"{_cell(r)},{_cell(u)}" for r, u in zip(radii, values)]
    return "\n".join(lines) + "\n"


def dumps_reports(entries: list[Mapping[str, Any]]) -> str:
    return json.dumps(entries, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_reports(path: str | Path, entries: list[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_reports(entries))
    return path


def read_reports(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise FieldFormatError("reports file must hold a JSON array")
    return data
