"""File formats: PTAG1 time-tag binaries, CSV exports, and image grids.

Every writer is deterministic (no timestamps, sorted JSON keys), so a
fixed seed reproduces byte-identical files.  Provenance sidecars live
next to the data file with an extra ``.json`` suffix.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .photostream import TimeTagStream

PTAG_MAGIC = b"PTAG1" + b"\x00" * 10 + b"\x01"  # 16 bytes: magic + version 1
_TAG_DTYPE = np.dtype([("t", "<u8"), ("c", "u1")])


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_ptag(stream: TimeTagStream, path: str | Path) -> Path:
    path = Path(path)
    rec = np.empty(stream.n_tags, dtype=_TAG_DTYPE)
    rec["t"] = stream.timestamps
    rec["c"] = stream.channels
    with open(path, "wb") as fh:
        fh.write(PTAG_MAGIC)
        fh.write(np.array([stream.n_tags], dtype="<u8").tobytes())
        fh.write(rec.tobytes())
    _dump_json(
        {"duration_ps": int(stream.duration_ps), "origin": stream.origin},
        sidecar_path(path),
    )
    return path


def read_ptag(path: str | Path) -> TimeTagStream:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 24 or raw[:16] != PTAG_MAGIC:
        raise FormatError(f"{path} is not a PTAG1 time-tag file")
    count = int(np.frombuffer(raw[16:24], dtype="<u8")[0])
    body = raw[24:]
    if len(body) != count * _TAG_DTYPE.itemsize:
        raise FormatError(f"{path}: expected {count} tags, payload size mismatch")
    rec = np.frombuffer(body, dtype=_TAG_DTYPE)
    side = sidecar_path(path)
    duration = int(rec["t"][-1]) if count else 0
    origin: dict = {}
    if side.exists():
        meta = json.loads(side.read_text())
        duration = int(meta.get("duration_ps", duration))
        origin = meta.get("origin", {})
    return TimeTagStream(
        rec["t"].astype(np.int64), rec["c"].astype(np.uint8), duration, origin
    )


def write_tags_csv(stream: TimeTagStream, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("timestamp_ps,channel\n")
        for t, c in zip(stream.timestamps, stream.channels):
            fh.write(f"{int(t)},{int(c)}\n")
    return path


def _write_csv(path: Path, header_fields: list[str], columns, provenance: dict | None) -> Path:
    with open(path, "w") as fh:
        if provenance:
            for key in sorted(provenance):
                fh.write(f"# {key}: {json.dumps(provenance[key], sort_keys=True)}\n")
        fh.write(",".join(header_fields) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def _read_csv(path: Path, expected_fields: list[str]):
    provenance: dict = {}
    rows = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise FormatError(
            f"{path} is not a text CSV (expected header {','.join(expected_fields)!r})"
        ) from exc
    header = None
    for line in lines:
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, value = body.partition(":")
                try:
                    provenance[key.strip()] = json.loads(value.strip())
                except json.JSONDecodeError:
                    provenance[key.strip()] = value.strip()
            continue
        if not line.strip():
            continue
        if header is None:
            header = [f.strip() for f in line.split(",")]
            if header != expected_fields:
                raise FormatError(
                    f"{path}: expected CSV header {','.join(expected_fields)!r}, "
                    f"got {','.join(header)!r}"
                )
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise FormatError(f"{path}: empty file, expected header {','.join(expected_fields)!r}")
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, len(expected_fields)))
    return data, provenance


def write_interferogram_csv(opd_nm, intensity, path: str | Path, provenance: dict | None = None) -> Path:
    return _write_csv(
        Path(path),
        ["opd_nm", "intensity_counts"],
        (list(map(float, opd_nm)), list(map(float, intensity))),
        provenance,
    )


def read_interferogram_csv(path: str | Path):
    data, provenance = _read_csv(Path(path), ["opd_nm", "intensity_counts"])
    return data[:, 0], data[:, 1], provenance


def write_histogram_csv(tau_ps, g2, raw, path: str | Path, provenance: dict | None = None) -> Path:
    return _write_csv(
        Path(path),
        ["tau_ps", "g2", "raw"],
        (list(map(float, tau_ps)), list(map(float, g2)), [int(v) for v in raw]),
        provenance,
    )


def read_histogram_csv(path: str | Path):
    data, provenance = _read_csv(Path(path), ["tau_ps", "g2", "raw"])
    return data[:, 0], data[:, 1], data[:, 2].astype(np.int64), provenance


def write_spectrum_csv(wavelength_nm, counts, path: str | Path, provenance: dict | None = None) -> Path:
    return _write_csv(
        Path(path),
        ["wavelength_nm", "counts"],
        (list(map(float, wavelength_nm)), list(map(float, counts))),
        provenance,
    )


def read_spectrum_csv(path: str | Path):
    data, provenance = _read_csv(Path(path), ["wavelength_nm", "counts"])
    return data[:, 0], data[:, 1], provenance


def write_sweep_csv(angle_deg, counts, path: str | Path, provenance: dict | None = None) -> Path:
    return _write_csv(
        Path(path),
        ["angle_deg", "counts"],
        (list(map(float, angle_deg)), list(map(float, counts))),
        provenance,
    )


def read_sweep_csv(path: str | Path):
    data, provenance = _read_csv(Path(path), ["angle_deg", "counts"])
    return data[:, 0], data[:, 1], provenance


def write_columns_csv(path: str | Path, fields: list[str], columns, provenance: dict | None = None) -> Path:
    """Generic numeric CSV with the package's # provenance header style."""
    return _write_csv(Path(path), fields, [list(map(float, c)) for c in columns], provenance)


def read_columns_csv(path: str | Path, fields: list[str]):
    data, provenance = _read_csv(Path(path), fields)
    return [data[:, i] for i in range(len(fields))], provenance


def write_image(image, path: str | Path) -> Path:
    """Flat little-endian float64 grid plus a JSON header sidecar."""
    from dataclasses import asdict

    path = Path(path)
    pixels = np.ascontiguousarray(image.pixels, dtype="<f8")
    path.write_bytes(pixels.tobytes())
    header = {
        "grid_size": int(image.optics.grid_size),
        "pixel_pitch_sample_plane_nm": float(image.optics.pixel_pitch_sample_plane_nm),
        "defocus_nm": float(image.defocus_nm),
        "optics": asdict(image.optics),
        "orientation": asdict(image.orientation) if image.orientation is not None else None,
    }
    _dump_json(header, sidecar_path(path))
    return path


def read_image(path: str | Path):
    from .dipole import DefocusedImage, OpticsConfig
    from .emitter import DipoleOrientation

    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"{path}: missing JSON header sidecar {side.name}")
    header = json.loads(side.read_text())
    optics = OpticsConfig(**header["optics"])
    n = optics.grid_size
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if raw.size != n * n:
        raise FormatError(f"{path}: expected {n}x{n} float64 grid, got {raw.size} values")
    orient = header.get("orientation")
    return DefocusedImage(
        pixels=raw.reshape(n, n).copy(),
        defocus_nm=float(header["defocus_nm"]),
        optics=optics,
        orientation=DipoleOrientation(**orient) if orient else None,
    )


def write_pgm(image, path: str | Path) -> Path:
    """16-bit binary PGM for quick visual inspection."""
    path = Path(path)
    pixels = np.asarray(image.pixels, dtype=float)
    peak = pixels.max()
    scaled = np.zeros_like(pixels) if peak <= 0 else pixels / peak
    data = (scaled * 65535.0 + 0.5).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n65535\n".encode())
        fh.write(data.tobytes())
    return path
