"""Space-time diagrams: space runs horizontally, time downward, black = particle.

PBM (binary P4) is the canonical format because its bytes are fully
determined by the pixels.  SVG output draws one rectangle per horizontal run
of black pixels.  PNG output is available through matplotlib when installed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class DiagramError(OSError):
    pass


def _as_rows(trajectory) -> np.ndarray:
    snaps = getattr(trajectory, "snapshots", trajectory)
    if snaps is None:
        raise ValueError("trajectory has no snapshots")
    times = getattr(trajectory, "times", None)
    if times is not None and len(times) > 2:
        dt = np.diff(np.asarray(times, float))
        if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
            raise ValueError("diagram needs a uniform time grid")
    rows = np.asarray(snaps)
    if rows.ndim != 2:
        raise ValueError("expected a 2-D array of snapshots")
    return (rows != 0).astype(np.uint8)


def pbm_bytes(trajectory) -> bytes:
    rows = _as_rows(trajectory)
    h, w = rows.shape
    return f"P4\n{w} {h}\n".encode("ascii") + np.packbits(rows, axis=1).tobytes()


def svg_bytes(trajectory, scale: int = 1) -> bytes:
    rows = _as_rows(trajectory)
    h, w = rows.shape
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * scale}" height="{h * scale}" '
           f'viewBox="0 0 {w} {h}" shape-rendering="crispEdges">',
           f'<rect width="{w}" height="{h}" fill="white"/>', '<g fill="black">']
    for y in range(h):
        r = np.concatenate([[0], rows[y], [0]]).astype(np.int8)
        d = np.diff(r)
        for a, b in zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)):
            out.append(f'<rect x="{a}" y="{y}" width="{b - a}" height="1"/>')
    out.append("</g></svg>\n")
    return "\n".join(out).encode("ascii")


def _write(path: Path, data: bytes):
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise DiagramError(f"{path}: {exc.strerror or exc}") from exc


def render_diagram(trajectory, path) -> Path:
    """Write a diagram; the format follows the suffix (.pbm, .svg or .png)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pbm":
        _write(path, pbm_bytes(trajectory))
    elif suffix == ".svg":
        _write(path, svg_bytes(trajectory))
    elif suffix == ".png":
        rows = _as_rows(trajectory)
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise DiagramError(f"{path}: PNG output needs matplotlib") from exc
        h, w = rows.shape
        fig = plt.figure(figsize=(w / 100, h / 100), dpi=100)
        ax = fig.add_axes([0, 0, 1, 1])
        ax.imshow(rows, cmap="binary", interpolation="nearest", aspect="auto", vmin=0, vmax=1)
        ax.set_axis_off()
        try:
            fig.savefig(path, dpi=100, metadata={"Software": None})
        except OSError as exc:
            raise DiagramError(f"{path}: {exc.strerror or exc}") from exc
        finally:
            plt.close(fig)
    else:
        raise ValueError(f"unsupported diagram format {suffix!r}")
    return path


def read_pbm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 2)
    if parts[0] != b"P4" or len(parts) < 3:
        raise ValueError(f"{path}: not a binary PBM file")
    w, h = (int(v) for v in parts[1].split())
    bits = np.unpackbits(np.frombuffer(parts[2], dtype=np.uint8).reshape(h, -1), axis=1)
    return bits[:, :w]
