"""CSV/JSON emission and a small SVG line plotter."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from typing import Iterable, Sequence

FLOAT_FMT = "%.17g"


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return FLOAT_FMT % v
    if v is None:
        return ""
    return str(v)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path: str):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def sha256_of(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _jsonable(obj.item())
    return obj


def write_json(path: str, payload) -> str:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_sidecar(out_dir: str, name: str, config: dict, files: Sequence[str], extra=None) -> str:
    """JSON header with the config and sha256 of every emitted file."""
    payload = {"config": config,
               "files": {os.path.basename(f): sha256_of(f) for f in files}}
    if extra:
        payload.update(extra)
    return write_json(os.path.join(out_dir, name), payload)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
            "#7f7f7f", "#bcbd22", "#e377c2")


def svg_lines(path: str, x: Sequence[float], series: dict, title: str = "",
              log_y: bool = True, width: int = 640, height: int = 400) -> str:
    """Line plot of several y-series against x. Non-positive values are skipped on log axes."""
    pad = 50
    pts = {}
    for name, ys in series.items():
        seq = []
        for xv, yv in zip(x, ys):
            if yv is None or not math.isfinite(yv) or (log_y and yv <= 0):
                continue
            seq.append((xv, math.log10(yv) if log_y else yv))
        pts[name] = seq
    allp = [p for seq in pts.values() for p in seq]
    with open(path, "w") as fh:
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n')
        fh.write(f'<text x="{pad}" y="20" font-size="14">{title}</text>\n')
        if allp:
            x0 = min(p[0] for p in allp)
            x1 = max(p[0] for p in allp)
            y0 = min(p[1] for p in allp)
            y1 = max(p[1] for p in allp)
            x1 = x1 if x1 > x0 else x0 + 1
            y1 = y1 if y1 > y0 else y0 + 1

            def px(v):
                return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

            def py(v):
                return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

            fh.write(f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
                     f'height="{height - 2 * pad}" fill="none" stroke="black"/>\n')
            lab = "log10 " if log_y else ""
            fh.write(f'<text x="{pad}" y="{height - 15}" font-size="11">x: {x0:.4g} .. {x1:.4g}; '
                     f'{lab}y: {y0:.4g} .. {y1:.4g}</text>\n')
            for k, (name, seq) in enumerate(pts.items()):
                color = _PALETTE[k % len(_PALETTE)]
                if len(seq) >= 2:
                    d = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in seq)
                    fh.write(f'<polyline fill="none" stroke="{color}" points="{d}"/>\n')
                fh.write(f'<text x="{width - pad + 4}" y="{pad + 12 * (k + 1)}" font-size="10" '
                         f'fill="{color}">{name}</text>\n')
        fh.write("</svg>\n")
    return path
