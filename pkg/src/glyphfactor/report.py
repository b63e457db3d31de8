"""Plain-text evaluation reports: ``key = value`` sections plus an aligned summary table.

Numbers are written with ``repr`` so that ``parse_report`` returns them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

BASELINE = "Most common"


class ReportError(ValueError):
    pass


@dataclass
class Fragment:
    """One metric of one model variant, plus any supporting numbers."""

    variant: str
    metric: str  # "f1" or "qvec"
    value: float
    details: dict = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [_parse_value(x) for x in inner.split(",")] if inner else []
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _key(name: str) -> str:
    return name.replace(" ", "_")


def render_table(fragments: list[Fragment]) -> str:
    variants: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    for fr in fragments:
        if fr.variant not in variants:
            variants.append(fr.variant)
        cells[(fr.variant, fr.metric)] = fr.value
    # the baseline goes last, as a reference row
    variants.sort(key=lambda v: v == BASELINE)
    width = max(len("Model"), *(len(v) for v in variants))
    lines = [f"{'Model':<{width}}  {'F1':>7}  {'QVEC':>7}"]
    for v in variants:
        f1 = cells.get((v, "f1"))
        q = cells.get((v, "qvec"))
        lines.append(f"{v:<{width}}  {'-' if f1 is None else f'{f1:.3f}':>7}  {'-' if q is None else f'{q:.1f}':>7}")
    return "\n".join(lines)


def emit_report(fragments: list[Fragment], path=None, meta: dict | None = None) -> str:
    if not fragments:
        raise ReportError("a report needs at least one fragment")
    lines = ["[meta]"]
    for k, v in (meta or {}).items():
        lines.append(f"{k} = {_fmt(v)}")
    lines += ["", "[metrics]"]
    for fr in fragments:
        base = f"{_key(fr.variant)}.{fr.metric}"
        lines.append(f"{base} = {_fmt(float(fr.value))}")
        for k, v in fr.details.items():
            lines.append(f"{base}.{k} = {_fmt(v)}")
    lines += ["", "[table]", render_table(fragments), ""]
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_report(source) -> dict:
    """Return ``{"meta": {...}, "metrics": {...}, "table": [rows]}`` from a report path or text."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text(encoding="utf-8")
    out: dict = {"meta": {}, "metrics": {}, "table": []}
    section = None
    for raw in text.splitlines():
        line = raw.rstrip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]") and line[1:-1] in out:
            section = line[1:-1]
            continue
        if section in ("meta", "metrics"):
            if " = " not in line:
                raise ReportError(f"malformed line in [{section}]: {line!r}")
            k, v = line.split(" = ", 1)
            out[section][k] = _parse_value(v)
        elif section == "table":
            out["table"].append(line)
    return out
