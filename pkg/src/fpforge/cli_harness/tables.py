"""Aligned text tables for evaluation reports, with a full-precision mirror.

The text table prints Acc/AP as percentages at one decimal; the mirror dict
carries the same numbers unrounded so report.json loses nothing.
"""

from __future__ import annotations


def _fmt(x: float) -> str:
    return f"{100.0 * x:.1f}"


def emit_table(rows) -> tuple:
    """rows: list of (label, EvalReport) pairs sharing one source set.

    Returns (text, mirror) where text is the aligned table and mirror is a
    JSON-ready dict with full-precision values.
    """
    if not rows:
        raise ValueError("no rows to tabulate")
    sources = sorted(rows[0][1].sources.keys())
    for label, rep in rows:
        if sorted(rep.sources.keys()) != sources:
            raise ValueError(
                f"row {label!r} has source set {sorted(rep.sources.keys())}, "
                f"expected {sources}")

    header = [""]
    for src in sources:
        header += [f"{src}", ""]
    header += ["Mean", ""]
    sub = ["arm"] + ["Acc", "AP"] * (len(sources) + 1)

    body = []
    mirror_rows = {}
    for label, rep in rows:
        cells = [label]
        for src in sources:
            cells += [_fmt(rep.sources[src]["acc"]), _fmt(rep.sources[src]["ap"])]
        cells += [_fmt(rep.mean_acc), _fmt(rep.mean_ap)]
        body.append(cells)
        mirror_rows[label] = {
            "sources": {s: dict(rep.sources[s]) for s in sources},
            "mean_acc": rep.mean_acc,
            "mean_ap": rep.mean_ap,
        }

    table = [header, sub] + body
    widths = [max(len(r[i]) for r in table) for i in range(len(sub))]
    lines = []
    for r in table:
        lines.append("  ".join(c.rjust(w) if i else c.ljust(w)
                               for i, (c, w) in enumerate(zip(r, widths))).rstrip())
    lines.insert(2, "-" * max(len(ln) for ln in lines))
    text = "\n".join(lines) + "\n"

    mirror = {
        "columns": sources + ["mean"],
        "unit": "fraction",
        "rows": mirror_rows,
        "row_order": [label for label, _ in rows],
    }
    return text, mirror
