"""Export to the CPLEX-style LP text format for cross-checking with other solvers."""

from __future__ import annotations

import math
import re

from .model import EQ, GE, LE, MilpModel

_BAD = re.compile(r"[^A-Za-z0-9_.\[\]]")


def _name(s: str) -> str:
    s = _BAD.sub("_", s)
    return s if s and not s[0].isdigit() else "v_" + s


def _terms(pairs, names) -> str:
    out = []
    for v, c in pairs:
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        out.append(f"{sign} {abs(c):.12g} {names[v]}")
    if not out:
        return "0 " + names[0] if names else "0"
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else text


def to_lp_string(model: MilpModel) -> str:
    names = [_name(v.name) for v in model.variables]
    lines = [f"\\ {model.name}", "Minimize", " obj: " + _terms(sorted(model.objective.items()), names)]
    lines.append("Subject To")
    op = {LE: "<=", GE: ">=", EQ: "="}
    for k, c in enumerate(model.constraints):
        label = _name(c.name) if c.name else f"c{k}"
        lines.append(f" {label}_{k}: {_terms(zip(c.index.tolist(), c.value.tolist()), names)} {op[c.sense]} {c.rhs:.12g}")
    lines.append("Bounds")
    for n, v in zip(names, model.variables):
        lo = "-inf" if math.isinf(v.lower) else f"{v.lower:.12g}"
        hi = "+inf" if math.isinf(v.upper) else f"{v.upper:.12g}"
        lines.append(f" {lo} <= {n} <= {hi}")
    bins = [n for n, v in zip(names, model.variables) if v.binary]
    if bins:
        lines.append("Binary")
        for i in range(0, len(bins), 8):
            lines.append(" " + " ".join(bins[i : i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: MilpModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_lp_string(model))
