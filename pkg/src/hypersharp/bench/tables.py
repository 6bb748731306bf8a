"""CSV and Markdown result tables.

One row per (method, metric); one column per scene plus ``Avg.``. CSV
cells carry full float precision (``repr``) so derived quantities can be
recomputed exactly; Markdown cells use 4 decimals with the best value of
each column in bold. Failed cells read ``failed``.
"""

from __future__ import annotations

from pathlib import Path

AVG = "Avg."
HIGHER_IS_BETTER = {"q2n", "rqnr"}
LABELS = {"ergas": "ERGAS", "sam": "SAM", "q2n": "Q2n",
          "d_lambda": "D_lambda", "d_s": "D_S", "rqnr": "RQNR"}


def _columns(result) -> list[str]:
    return [*result.scenes, AVG]


def _cell(result, method: str, col: str, metric: str):
    if col == AVG:
        return result.average(method, metric)
    return result.value(method, col, metric)


def best_cells(result, metric: str) -> dict[str, set[str]]:
    """Column -> methods holding the best value (ties share the flag)."""
    out = {}
    for col in _columns(result):
        vals = {m: _cell(result, m, col, metric) for m in result.methods}
        vals = {m: v for m, v in vals.items() if v is not None}
        if not vals:
            out[col] = set()
            continue
        best = (max if metric in HIGHER_IS_BETTER else min)(vals.values())
        out[col] = {m for m, v in vals.items() if v == best}
    return out


def csv_text(result) -> str:
    cols = _columns(result)
    lines = [",".join(["method", "metric", *cols, "best"])]
    for metric in result.metrics:
        best = best_cells(result, metric)
        for method in result.methods:
            cells = []
            for col in cols:
                v = _cell(result, method, col, metric)
                cells.append("failed" if v is None else repr(float(v)))
            flags = ";".join(c for c in cols if method in best[c])
            lines.append(",".join([method, metric, *cells, flags]))
    return "\n".join(lines) + "\n"


def markdown_text(result) -> str:
    cols = _columns(result)
    parts = [f"# Results ({result.scale.upper()})", ""]
    for metric in result.metrics:
        best = best_cells(result, metric)
        arrow = "higher is better" if metric in HIGHER_IS_BETTER else "lower is better"
        parts += [f"## {LABELS.get(metric, metric)} ({arrow})", "",
                  "| Method | " + " | ".join(cols) + " |",
                  "|---|" + "---:|" * len(cols)]
        for method in result.methods:
            cells = []
            for col in cols:
                v = _cell(result, method, col, metric)
                text = "failed" if v is None else f"{v:.4f}"
                cells.append(f"**{text}**" if method in best[col] else text)
            parts.append(f"| {method} | " + " | ".join(cells) + " |")
        parts.append("")
    if result.failures:
        parts += ["## Failures", ""]
        for (method, scene), reason in sorted(result.failures.items()):
            parts.append(f"- {method} on {scene}: {reason}")
        parts.append("")
    return "\n".join(parts)


def write_tables(result, out: Path) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"results_{result.scale}.csv"
    md_path = out / f"results_{result.scale}.md"
    csv_path.write_text(csv_text(result))
    md_path.write_text(markdown_text(result))
    return [csv_path, md_path]


def read_csv_table(path) -> dict[tuple[str, str], dict[str, float | None]]:
    """Parse a results CSV back into ``{(method, metric): {column: value}}``."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    cols = header[2:-1]
    table = {}
    for line in lines[1:]:
        parts = line.split(",")
        vals = parts[2:2 + len(cols)]
        table[(parts[0], parts[1])] = {
            c: (None if v == "failed" else float(v)) for c, v in zip(cols, vals)}
    return table
