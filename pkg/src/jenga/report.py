"""Static HTML pages for removal sequences and evaluation reports.

Pages only link to files in their own directory so a results folder can be
copied or zipped as a unit.
"""

from __future__ import annotations

import html
from pathlib import Path
from typing import Mapping

from .engine import RemovalSequence
from .evaluation import EvalReport

_STYLE = """
body { font-family: sans-serif; margin: 24px; color: #222; }
h1 { font-size: 20px; }
.strip { display: flex; flex-wrap: wrap; gap: 12px; }
.step { border: 1px solid #ccc; padding: 6px; font-size: 12px; }
.step img { display: block; image-rendering: pixelated; width: 240px; }
table { border-collapse: collapse; font-size: 13px; }
td, th { border: 1px solid #ccc; padding: 3px 8px; text-align: left; }
tr.wrong td { background: #fde2e2; }
tr.failed td { background: #fff3cd; }
code { font-size: 12px; }
"""


def _page(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{html.escape(title)}</title><style>{_STYLE}</style></head>\n"
        f"<body>\n<h1>{html.escape(title)}</h1>\n{body}\n</body></html>\n"
    )


def _kv_table(items: Mapping) -> str:
    rows = "".join(
        f"<tr><th>{html.escape(str(k))}</th><td><code>{html.escape(str(v))}</code></td></tr>" for k, v in items.items()
    )
    return f"<table>{rows}</table>"


def sequence_gallery(seq: RemovalSequence, directory: str | Path) -> Path:
    """Write ``gallery.html`` next to the step images of a saved sequence."""
    d = Path(directory)
    cells = ['<div class="step"><img src="initial.png" alt="initial"><div>input</div></div>']
    for s in seq.steps:
        table = ", ".join(f"{html.escape(o.id)}={o.score.value:.3f}" for o in s.score_table)
        tie = " (tie broken)" if s.tie_broken else ""
        cells.append(
            f'<div class="step"><img src="step_{s.index}.mask.png" alt="mask {s.index}">'
            f'<img src="step_{s.index}.png" alt="after {s.index}">'
            f"<div>step {s.index}: removed <b>{html.escape(s.object_id)}</b>"
            f" score {s.score.value:.3f}{tie}</div><div>{table}</div></div>"
        )
    term = seq.terminated.value if seq.terminated else "unknown"
    body = (
        f"<p>{len(seq.steps)} removals, terminated: <b>{html.escape(term)}</b></p>\n"
        f'<div class="strip">{"".join(cells)}</div>\n'
        f"<h2>Configuration</h2>{_kv_table(seq.config)}\n"
        f"<h2>Backends</h2>{_kv_table(seq.provenance)}"
    )
    out = d / "gallery.html"
    out.write_text(_page("Removal sequence", body))
    return out


def eval_report_html(report: EvalReport, path: str | Path, config: Mapping | None = None) -> Path:
    rows = []
    for r in report.per_case:
        cls = "failed" if r.failed else ("" if r.correct else "wrong")
        pred = html.escape(str(r.predicted))
        note = html.escape(r.error or "")
        rows.append(
            f'<tr class="{cls}"><td>{html.escape(r.case_id)}</td><td><code>{pred}</code></td>'
            f"<td>{'yes' if r.correct else 'no'}</td><td>{note}</td></tr>"
        )
    body = (
        f"<p><b>{html.escape(report.method)}</b> on <b>{html.escape(report.dataset)}</b>: "
        f"{report.correct}/{report.total} = <b>{report.percent()}</b></p>\n"
        + (f"<h2>Configuration</h2>{_kv_table(config)}\n" if config else "")
        + "<table><tr><th>case</th><th>predicted</th><th>correct</th><th>note</th></tr>"
        + "".join(rows)
        + "</table>"
    )
    path = Path(path)
    path.write_text(_page(f"{report.method} / {report.dataset}", body))
    return path


def ablation_html(reports: Mapping[tuple[int, str], EvalReport], path: str | Path) -> Path:
    ns = sorted({n for n, _ in reports})
    slots = sorted({s for _, s in reports}, key=lambda s: (s != "both", s))
    head = "".join(f"<th>N = {n}</th>" for n in ns)
    rows = []
    for s in slots:
        cells = "".join(
            f"<td>{reports[(n, s)].percent()} ({reports[(n, s)].correct}/{reports[(n, s)].total})</td>"
            if (n, s) in reports else "<td></td>"
            for n in ns
        )
        rows.append(f"<tr><th>{html.escape(s)}</th>{cells}</tr>")
    body = f"<table><tr><th>slots</th>{head}</tr>{''.join(rows)}</table>"
    path = Path(path)
    path.write_text(_page("Ablation", body))
    return path
