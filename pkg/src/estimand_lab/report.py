"""Report documents and their JSON / CSV / text renderings.

JSON and CSV are stable output formats; the text layout is for people and
may change.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Any, Optional

from . import __version__
from .estimands import Estimate, GapReport, ScanRow
from .symbolic import AssumptionReport

CSV_HEADER = ("kind", "value", "mc_se", "n", "seed")
TOOL = "estimand-lab"


def new_document(command: str, config: dict) -> dict:
    return {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "config": dict(config),
        "status": "ok",
        "assumptions": None,
        "estimates": [],
        "gap": None,
        "rows": [],
        "diagnostics": [],
        "warnings": [],
    }


def estimate_row(label: str, est: Estimate) -> dict:
    row = est.to_dict()
    row["kind"] = label
    return row


def set_assumptions(doc: dict, report: AssumptionReport) -> None:
    doc["assumptions"] = report.to_dict()


def set_gap(doc: dict, report: GapReport) -> None:
    doc["assumptions"] = report.assumptions.to_dict()
    doc["estimates"] = [estimate_row(label, est) for label, est in report.estimates()]
    doc["gap"] = {
        "wald_true": report.wald_true.value,
        "ade": report.ade.value,
        "gap": report.gap,
        "gap_se": report.gap_se,
        "n_invalid": report.n_invalid,
    }


def scan_row(row: ScanRow) -> dict:
    out: dict[str, Any] = {"index": row.index, "params": dict(row.params), "seed": row.seed}
    if row.error is not None:
        out["error"] = row.error
        return out
    out.update(
        ade=row.ade.value,
        ade_se=row.ade.mc_se,
        wald_true=row.wald_true.value,
        wald_se=row.wald_true.mc_se,
        gap=row.gap,
        gap_se=row.gap_se,
        error=None,
    )
    return out


# -- renderers --------------------------------------------------------------


def render_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def parse_json(text: str) -> dict:
    return json.loads(text)


def render_csv(doc: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if doc["command"] == "scan":
        params = list(doc["rows"][0]["params"]) if doc["rows"] else []
        writer.writerow(CSV_HEADER + tuple(f"param_{p}" for p in params))
        n = doc["config"]["n"]
        for row in doc["rows"]:
            tail = [repr(float(row["params"][p])) for p in params]
            if row.get("error"):
                writer.writerow(["error", "", "", n, row["seed"], *tail])
                continue
            for kind, value, se in (
                ("ade", row["ade"], row["ade_se"]),
                ("wald_true", row["wald_true"], row["wald_se"]),
                ("gap", row["gap"], row["gap_se"]),
            ):
                writer.writerow([kind, repr(value), repr(se), n, row["seed"], *tail])
        return buf.getvalue()
    writer.writerow(CSV_HEADER)
    for est in doc["estimates"]:
        writer.writerow([est["kind"], repr(est["value"]), repr(est["mc_se"]), est["n"], est["seed"]])
    return buf.getvalue()


def _fmt(value: Optional[float], digits: int = 6) -> str:
    return "-" if value is None else f"{value:.{digits}g}"


def render_text(doc: dict) -> str:
    lines: list[str] = []
    cfg = doc["config"]
    lines.append(f"{TOOL} {doc['version']}  {doc['command']}  model={cfg.get('model')}")
    if "n" in cfg:
        lines.append(f"n={cfg['n']}  seed={cfg['seed']}")
    for d in doc["diagnostics"]:
        lines.append(f"{d['severity']}: {d['message']} at {d['line']}:{d['column']}")
    a = doc["assumptions"]
    if a:
        lines.append("")
        lines.append("assumptions")
        for key, title in (("homogeneity_zx", "Z-X additive homogeneity"), ("linearity_yx", "X-Y additive linearity")):
            c = a[key]
            witness = f"  (witness: {c['witness']})" if c["witness"] is not None else ""
            lines.append(f"  {title:<28} {c['verdict']}{witness}")
        lines.append(f"  {'structural exclusion':<28} {'holds' if a['exclusion_structural'] else 'fails'}")
        for note in a["notes"]:
            lines.append(f"  note: {note}")
    if doc["estimates"] and doc["command"] != "reproduce-paper":
        lines.append("")
        lines.append(f"  {'estimand':<20} {'value':>14} {'mc_se':>12}")
        for e in doc["estimates"]:
            lines.append(f"  {e['kind']:<20} {_fmt(e['value'], 8):>14} {_fmt(e['mc_se'], 3):>12}")
    if doc["command"] == "reproduce-paper" and doc["rows"]:
        lines.append("")
        lines.append(f"  {'quantity':<20} {'expected':>9} {'computed':>12} {'mc_se':>10} {'band':>8}  result")
        for r in doc["rows"]:
            band = "exact" if r["band"] == 0 else _fmt(r["band"], 3)
            verdict = "PASS" if r["pass"] else "FAIL"
            lines.append(
                f"  {r['quantity']:<20} {_fmt(r['expected']):>9} {_fmt(r['computed'], 8):>12} "
                f"{_fmt(r['mc_se'], 3):>10} {band:>8}  {verdict}"
            )
    if doc["command"] == "scan" and doc["rows"]:
        lines.append("")
        params = list(doc["rows"][0]["params"])
        head = "  ".join(f"{p:>8}" for p in params)
        lines.append(f"  {head}  {'ade':>10} {'wald':>10} {'gap':>10} {'gap_se':>9}")
        for r in doc["rows"]:
            vals = "  ".join(f"{r['params'][p]:>8g}" for p in params)
            if r.get("error"):
                lines.append(f"  {vals}  error: {r['error']}")
            else:
                lines.append(
                    f"  {vals}  {_fmt(r['ade']):>10} {_fmt(r['wald_true']):>10} {_fmt(r['gap']):>10} "
                    f"{_fmt(r['gap_se'], 3):>9}"
                )
    if doc["gap"]:
        g = doc["gap"]
        lines.append("")
        lines.append(f"  Wald - ADE = {_fmt(g['gap'])}  (mc_se {_fmt(g['gap_se'], 3)})")
    for w in doc["warnings"]:
        lines.append(f"warning: {w}")
    lines.append(f"status: {doc['status']}")
    return "\n".join(lines) + "\n"


def render(doc: dict, fmt: str) -> str:
    return {"json": render_json, "csv": render_csv, "text": render_text}[fmt](doc)

