"""Per-N summary tables (CSV and aligned text) of downstream results."""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict

import numpy as np

DASH = "—"
HEADER_NOTE = "i* is the constrained-space descriptor in percent (rotation, color order follows the bundle)"


def format_descriptor(i):
    return "[" + ", ".join(str(int(round(100 * v))) for v in i) + "]"


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


def _acc(d):
    return None if d is None else 100.0 * d["accuracy"]


def summarize(results, baseline=None, split="test"):
    """Group results by N; returns rows of means/stds (accuracies in percent).

    ``baseline`` may be a separate list of results whose ``*_continuous`` or
    ``baseline_*`` metrics give A_MTL; by default the baseline fields carried by
    ``results`` themselves are used.
    """
    by_n = defaultdict(list)
    for r in results:
        by_n[r.n_per_class].append(r)
    base_by_n = defaultdict(list)
    for r in baseline or []:
        base_by_n[r.n_per_class].append(r)
    rows = []
    for n in sorted(by_n):
        rs = by_n[n]
        desc = np.mean([r.descriptor for r in rs], axis=0)
        a_disc = _mean_std([_acc(getattr(r, f"{split}_discrete")) for r in rs])
        a_cont = _mean_std([_acc(getattr(r, f"{split}_continuous")) for r in rs])
        if baseline is not None:
            mtl = _mean_std([_acc(getattr(r, f"baseline_{split}") or getattr(r, f"{split}_continuous"))
                             for r in base_by_n.get(n, [])])
        else:
            mtl = _mean_std([_acc(getattr(r, f"baseline_{split}")) for r in rs])
        rows.append({
            "N": n,
            "seeds": len(rs),
            "descriptor": desc.tolist(),
            "A_discrete_mean": a_disc[0], "A_discrete_std": a_disc[1],
            "A_continuous_mean": a_cont[0], "A_continuous_std": a_cont[1],
            "A_mtl_mean": mtl[0], "A_mtl_std": mtl[1],
        })
    return rows


CSV_FIELDS = ["N", "seeds", "descriptor", "A_discrete_mean", "A_discrete_std",
              "A_continuous_mean", "A_continuous_std", "A_mtl_mean", "A_mtl_std"]


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        out = dict(row)
        out["descriptor"] = " ".join(repr(float(v)) for v in row["descriptor"])
        for k in CSV_FIELDS[3:]:
            out[k] = "" if row[k] is None else repr(float(row[k]))
        w.writerow(out)
    return buf.getvalue()


def parse_csv(text):
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"N": int(rec["N"]), "seeds": int(rec["seeds"]),
               "descriptor": [float(v) for v in rec["descriptor"].split()]}
        for k in CSV_FIELDS[3:]:
            row[k] = None if rec[k] == "" else float(rec[k])
        rows.append(row)
    return rows


def _pm(mean, std):
    if mean is None or (isinstance(mean, float) and math.isnan(mean)):
        return DASH
    return f"{mean:.1f} ± {std:.1f}"


def rows_to_text(rows, title=None):
    head = ["N", "i*", "A_I*", "A_i*", "A_MTL"]
    body = [[str(r["N"]), format_descriptor(r["descriptor"]),
             _pm(r["A_discrete_mean"], r["A_discrete_std"]),
             _pm(r["A_continuous_mean"], r["A_continuous_std"]),
             _pm(r["A_mtl_mean"], r["A_mtl_std"])] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    line = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    out = []
    if title:
        out.append(title)
    out.append(f"# {HEADER_NOTE}")
    out.append(line(head))
    out.append("  ".join("-" * w for w in widths))
    out.extend(line(b) for b in body)
    return "\n".join(out) + "\n"


def make_report(results, baseline=None, split="test", title=None):
    """Returns (csv_text, aligned_text) for a list of DownstreamResult."""
    rows = summarize(results, baseline, split)
    return rows_to_csv(rows), rows_to_text(rows, title)
