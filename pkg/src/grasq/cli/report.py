"""Report assembly and emission: JSON, CSV tables and standalone SVG line charts.

``report.json`` is deterministic for a given descriptor; the timestamp,
timings and host details go to ``meta.json``.
"""

import csv
import io
import json
import math
import os

FORMATS = ("csv", "json", "svg")


def _clean(x):
    """JSON-safe plain data; complex numbers become [re, im], non-finite floats strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    try:
        f = float(x)
    except (TypeError, ValueError):
        return str(x)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return f


def build_report(descriptor, results):
    """``results`` holds one entry per experiment: {"result": ...} or {"error": ...}."""
    exps = []
    for exp, res in zip(descriptor.experiments, results):
        entry = {"name": exp.name, "kind": exp.kind, "descriptor": exp.echo(), "derived": _clean(exp.derived)}
        if "error" in res:
            entry["status"] = "error"
            entry["error"] = res["error"]
            entry["checks"] = []
        else:
            r = res["result"]
            entry["status"] = "pass" if all(c["passed"] for c in r["checks"]) else "fail"
            for key in ("checks", "values", "budget", "tables", "charts"):
                entry[key] = _clean(r.get(key, {} if key != "checks" else []))
        exps.append(entry)
    status = "pass"
    if any(e["status"] == "error" for e in exps):
        status = "error"
    elif any(e["status"] == "fail" for e in exps):
        status = "fail"
    return {"status": status, "experiments": exps}


def dumps_json(obj):
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=True) + "\n"


def checks_csv(report):
    """One row per check across all experiments (header only when there are none)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "kind", "check", "value", "relation", "bound", "passed", "invariant"])
    for e in report["experiments"]:
        for c in e.get("checks", []):
            w.writerow([e["name"], e["kind"], c["name"], _fmt(c["value"]), c["relation"], _fmt(c["bound"]),
                        "true" if c["passed"] else "false", c["invariant"]])
    return buf.getvalue()


def table_csv(tab):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(tab["columns"])
    for row in tab["rows"]:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


# ---------------------------------------------------------------- SVG

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 80, 30, 40, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def use_log_axes(series):
    """Log-log exactly when every x and every y of every series is positive."""
    pts = [(x, y) for s in series for x, y in zip(s["x"], s["y"])]
    return bool(pts) and all(x > 0 and y > 0 for x, y in pts)


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, int(math.ceil((b - a) / 6)))
        return [float(v) for v in range(a, b + 1, step)]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi) and len(out) < 12:
        out.append(v)
        v += step
    return out


def _esc(s):
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;"))


def render_svg(ch):
    """Standalone SVG line chart for a chart dict."""
    series = [s for s in ch["series"] if s["x"]]
    log = use_log_axes(series)
    tx = (lambda v: math.log10(v)) if log else (lambda v: v)
    xs = [tx(x) for s in series for x in s["x"]]
    ys = [tx(y) for s in series for y in s["y"]]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(v):
        return _ML + (v - x0) / (x1 - x0) * pw

    def py(v):
        return _MT + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">'
           f'{_esc(ch["title"])}</text>',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1, log):
        if x0 - 1e-12 <= t <= x1 + 1e-12:
            lab = f"1e{int(t)}" if log else f"{t:.3g}"
            out.append(f'<line x1="{px(t):.2f}" y1="{_MT + ph}" x2="{px(t):.2f}" y2="{_MT + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px(t):.2f}" y="{_MT + ph + 20}" text-anchor="middle" font-family="sans-serif" '
                       f'font-size="11">{lab}</text>')
    for t in _ticks(y0, y1, log):
        if y0 - 1e-12 <= t <= y1 + 1e-12:
            lab = f"1e{int(t)}" if log else f"{t:.3g}"
            out.append(f'<line x1="{_ML - 5}" y1="{py(t):.2f}" x2="{_ML}" y2="{py(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{_ML - 8}" y="{py(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                       f'font-size="11">{lab}</text>')
    scale = "log-log" if log else "linear"
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 15}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{_esc(ch["xlabel"])}</text>')
    out.append(f'<text x="18" y="{_MT + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 18 {_MT + ph / 2:.1f})">{_esc(ch["ylabel"])}</text>')
    out.append(f'<g class="axes" data-scale="{scale}"></g>')
    for k, s in enumerate(series):
        col = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{px(tx(x)):.2f},{py(tx(y)):.2f}" for x, y in zip(s["x"], s["y"]))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        for x, y in zip(s["x"], s["y"]):
            out.append(f'<circle cx="{px(tx(x)):.2f}" cy="{py(tx(y)):.2f}" r="2.5" fill="{col}"/>')
        out.append(f'<text x="{_ML + 10}" y="{_MT + 16 + 15 * k}" font-family="sans-serif" font-size="11" '
                   f'fill="{col}">{_esc(s["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- files

def emit_report(report, out_dir, formats=FORMATS, meta=None):
    """Write the report files; returns the list of paths written."""
    for f in formats:
        if f not in FORMATS:
            raise ValueError(f"unknown format {f!r}; choose from {', '.join(FORMATS)}")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror}") from None
    written = []

    def put(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)

    if "json" in formats:
        put("report.json", dumps_json(report))
        if meta is not None:
            put("meta.json", dumps_json(meta))
    if "csv" in formats:
        put("checks.csv", checks_csv(report))
        for e in report["experiments"]:
            for tname, tab in e.get("tables", {}).items():
                put(f"{e['name']}.{tname}.csv", table_csv(tab))
    if "svg" in formats:
        for e in report["experiments"]:
            for ch in e.get("charts", []):
                put(f"{e['name']}.{ch['name']}.svg", render_svg(ch))
    return written
