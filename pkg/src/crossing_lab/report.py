"""Plain-text summary of a directory of run artifacts."""

from __future__ import annotations

import json
from pathlib import Path

__all__ = ["emit_report", "collect_summaries"]


def collect_summaries(root) -> list[tuple[Path, dict]]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    found = []
    for p in sorted(root.rglob("summary.json")):
        with open(p, encoding="utf-8") as fh:
            found.append((p, json.load(fh)))
    if not found:
        raise FileNotFoundError(f"no summary.json under {root}")
    return found


def _fmt(x, spec=".6g"):
    if x is None:
        return "n/a"
    if isinstance(x, (int, float)):
        return format(x, spec)
    return str(x)


def _first(summaries, kind, key):
    for path, s in summaries:
        r = s.get("results", {}).get(kind)
        if r and r.get(key) is not None:
            return r[key], path
    return None, None


def emit_report(root) -> str:
    """Juxtapose the exponent, speed, normalization and check results found under ``root``.

    Each line names the artifact it was read from. Checks whose outcome
    differs from the expected one are written in capitals.
    """
    summaries = collect_summaries(root)
    root = Path(root)
    rel = lambda p: str(p.relative_to(root)) if p is not None else "-"
    lines = [f"# crossing-lab report: {root}", ""]

    lines.append("## Runs")
    for path, s in summaries:
        prov = s.get("provenance", {})
        status = "ok" if s.get("ok", True) else "CHECK FAILURES"
        lines.append(f"- {rel(path)}: kind={s.get('kind')} seed={prov.get('master_seed')} "
                     f"workers={prov.get('workers')} [{status}]")
    lines.append("")

    lines.append("## Annealed exponent")
    b_root, p_root = _first(summaries, "renewal", "beta")
    b_slope, p_slope = _first(summaries, "lyapunov", "beta_slope")
    se, _ = _first(summaries, "lyapunov", "beta_slope_stderr")
    lines.append(f"- beta (renewal root):  {_fmt(b_root)}   [{rel(p_root)}]")
    lines.append(f"- beta (log-slope):     {_fmt(b_slope)} +- {_fmt(se, '.2g')}   [{rel(p_slope)}]")
    if b_root and b_slope:
        lines.append(f"- relative difference:  {_fmt(abs(b_slope - b_root) / b_root, '.3%')}")
    alpha, p_alpha = _first(summaries, "lyapunov", "alpha")
    lines.append(f"- alpha (quenched):     {_fmt(alpha)}   [{rel(p_alpha)}]")
    lines.append("")

    lines.append("## Speed")
    inv_v, p_v = _first(summaries, "renewal", "inverse_v")
    rel_ok, _ = _first(summaries, "renewal", "v_reliable")
    deriv, p_d = _first(summaries, "derivative", "right_derivative_at_zero")
    tau, p_t = _first(summaries, "speed", "tau_per_y")
    lines.append(f"- 1/v (renewal kernel):        {_fmt(inv_v)}   [{rel(p_v)}]"
                 + ("" if rel_ok in (None, True) else "   (TAIL REMAINDER > 1%: UNRELIABLE)"))
    lines.append(f"- d beta / d lambda at 0+:     {_fmt(deriv)}   [{rel(p_d)}]")
    lines.append(f"- E tau_y / y (direct):        {_fmt(tau)}   [{rel(p_t)}]")
    if inv_v and deriv:
        lines.append(f"- derivative vs 1/v:           {_fmt(abs(deriv - inv_v) / inv_v, '.3%')}")
    lines.append("")

    lines.append("## Kernel normalization (sum of q over all block lengths = 1)")
    for key, label in (("sum_q", "sum_{r<=R} q(r)"), ("mass_defect", "mass defect at R"),
                       ("mass_defect_R12", "mass defect at R=12 (beta from R)"),
                       ("epsilon_hat", "tail rate epsilon"), ("beta_bias", "beta bias from tail")):
        val, p = _first(summaries, "renewal", key)
        lines.append(f"- {label}: {_fmt(val)}   [{rel(p)}]")
    lines.append("")

    lines.append("## Checks")
    lines.append("| check | statistic | threshold | result | expected | source |")
    lines.append("|---|---|---|---|---|---|")
    any_checks = False
    for path, s in summaries:
        for c in s.get("checks", []):
            any_checks = True
            exp = c.get("expected_pass", True)
            verdict = "pass" if c["passed"] else "fail"
            name = c["name"]
            if not c.get("as_expected", c["passed"]):
                name, verdict = name.upper(), verdict.upper() + " (UNEXPECTED)"
            lines.append(f"| {name} | {_fmt(c['statistic'])} | {_fmt(c['threshold'])} | {verdict} | "
                         f"{'pass' if exp else 'fail'} | {rel(path)} |")
    if not any_checks:
        lines.append("| (none) | | | | | |")
    lines.append("")
    skipped = [(path, name, why) for path, s in summaries
               for name, why in s.get("results", {}).get("diagnostics", {}).get("skipped", {}).items()]
    if skipped:
        lines.append("Skipped (precondition not met):")
        lines.extend(f"- {name}: {why}   [{rel(path)}]" for path, name, why in skipped)
        lines.append("")
    return "\n".join(lines)
