"""Structured-text (``key = json-value``), CSV and plain-text renderings of results."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

import numpy as np

from .debias import CorrectedFit
from .glm import FitResult


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps_kv(record: dict) -> str:
    """One ``key = value`` line per field; values are JSON (arrays as lists)."""
    return "".join(f"{key} = {json.dumps(_plain(val))}\n" for key, val in record.items())


def loads_kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, val = line.partition(" = ")
        out[key.strip()] = json.loads(val)
    return out


def fit_record(fit: FitResult) -> dict:
    return {
        "names": list(fit.x_names),
        "beta": fit.beta,
        "deviance": fit.deviance,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "clamp_count": fit.clamp_count,
        "outer_tol": fit.options.outer_tol,
        "inner_tol": fit.options.inner_tol,
    }


def corrected_record(c: CorrectedFit, bias_correction: bool = True) -> dict:
    rec = {
        "names": list(c.x_names),
        "beta_uncorrected": c.beta_uncorrected,
        "se": c.se,
        "z_uncorrected": c.z_uncorrected,
    }
    if c.odds_ratio_uncorrected is not None:
        rec.update(odds_ratio_uncorrected=c.odds_ratio_uncorrected, or_se_uncorrected=c.or_se_uncorrected,
                   or_z_uncorrected=c.or_z_uncorrected)
    if bias_correction:
        rec.update(beta_debiased=c.beta_debiased, z=c.z)
        if c.odds_ratio is not None:
            rec.update(odds_ratio=c.odds_ratio, or_se=c.or_se, or_z=c.or_z)
        rec.update(bias_alpha=c.bias.B_alpha, bias_gamma=c.bias.B_gamma, bias_rho=c.bias.B_rho,
                   W_hat=c.bias.W_hat)
    rec.update(I=c.I, J=c.J, T=c.T, n=c.n)
    return rec


def corrected_csv(c: CorrectedFit, bias_correction: bool = True) -> str:
    cols = ["name", "beta_uncorrected", "se", "z_uncorrected", "odds_ratio_uncorrected",
            "or_se_uncorrected", "or_z_uncorrected"]
    if bias_correction:
        cols += ["beta_debiased", "z", "odds_ratio", "or_se", "or_z", "bias_alpha", "bias_gamma", "bias_rho"]
    rows = []
    for k, name in enumerate(c.x_names):
        values = {
            "name": name, "beta_uncorrected": c.beta_uncorrected[k], "se": c.se[k],
            "z_uncorrected": c.z_uncorrected[k], "odds_ratio_uncorrected": c.odds_ratio_uncorrected[k],
            "or_se_uncorrected": c.or_se_uncorrected[k], "or_z_uncorrected": c.or_z_uncorrected[k],
        }
        if bias_correction:
            values.update(beta_debiased=c.beta_debiased[k], z=c.z[k], odds_ratio=c.odds_ratio[k],
                          or_se=c.or_se[k], or_z=c.or_z[k], bias_alpha=c.bias.B_alpha[k],
                          bias_gamma=c.bias.B_gamma[k], bias_rho=c.bias.B_rho[k])
        rows.append(values)
    return write_csv_text(cols, rows)


def write_csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def corrected_text(c: CorrectedFit, bias_correction: bool = True) -> str:
    """Two-panel table: model parameters, then odds ratios."""
    names = list(c.x_names)
    width = max(10, *(len(nm) + 2 for nm in names))
    sets = [("uncorrected", c.beta_uncorrected, c.z_uncorrected, c.odds_ratio_uncorrected,
             c.or_se_uncorrected, c.or_z_uncorrected)]
    if bias_correction:
        sets.append(("debiased", c.beta_debiased, c.z, c.odds_ratio, c.or_se, c.or_z))
    head = "".join(f"{nm:>{width}}" for _ in sets for nm in names)
    groups = "".join(f"{label:^{width * len(names)}}" for label, *_ in sets)
    lines = [f"{'':14}{groups}", f"{'':14}{head}", "A: Model parameters"]
    lines.append(f"{'Estimate':14}" + "".join(f"{b:>{width}.3f}" for _, beta, *_ in sets for b in beta))
    lines.append(f"{'Std. err.':14}" + "".join(f"{s:>{width}.3f}" for _ in sets for s in c.se))
    lines.append(f"{'z-statistic':14}" + "".join(f"{z:>{width}.3f}" for _, _, zs, *_ in sets for z in zs))
    lines.append("B: Odds ratios / relative risks")
    lines.append(f"{'Estimate':14}" + "".join(f"{o:>{width}.3f}" for s in sets for o in s[3]))
    lines.append(f"{'Std. err.':14}" + "".join(f"{o:>{width}.3f}" for s in sets for o in s[4]))
    lines.append(f"{'z-statistic':14}" + "".join(f"{o:>{width}.3f}" for s in sets for o in s[5]))
    lines.append(f"I = {c.I}, J = {c.J}, T = {c.T}, n = {c.n}")
    return "\n".join(lines) + "\n"


def dataclass_record(obj) -> dict:
    return {k: _plain(v) for k, v in dataclasses.asdict(obj).items()}
