"""CSV and summary writers. Floats use 17 significant digits so files round-trip."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .analysis import RegretCurves
from .env import TrialTrace

AGGREGATE_COLUMNS = ("trial", "t", "regret", "cum_regret", "beta", "coverage",
                     "epl_term", "p_opt")
CURVE_COLUMNS = ("t", "mean", "q10", "q90", "se")


def fmt(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def format_aggregate_row(trial: int, t: int, regret: float, cum: float, beta: float,
                         coverage: bool, epl: float, p_opt: float) -> list[str]:
    return [str(int(trial)), str(int(t)), fmt(regret), fmt(cum), fmt(beta),
            "1" if coverage else "0", fmt(epl), fmt(p_opt)]


def parse_aggregate_row(row: list[str]) -> tuple:
    trial, t, regret, cum, beta, cov, epl, p = row
    return (int(trial), int(t), float(regret), float(cum), float(beta), cov == "1",
            float(epl), float(p) if p else math.nan)


def aggregate_rows(trial: int, trace: TrialTrace):
    cum = trace.cum_regret
    for i in range(len(trace)):
        yield format_aggregate_row(trial, i + 1, trace.regret[i], cum[i], trace.beta[i],
                                   trace.coverage[i], trace.epl_term[i], trace.p_opt[i])


def aggregate_csv(traces: list[tuple[int, TrialTrace]]) -> str:
    rows = (row for trial, tr in traces for row in aggregate_rows(trial, tr))
    return _csv_text(AGGREGATE_COLUMNS, rows)


def trace_csv(trace: TrialTrace) -> str:
    d = trace.actions.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(d)] +
              ["y", "regret", "beta", "coverage", "epl_term", "p_opt"] +
              [f"theta{i + 1}" for i in range(d)])
    rows = []
    for i in range(len(trace)):
        rows.append([str(i + 1)] + [fmt(v) for v in trace.actions[i]] +
                    [fmt(trace.rewards[i]), fmt(trace.regret[i]), fmt(trace.beta[i]),
                     "1" if trace.coverage[i] else "0", fmt(trace.epl_term[i]),
                     fmt(trace.p_opt[i])] + [fmt(v) for v in trace.thetas[i]])
    return _csv_text(header, rows)


def read_trace_csv(path: str | Path, seed: int = 0) -> TrialTrace:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("x"))

    def col(name):
        j = header.index(name)
        return np.array([float(r[j]) if r[j] else math.nan for r in body])

    def block(prefix):
        cols = [col(f"{prefix}{i + 1}") for i in range(d)]
        return np.column_stack(cols) if body else np.zeros((0, d))

    return TrialTrace(seed=seed, actions=block("x"), rewards=col("y"), regret=col("regret"),
                      beta=col("beta"), coverage=col("coverage") == 1.0,
                      epl_term=col("epl_term"), p_opt=col("p_opt"), thetas=block("theta"))


def curves_csv(curves: RegretCurves) -> str:
    rows = ([str(int(t)), fmt(m), fmt(a), fmt(b), fmt(s)]
            for t, m, a, b, s in zip(curves.t, curves.mean, curves.q10, curves.q90, curves.se))
    return _csv_text(CURVE_COLUMNS, rows)


def summary_text(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
