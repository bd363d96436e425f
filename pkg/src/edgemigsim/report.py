"""Aggregation of run outputs into comparison tables and CDF data.

Requests are pooled across runs per (app, planner); downtime is averaged per
run.  Error figures are sample standard deviations.  Emission is pure data
(CSV plus a JSON mirror); plotting is out of scope.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
from dataclasses import dataclass, field

from . import latency


@dataclass
class GroupStats:
    app: str
    planner: str
    runs: int = 0
    completed: int = 0
    lost: int = 0
    proc_mean: float = 0.0
    proc_std: float = 0.0
    trans_mean: float = 0.0
    trans_std: float = 0.0
    prop_mean: float = 0.0
    queue_mean: float = 0.0
    total_mean: float = 0.0
    total_std: float = 0.0
    downtime_mean_s: float = 0.0
    downtime_std_s: float = 0.0
    downtime_by_cause: dict = field(default_factory=dict)
    cdf: list = field(default_factory=list)  # sorted completed-request totals (ms)


@dataclass
class Summary:
    groups: dict                 # (app, planner) -> GroupStats
    reductions: dict             # (app, baseline_planner, metric) -> percent lower

    def apps(self) -> list:
        return sorted({app for app, _ in self.groups})

    def planners(self) -> list:
        return sorted({pl for _, pl in self.groups})


def _std(values) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def summarize(outputs) -> Summary:
    """Exact, deterministic aggregation of one or more RunOutputs."""
    if not outputs:
        raise ValueError("summarize needs at least one run output")
    buckets = {}
    for out in outputs:
        for uid in sorted(out.app_of_user):
            key = (out.app_of_user[uid], out.planner)
            buckets.setdefault(key, []).append((out, uid))
    groups = {}
    for key in sorted(buckets):
        app, pl = key
        proc, trans, prop, queue, totals = [], [], [], [], []
        completed = lost = 0
        per_run_downtime = []
        by_cause_acc = {}
        runs = 0
        for out, uid in buckets[key]:
            runs += 1
            for rec in out.records:
                if rec.user != uid:
                    continue
                if rec.status == latency.STATUS_COMPLETED:
                    completed += 1
                    proc.append(rec.proc_ms)
                    trans.append(rec.trans_ms)
                    prop.append(rec.prop_ms)
                    queue.append(rec.queue_ms)
                    totals.append(rec.total_ms)
                else:
                    lost += 1
            dt = out.downtime.get(uid, {"total": 0.0, "by_cause": {}})
            per_run_downtime.append(dt["total"])
            for cause, secs in dt["by_cause"].items():
                by_cause_acc[cause] = by_cause_acc.get(cause, 0.0) + secs
        if completed == 0:
            raise ValueError(f"empty-metrics: no completed requests for {app}/{pl}")
        groups[key] = GroupStats(
            app=app,
            planner=pl,
            runs=runs,
            completed=completed,
            lost=lost,
            proc_mean=statistics.fmean(proc),
            proc_std=_std(proc),
            trans_mean=statistics.fmean(trans),
            trans_std=_std(trans),
            prop_mean=statistics.fmean(prop),
            queue_mean=statistics.fmean(queue),
            total_mean=statistics.fmean(totals),
            total_std=_std(totals),
            downtime_mean_s=statistics.fmean(per_run_downtime),
            downtime_std_s=_std(per_run_downtime),
            downtime_by_cause={c: s / runs for c, s in sorted(by_cause_acc.items())},
            cdf=sorted(totals),
        )
    reductions = {}
    for app in sorted({a for a, _ in groups}):
        orch = groups.get((app, "orchestrated"))
        if orch is None:
            continue
        for (gapp, gpl), st in sorted(groups.items()):
            if gapp != app or gpl == "orchestrated":
                continue
            if st.total_mean > 0:
                reductions[(app, gpl, "e2e")] = (1.0 - orch.total_mean / st.total_mean) * 100.0
            if st.downtime_mean_s > 0:
                reductions[(app, gpl, "downtime")] = (
                    1.0 - orch.downtime_mean_s / st.downtime_mean_s) * 100.0
    return Summary(groups=groups, reductions=reductions)


def _breakdown_csv(summary: Summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["app", "planner", "runs", "completed", "lost",
                "proc_mean_ms", "proc_std_ms", "trans_mean_ms", "trans_std_ms",
                "prop_mean_ms", "queue_mean_ms", "total_mean_ms", "total_std_ms"])
    for key in sorted(summary.groups):
        g = summary.groups[key]
        w.writerow([g.app, g.planner, g.runs, g.completed, g.lost,
                    g.proc_mean, g.proc_std, g.trans_mean, g.trans_std,
                    g.prop_mean, g.queue_mean, g.total_mean, g.total_std])
    return buf.getvalue()


def _downtime_csv(summary: Summary) -> str:
    causes = sorted({c for g in summary.groups.values() for c in g.downtime_by_cause})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["app", "planner", "runs", "downtime_mean_s", "downtime_std_s"]
               + [f"cause_{c}_s" for c in causes])
    for key in sorted(summary.groups):
        g = summary.groups[key]
        w.writerow([g.app, g.planner, g.runs, g.downtime_mean_s, g.downtime_std_s]
                   + [g.downtime_by_cause.get(c, 0.0) for c in causes])
    return buf.getvalue()


def _cdf_csv(stats: GroupStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["total_ms", "cdf"])
    n = len(stats.cdf)
    for i, val in enumerate(stats.cdf, start=1):
        w.writerow([val, i / n])
    return buf.getvalue()


def _summary_json(summary: Summary) -> str:
    doc = {
        "groups": {
            f"{app}/{pl}": {
                "runs": g.runs, "completed": g.completed, "lost": g.lost,
                "proc_mean_ms": g.proc_mean, "proc_std_ms": g.proc_std,
                "trans_mean_ms": g.trans_mean, "trans_std_ms": g.trans_std,
                "prop_mean_ms": g.prop_mean, "queue_mean_ms": g.queue_mean,
                "total_mean_ms": g.total_mean, "total_std_ms": g.total_std,
                "downtime_mean_s": g.downtime_mean_s,
                "downtime_std_s": g.downtime_std_s,
                "downtime_by_cause_s": g.downtime_by_cause,
            }
            for (app, pl), g in sorted(summary.groups.items())
        },
        "reductions_pct": {
            f"{app}/vs_{pl}/{metric}": val
            for (app, pl, metric), val in sorted(summary.reductions.items())
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit(summary: Summary, out_dir, fmt: str = "csv") -> list:
    """Write plot-ready files; rerunning over the same summary is byte-identical."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def _write(name: str, text: str):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)

    if fmt == "csv":
        _write("breakdown.csv", _breakdown_csv(summary))
        _write("downtime.csv", _downtime_csv(summary))
        for key in sorted(summary.groups):
            g = summary.groups[key]
            _write(f"cdf_{g.app}_{g.planner}.csv", _cdf_csv(g))
    _write("summary.json", _summary_json(summary))
    return paths
