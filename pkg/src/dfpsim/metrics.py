"""Latency records, summary statistics, arrival-rate series and their CSV forms."""

from __future__ import annotations

import csv
import io
import math
from typing import NamedTuple

from .errors import AccountingError, ArgumentError, QueryError

RECORD_HEADER = (
    "job_id,message_id,src_terminal,dst_terminal,size_bytes,issue_ns,"
    "delivery_ns,latency_ns,hops,path_class,vl"
)
SUMMARY_HEADER = "job_id,count,min_ns,p25_ns,median_ns,p75_ns,max_ns,mean_ns"
ARRIVAL_HEADER = "job_id,group,window_start_ns,window_len_ns,bytes,rate_bytes_per_s"


class LatencyRecord(NamedTuple):
    job_id: int
    message_id: int
    src_terminal: int
    dst_terminal: int
    size: int
    issue_time: int
    delivery_time: int
    hop_count: int
    path_class: str
    vl_at_delivery: int

    @property
    def latency(self):
        return self.delivery_time - self.issue_time


class SummaryStats(NamedTuple):
    count: int
    min: int
    p25: int
    median: int
    p75: int
    max: int
    mean: float


class ArrivalRateSample(NamedTuple):
    group: int
    window_start: int
    window_len: int
    bytes_arrived: int

    @property
    def rate(self):
        """Bytes per second."""
        return self.bytes_arrived * 1e9 / self.window_len


class LatencyCollector:
    """Holds one record per ``(job_id, message_id)``."""

    def __init__(self):
        self._records = {}

    def __len__(self):
        return len(self._records)

    def record_delivery(self, job_id, message_id, src_terminal, dst_terminal, size,
                        issue_time, delivery_time, hop_count, path_class, vl):
        key = (job_id, message_id)
        if key in self._records:
            raise AccountingError(f"message {message_id} of job {job_id} recorded twice")
        if delivery_time < issue_time:
            raise AccountingError(
                f"message {message_id} of job {job_id} delivered at {delivery_time} before issue at {issue_time}"
            )
        rec = LatencyRecord(job_id, message_id, src_terminal, dst_terminal, size,
                            issue_time, delivery_time, hop_count, path_class, vl)
        self._records[key] = rec
        return rec

    def records(self, job_id=None):
        recs = sorted(self._records.values(), key=lambda r: (r.job_id, r.message_id))
        if job_id is not None:
            recs = [r for r in recs if r.job_id == job_id]
        return recs

    def job_ids(self):
        return sorted({k[0] for k in self._records})


def nearest_rank(sorted_values, pct):
    """Nearest-rank percentile of an ascending sequence (``pct`` in 0..100)."""
    n = len(sorted_values)
    if n == 0:
        raise QueryError("percentile of an empty set")
    if not 0 <= pct <= 100:
        raise ArgumentError(f"percentile must lie in 0..100, got {pct}")
    rank = max(1, math.ceil(pct * n / 100))
    return sorted_values[rank - 1]


def summarize_latencies(latencies):
    vals = sorted(latencies)
    if not vals:
        raise QueryError("no latency records to summarize")
    return SummaryStats(
        count=len(vals),
        min=vals[0],
        p25=nearest_rank(vals, 25),
        median=nearest_rank(vals, 50),
        p75=nearest_rank(vals, 75),
        max=vals[-1],
        mean=math.fsum(vals) / len(vals),
    )


def summarize(records, job_id=None):
    """SummaryStats of the records (optionally only those of ``job_id``)."""
    lat = [r.latency for r in records if job_id is None or r.job_id == job_id]
    if not lat:
        who = "" if job_id is None else f" for job {job_id}"
        raise QueryError(f"no latency records{who}")
    return summarize_latencies(lat)


def arrival_rate_series(arrivals, job_id, group, window_len, bin_len, end_time, num_groups):
    """Consecutive windows covering ``[0, end_time)`` for one job and group.

    ``arrivals`` maps ``(job, group, bin_index)`` to bytes, with bins of
    ``bin_len`` ns; ``window_len`` must be a whole multiple of ``bin_len``.
    """
    if window_len <= 0:
        raise ArgumentError(f"window_len must be positive, got {window_len}")
    if window_len % bin_len:
        raise ArgumentError(f"window_len {window_len} is not a multiple of the {bin_len} ns sample bin")
    if not 0 <= group < num_groups:
        raise QueryError(f"unknown group {group}")
    per = window_len // bin_len
    nwin = max(1, -(-end_time // window_len))
    totals = [0] * nwin
    for (job, g, b), nbytes in arrivals.items():
        if job == job_id and g == group:
            w = b // per
            if w >= nwin:
                totals.extend([0] * (w + 1 - nwin))
                nwin = w + 1
            totals[w] += nbytes
    return [ArrivalRateSample(group, w * window_len, window_len, totals[w]) for w in range(nwin)]


# --- CSV -------------------------------------------------------------------------


def _fmt_float(x):
    return repr(float(x))


def records_csv(records):
    out = io.StringIO()
    out.write(RECORD_HEADER + "\n")
    w = csv.writer(out, lineterminator="\n")
    for r in records:
        w.writerow((r.job_id, r.message_id, r.src_terminal, r.dst_terminal, r.size, r.issue_time,
                    r.delivery_time, r.latency, r.hop_count, r.path_class, r.vl_at_delivery))
    return out.getvalue()


def summary_row(job_id, s):
    return (job_id, s.count, s.min, s.p25, s.median, s.p75, s.max, _fmt_float(s.mean))


def summary_csv(rows):
    """``rows`` is an iterable of ``(job_id, SummaryStats)``."""
    out = io.StringIO()
    out.write(SUMMARY_HEADER + "\n")
    w = csv.writer(out, lineterminator="\n")
    for job_id, s in rows:
        w.writerow(summary_row(job_id, s))
    return out.getvalue()


def arrival_csv(rows):
    """``rows`` is an iterable of ``(job_id, ArrivalRateSample)``."""
    out = io.StringIO()
    out.write(ARRIVAL_HEADER + "\n")
    w = csv.writer(out, lineterminator="\n")
    for job_id, s in rows:
        w.writerow((job_id, s.group, s.window_start, s.window_len, s.bytes_arrived, _fmt_float(s.rate)))
    return out.getvalue()


def read_records_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or ",".join(rows[0]) != RECORD_HEADER:
        raise QueryError("not a records CSV")
    recs = []
    for r in rows[1:]:
        recs.append(LatencyRecord(int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), int(r[5]),
                                  int(r[6]), int(r[8]), r[9], int(r[10])))
    return recs
