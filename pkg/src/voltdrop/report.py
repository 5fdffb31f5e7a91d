"""File outputs: traces, flash dumps, verdict CSVs, the aggregate report.

All writers are byte-stable: identical results produce identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .analyzer import RequestVerdict
from .engine import RunRecord
from .errors import AnalysisError, VoltdropError
from .ftl import DeviceEvent, EventKind
from .workload import DataPacket, Op

VERDICT_HEADER = ["req_id", "op", "lba", "len", "completed", "notApplied", "class"]
COUNT_COLUMNS = ["faults", "requests", "clean", "data_failure", "fwa", "io_error", "data_loss",
                 "loss_per_fault", "reclassified", "responded_iops"]


class OutputError(VoltdropError):
    pass


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def verdict_csv(verdicts: list[RequestVerdict]) -> str:
    return _csv_text([VERDICT_HEADER] + [v.csv_row() for v in verdicts])


def trace_text(trace) -> str:
    return "".join(ev.line() + "\n" for ev in trace)


def parse_trace(text: str) -> list[DeviceEvent]:
    events = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise AnalysisError(f"trace line {n}: expected 6 fields, got {len(parts)}")
        try:
            t, rid, sub = int(parts[0]), int(parts[1]), int(parts[2])
            kind = EventKind(parts[3])
            lba, length = int(parts[4]), int(parts[5])
        except ValueError as e:
            raise AnalysisError(f"trace line {n}: {e}") from None
        events.append(DeviceEvent(t, kind, rid, sub, lba, length))
    return events


def flash_dump(record: RunRecord) -> dict:
    """Post-restore evidence for every request, enough to re-run the analyzer."""
    packets = []
    for p in record.packets:
        packets.append({
            "id": p.id, "op": p.op.value, "lba": p.lba, "length": p.length,
            "issue_time": p.issue_time,
            "checksum_data": p.checksum_data,
            "checksum_before": p.checksum_before,
            "readback": record.readbacks.get(p.id),
            "verified_at": record.verified_at.get(p.id),
            "page_checksums": list(p.page_crcs),
        })
    return {
        "page_size": record.page_size,
        "horizon_ns": record.horizon,
        "window_ns": record.window,
        "cutoffs_ns": list(record.cutoffs),
        "restores_ns": list(record.restores),
        "packets": packets,
        "neighbor_pages": {str(c): {str(w): crcs for w, crcs in sorted(snap.items())}
                           for c, snap in sorted(record.neighbor_pages.items())},
    }


def dump_text(record: RunRecord) -> str:
    return json.dumps(flash_dump(record), sort_keys=True, separators=(",", ":")) + "\n"


def record_from_files(trace_text_: str, dump: dict) -> RunRecord:
    """Rebuild a RunRecord from a trace and a flash dump (standalone verify)."""
    try:
        packets = []
        readbacks, verified = {}, {}
        for i, d in enumerate(dump["packets"]):
            if d["id"] != i:
                raise AnalysisError(f"flash dump: packet ids not dense at index {i}")
            p = DataPacket(d["id"], Op(d["op"]), d["lba"], d["length"], issue_time=d["issue_time"],
                           checksum_data=d["checksum_data"], checksum_before=d["checksum_before"],
                           checksum_after=d["readback"], page_crcs=tuple(d["page_checksums"]))
            packets.append(p)
            if d["readback"] is not None:
                readbacks[p.id] = d["readback"]
            if d["verified_at"] is not None:
                verified[p.id] = d["verified_at"]
        neighbor = {int(c): {int(w): list(v) for w, v in snap.items()}
                    for c, snap in dump["neighbor_pages"].items()}
        return RunRecord(packets, parse_trace(trace_text_), readbacks, verified, neighbor,
                         list(dump["cutoffs_ns"]), list(dump["restores_ns"]), dump["horizon_ns"],
                         dump["window_ns"], dump["page_size"])
    except (KeyError, TypeError) as e:
        raise AnalysisError(f"flash dump malformed: {e!r}") from None


def load_record(trace_path, dump_path) -> RunRecord:
    try:
        trace = Path(trace_path).read_text()
        dump = json.loads(Path(dump_path).read_text())
    except OSError as e:
        raise AnalysisError(f"cannot read {e.filename}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise AnalysisError(f"flash dump is not valid JSON: {e}") from None
    return record_from_files(trace, dump)


def _fmt(x) -> str:
    return f"{x:.4f}" if isinstance(x, float) else str(x)


def report_rows(results) -> list[list[str]]:
    param_cols: list[str] = []
    for r in results:
        for k in r.report.params:
            if k not in param_cols:
                param_cols.append(k)
    rows = [param_cols + COUNT_COLUMNS]
    for r in results:
        rep = r.report
        counts = [rep.faults, rep.n_requests, rep.clean, rep.data_failure, rep.fwa, rep.io_error,
                  rep.data_loss, rep.loss_per_fault, rep.reclassified, rep.responded_iops]
        rows.append([_fmt(rep.params.get(k, "")) for k in param_cols] + [_fmt(c) for c in counts])
    return rows


def summary_text(results) -> str:
    head = ["run", "faults", "requests", "clean", "data_failure", "fwa", "io_error", "loss/fault"]
    rows = [head]
    for r in results:
        rep = r.report
        rows.append([r.label, str(rep.faults), str(rep.n_requests), str(rep.clean),
                     str(rep.data_failure), str(rep.fwa), str(rep.io_error),
                     f"{rep.loss_per_fault:.2f}"])
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    return "\n".join(lines) + "\n"


def emit_reports(results, output_dir, extras: dict[str, str] | None = None) -> list[Path]:
    """Write every output file; returns the paths written."""
    if not results:
        raise OutputError("no results to report")
    out = Path(output_dir)
    files: dict[Path, str] = {}
    for r in results:
        files[out / "verdicts" / f"{r.label}.csv"] = verdict_csv(r.verdicts)
        files[out / "traces" / f"{r.label}.trace"] = trace_text(r.record.trace)
        files[out / "dumps" / f"{r.label}.json"] = dump_text(r.record)
    files[out / "report.csv"] = _csv_text(report_rows(results))
    files[out / "summary.txt"] = summary_text(results)
    for name, text in (extras or {}).items():
        files[out / name] = text
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
    except OSError as e:
        raise OutputError(f"cannot write {e.filename}: {e.strerror}") from None
    return sorted(files)
