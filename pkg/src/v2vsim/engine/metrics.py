"""Run metrics: accumulation during the slot loop, CSV/JSON export.

Three row streams (per-slot counters, per-window link reliabilities, and
optional controller traces) plus per-link totals.  Accumulation starts
after the configured warmup except for the window stream, which the
feedback loop needs from slot zero.  All writers emit rows in sorted key
order so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field


@dataclass
class LinkTotals:
    """Post-warmup delivery totals of one directed link."""

    attempts: int = 0
    successes: int = 0
    delay_sum_slots: int = 0
    delay_count: int = 0
    delay_max_slots: int = 0

    def pdr(self) -> float:
        return self.successes / self.attempts if self.attempts else 0.0


@dataclass
class RunMetrics:
    """Mutable accumulator for one run."""

    name: str = ""
    protocol: str = ""
    seed: int = 0
    slot_s: float = 0.0025
    warmup_slots: int = 0
    n_slots: int = 0
    target_reliability: float = 0.9

    slot_rows: list = field(default_factory=list)
    window_rows: list = field(default_factory=list)
    controller_rows: list = field(default_factory=list)
    links: dict = field(default_factory=dict)

    control_bytes_total: int = 0
    oracle_power_bytes: int = 0
    n_vehicles_end: int = 0

    # -- accumulation ---------------------------------------------------

    def count_slot(self, slot: int, n_tx: int, attempts: int,
                   deliveries: int, control_bytes: int) -> None:
        if slot >= self.warmup_slots:
            self.slot_rows.append((slot, n_tx, attempts, deliveries,
                                   control_bytes))

    def count_attempt(self, slot: int, sender: int, receiver: int,
                      success: bool, delay_slots: int | None) -> None:
        if slot < self.warmup_slots:
            return
        tot = self.links.get((sender, receiver))
        if tot is None:
            tot = self.links[(sender, receiver)] = LinkTotals()
        tot.attempts += 1
        if success:
            tot.successes += 1
            if delay_slots is not None:
                tot.delay_sum_slots += delay_slots
                tot.delay_count += 1
                if delay_slots > tot.delay_max_slots:
                    tot.delay_max_slots = delay_slots
        return

    def count_window(self, window_end: int, sender: int, receiver: int,
                     attempts: int, successes: int, k_after: float) -> None:
        y = successes / attempts if attempts else 0.0
        self.window_rows.append((window_end, sender, receiver, attempts,
                                 successes, y, k_after))

    def count_controller(self, window_end: int, sender: int, receiver: int,
                         y_meas: float, y_prev: float, slope: float,
                         delta: float, delta_power: float, k_before: float,
                         k_after: float) -> None:
        self.controller_rows.append((window_end, sender, receiver, y_meas,
                                     y_prev, slope, delta, delta_power,
                                     k_before, k_after))

    def count_control_bytes(self, slot: int, n_bytes: int) -> int:
        """Returns the counted amount (zero during warmup)."""
        if slot < self.warmup_slots:
            return 0
        self.control_bytes_total += n_bytes
        return n_bytes

    def count_oracle_bytes(self, slot: int, n_bytes: int) -> None:
        """Extra signaling the genie variant would need on a real wire."""
        if slot >= self.warmup_slots:
            self.oracle_power_bytes += n_bytes

    # -- aggregation ----------------------------------------------------

    def counted_links(self, min_attempts: int = 20) -> dict:
        return {k: v for k, v in self.links.items()
                if v.attempts >= min_attempts}

    def summary(self, min_attempts: int = 20) -> dict:
        counted = self.counted_links(min_attempts)
        pdrs = [t.pdr() for t in counted.values()]
        n = len(pdrs)
        mean_pdr = sum(pdrs) / n if n else 0.0
        var_pdr = (sum((p - mean_pdr) ** 2 for p in pdrs) / n) if n else 0.0
        bar = self.target_reliability - 0.02
        meeting = sum(1 for p in pdrs if p >= bar)
        data_slots = max(self.n_slots - self.warmup_slots, 1)
        span_s = data_slots * self.slot_s
        attempts = sum(t.attempts for t in self.links.values())
        successes = sum(t.successes for t in self.links.values())
        delay_sum = sum(t.delay_sum_slots for t in self.links.values())
        delay_n = sum(t.delay_count for t in self.links.values())
        delay_max = max((t.delay_max_slots for t in self.links.values()),
                        default=0)
        tx_slots = sum(r[1] for r in self.slot_rows)
        return {
            "name": self.name,
            "protocol": self.protocol,
            "seed": self.seed,
            "slots": self.n_slots,
            "warmup_slots": self.warmup_slots,
            "slot_s": self.slot_s,
            "target_reliability": self.target_reliability,
            "n_vehicles_end": self.n_vehicles_end,
            "min_attempts": min_attempts,
            "links_seen": len(self.links),
            "links_counted": n,
            "mean_pdr": mean_pdr,
            "pdr_variance": var_pdr,
            "frac_links_meeting_target": meeting / n if n else 0.0,
            "attempts_total": attempts,
            "deliveries_total": successes,
            "deliveries_per_s": successes / span_s,
            "mean_concurrency": tx_slots / data_slots,
            "mean_delay_s": (delay_sum / delay_n) * self.slot_s if delay_n
                            else 0.0,
            "max_delay_s": delay_max * self.slot_s,
            "control_bytes_total": self.control_bytes_total,
            "control_bytes_per_s": self.control_bytes_total / span_s,
            "oracle_power_bytes": self.oracle_power_bytes,
        }


# ---------------------------------------------------------------------------
# export / import

SLOT_HEADER = ("slot", "transmitters", "attempts", "deliveries",
               "control_bytes")
WINDOW_HEADER = ("window_end", "sender", "receiver", "attempts", "successes",
                 "reliability", "k_after")
CONTROLLER_HEADER = ("window_end", "sender", "receiver", "y_meas", "y_prev",
                     "slope", "delta", "delta_power", "k_before", "k_after")
LINK_HEADER = ("sender", "receiver", "attempts", "successes", "pdr",
               "delay_sum_slots", "delay_count", "delay_max_slots")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_metrics(metrics: RunMetrics, outdir) -> dict:
    """Write slots/windows/links CSVs plus summary.json into `outdir`.

    Returns the summary dict.  The controller trace file appears only when
    rows were recorded.
    """
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "slots.csv", SLOT_HEADER, metrics.slot_rows)
    _write_csv(out / "windows.csv", WINDOW_HEADER,
               sorted(metrics.window_rows))
    link_rows = [(s, r, t.attempts, t.successes, t.pdr(), t.delay_sum_slots,
                  t.delay_count, t.delay_max_slots)
                 for (s, r), t in sorted(metrics.links.items())]
    _write_csv(out / "links.csv", LINK_HEADER, link_rows)
    if metrics.controller_rows:
        _write_csv(out / "controller.csv", CONTROLLER_HEADER,
                   sorted(metrics.controller_rows))
    summary = metrics.summary()
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def read_summary(rundir) -> dict:
    from pathlib import Path

    with open(Path(rundir) / "summary.json", encoding="utf-8") as fh:
        return json.load(fh)


def read_window_rows(rundir) -> list[tuple]:
    """Typed window rows from a run directory."""
    from pathlib import Path

    rows = []
    with open(Path(rundir) / "windows.csv", newline="",
              encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["window_end"]), int(rec["sender"]),
                         int(rec["receiver"]), int(rec["attempts"]),
                         int(rec["successes"]), float(rec["reliability"]),
                         float(rec["k_after"])))
    return rows
