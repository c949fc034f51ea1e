"""Energy and carbon accounting for simulated training runs.

Replaces physical measurement with a linear model: work units (samples
processed) turn into kWh through a per-sample time coefficient and the
node's power draw, then into kg CO2e through the node's grid intensity.
A JSONL ledger accumulates every priced run across process restarts.
"""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .engine import FLRunResult
from .errors import GreenFLError


class ProfileMismatch(GreenFLError):
    pass


@dataclass(frozen=True)
class NodeProfile:
    """Static facts about one federation node, as the researcher declares them."""

    node_id: str
    power_watts: float
    location: str
    carbon_intensity: float
    data_volume_fraction: float
    consistency: float
    completeness: float

    def __post_init__(self) -> None:
        if self.power_watts <= 0:
            raise GreenFLError(f"{self.node_id}: power_watts must be > 0")
        if self.carbon_intensity < 0:
            raise GreenFLError(f"{self.node_id}: carbon_intensity must be >= 0")
        for name in ("data_volume_fraction", "consistency", "completeness"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise GreenFLError(f"{self.node_id}: {name} must lie in [0, 1], got {v}")

    @property
    def power_kw(self) -> float:
        return self.power_watts / 1000.0

    @property
    def co2_rate(self) -> float:
        """kg CO2e per hour of full-power operation."""
        return self.power_kw * self.carbon_intensity


@dataclass(frozen=True)
class EnergyModel:
    """Work-to-energy coefficients.

    seconds_per_node_round prices fixed per-round node participation
    (wake-up, sync, transfer). It defaults to 0 so plain per-sample
    arithmetic stays exact; grid runs set it positive so configurations
    with fewer active nodes cost strictly less.
    """

    seconds_per_sample: float = 0.01
    server_overhead_kwh_per_round: float = 0.0
    seconds_per_node_round: float = 0.0

    def __post_init__(self) -> None:
        if (
            self.seconds_per_sample < 0
            or self.server_overhead_kwh_per_round < 0
            or self.seconds_per_node_round < 0
        ):
            raise GreenFLError("energy model coefficients must be >= 0")


@dataclass(frozen=True)
class EmissionsReport:
    per_node_kwh: dict[str, float]
    per_node_kg: dict[str, float]
    server_kwh: float
    server_kg: float
    includes_preprocessing: bool

    @property
    def total_kwh(self) -> float:
        return sum(self.per_node_kwh.values()) + self.server_kwh

    @property
    def total_kg(self) -> float:
        return sum(self.per_node_kg.values()) + self.server_kg

    def to_json(self) -> dict:
        return {
            "per_node_kwh": dict(sorted(self.per_node_kwh.items())),
            "per_node_kg": dict(sorted(self.per_node_kg.items())),
            "server_kwh": self.server_kwh,
            "server_kg": self.server_kg,
            "total_kwh": self.total_kwh,
            "total_kg": self.total_kg,
            "includes_preprocessing": self.includes_preprocessing,
        }


def energy_for(work: float, node: NodeProfile, model: EnergyModel) -> float:
    """kWh for `work` samples processed on `node`."""
    if work < 0:
        raise GreenFLError("work must be >= 0")
    return node.power_kw * (work * model.seconds_per_sample) / 3600.0


def emissions_for(kwh: float, node: NodeProfile) -> float:
    return kwh * node.carbon_intensity


def report(
    run: FLRunResult,
    nodes: Iterable[NodeProfile],
    model: EnergyModel,
    preprocessing_work: Mapping[str, int] | None = None,
) -> EmissionsReport:
    """Price a finished run: per-node training work, per-round participation
    overhead, optional preprocessing scans, and server overhead (charged at
    the dirtiest grid among the nodes)."""
    by_id = {n.node_id: n for n in nodes}
    unknown = set(run.per_node_work) - set(by_id)
    if unknown:
        raise ProfileMismatch(f"run references unknown nodes: {sorted(unknown)}")
    if preprocessing_work:
        unknown = set(preprocessing_work) - set(by_id)
        if unknown:
            raise ProfileMismatch(f"preprocessing references unknown nodes: {sorted(unknown)}")

    rounds_participated: dict[str, int] = {}
    for log in run.round_logs:
        for nid in log.per_node_samples_processed:
            rounds_participated[nid] = rounds_participated.get(nid, 0) + 1

    per_node_kwh: dict[str, float] = {}
    per_node_kg: dict[str, float] = {}
    for nid, work in run.per_node_work.items():
        node = by_id[nid]
        seconds = work * model.seconds_per_sample
        seconds += rounds_participated.get(nid, 0) * model.seconds_per_node_round
        if preprocessing_work:
            seconds += preprocessing_work.get(nid, 0) * model.seconds_per_sample
        kwh = node.power_kw * seconds / 3600.0
        per_node_kwh[nid] = kwh
        per_node_kg[nid] = emissions_for(kwh, node)

    server_kwh = model.server_overhead_kwh_per_round * run.rounds_executed
    max_intensity = max((n.carbon_intensity for n in by_id.values()), default=0.0)
    return EmissionsReport(
        per_node_kwh=per_node_kwh,
        per_node_kg=per_node_kg,
        server_kwh=server_kwh,
        server_kg=server_kwh * max_intensity,
        includes_preprocessing=preprocessing_work is not None,
    )


_LEDGER_LOCK = threading.Lock()


def ledger_append(report_: EmissionsReport, purpose: str, path: str | Path) -> None:
    """Append one priced run to the life-cycle emissions ledger."""
    line = json.dumps(
        {
            "ts": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "purpose": purpose,
            "total_kwh": report_.total_kwh,
            "total_kg": report_.total_kg,
        },
        sort_keys=True,
    )
    path = Path(path)
    with _LEDGER_LOCK:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def ledger_entries(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def ledger_total(path: str | Path) -> float:
    """Total kg CO2e across every run ever priced into the ledger."""
    return sum(e["total_kg"] for e in ledger_entries(path))


def ledger_totals_by_purpose(path: str | Path) -> dict[str, float]:
    out: dict[str, float] = {}
    for e in ledger_entries(path):
        out[e["purpose"]] = out.get(e["purpose"], 0.0) + e["total_kg"]
    return dict(sorted(out.items()))


def load_carbon_intensities(path: str | Path | None = None) -> dict[str, float]:
    """Read the location → kg CO2e/kWh snapshot (bundled file by default)."""
    if path is None:
        ref = resources.files("greenfl.data").joinpath("carbon_intensity.csv")
        text = ref.read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(text.splitlines()))
    if not rows or set(rows[0]) != {"location", "kg_co2e_per_kwh"}:
        raise GreenFLError("carbon intensity file needs columns location,kg_co2e_per_kwh")
    out: dict[str, float] = {}
    for row in rows:
        try:
            out[row["location"]] = float(row["kg_co2e_per_kwh"])
        except (TypeError, ValueError) as exc:
            raise GreenFLError(f"bad intensity row {row}: {exc}") from exc
    return out


ROSTER_COLUMNS = (
    "node_id",
    "power_watts",
    "location",
    "data_volume",
    "consistency",
    "completeness",
)


def load_roster_csv(
    path: str | Path, intensities: Mapping[str, float] | None = None
) -> list[NodeProfile]:
    """Parse a roster table and resolve each location's carbon intensity."""
    if intensities is None:
        intensities = load_carbon_intensities()
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or tuple(reader.fieldnames) != ROSTER_COLUMNS:
        raise GreenFLError(
            f"roster file needs header {','.join(ROSTER_COLUMNS)}, got {reader.fieldnames}"
        )
    profiles = []
    for i, row in enumerate(reader):
        loc = row["location"]
        if loc not in intensities:
            raise GreenFLError(
                f"roster row {i + 1}: unknown location {loc!r}; "
                f"known: {', '.join(sorted(intensities))}"
            )
        try:
            profiles.append(
                NodeProfile(
                    node_id=row["node_id"],
                    power_watts=float(row["power_watts"]),
                    location=loc,
                    carbon_intensity=intensities[loc],
                    data_volume_fraction=float(row["data_volume"]),
                    consistency=float(row["consistency"]),
                    completeness=float(row["completeness"]),
                )
            )
        except (TypeError, ValueError) as exc:
            raise GreenFLError(f"roster row {i + 1}: {exc}") from exc
    if not profiles:
        raise GreenFLError("roster file has no data rows")
    seen: set[str] = set()
    for p in profiles:
        if p.node_id in seen:
            raise GreenFLError(f"duplicate node_id {p.node_id}")
        seen.add(p.node_id)
    return profiles


def dump_roster_csv(profiles: Iterable[NodeProfile]) -> str:
    lines = [",".join(ROSTER_COLUMNS)]
    for p in profiles:
        lines.append(
            f"{p.node_id},{p.power_watts:g},{p.location},"
            f"{p.data_volume_fraction:g},{p.consistency:g},{p.completeness:g}"
        )
    return "\n".join(lines) + "\n"
