"""Memory-constrained placement of population slices onto processing elements.

Each PE hosts at most one contiguous slice of one population.  Slicing is
greedy: a population is cut into ``ceil(size / limit)`` slices where the
limit is the smaller of the per-kind neuron cap and any manual override,
and PEs are allocated in id order.

The SRAM ledger constants live in :class:`PeModel` so they can be
recalibrated without touching the algorithm:

* neuron state: 16 B/neuron for LIF (v, alpha, threshold, scratch as four
  float32 words), 4 B/neuron for spike-list inputs (read cursor);
* synapses: dense projections store explicit 6-byte entries (u32 pre
  offset, i8 weight, u8 meta); conv projections store the shared kernel
  (weight-node parameter count x 1 B quantized / 4 B float) since taps are
  recomputed by offset arithmetic rather than enumerated;
* spike recording: one bitmap bit per neuron per timestep;
* FIFO reserve: fixed 4 KB budget per PE.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PartitionError
from .network import LIF_CONV2D, LIF_NEURON, SPIKE_LIST_INPUT, Network


@dataclass(frozen=True)
class PeModel:
    """SRAM geometry and capacity constraints of one processing element."""

    sram_total: int = 131072
    bank_bytes: int = 32768
    banks: int = 4
    reserved_banks: int = 1  # program storage
    caps: dict = field(
        default_factory=lambda: {
            LIF_CONV2D: 1024,
            LIF_NEURON: 250,
            SPIKE_LIST_INPUT: 500,
        }
    )
    state_bytes: dict = field(
        default_factory=lambda: {
            LIF_CONV2D: 16,
            LIF_NEURON: 16,
            SPIKE_LIST_INPUT: 4,
        }
    )
    syn_entry_bytes: int = 6
    fifo_reserve_bytes: int = 4096

    @property
    def usable_bytes(self) -> int:
        return (self.banks - self.reserved_banks) * self.bank_bytes

    def __post_init__(self):
        assert self.sram_total == self.banks * self.bank_bytes


DEFAULT_CHIP_PES = 152


@dataclass(frozen=True)
class SliceLedger:
    state_bytes: int
    synapse_bytes: int
    record_bytes: int
    fifo_bytes: int

    @property
    def total(self) -> int:
        return self.state_bytes + self.synapse_bytes + self.record_bytes + self.fifo_bytes


@dataclass(frozen=True)
class Slice:
    population: str
    lo: int
    hi: int
    pe: int
    ledger: SliceLedger

    @property
    def size(self) -> int:
        return self.hi - self.lo


@dataclass
class Placement:
    slices: list[Slice]
    pe_model: PeModel
    chip_pes: int

    @property
    def pes_used(self) -> int:
        return len(self.slices)


def _slice_ledger(net: Network, pop, lo: int, hi: int, pe_model: PeModel) -> SliceLedger:
    n = hi - lo
    state = n * pe_model.state_bytes[pop.kind]
    syn = 0
    for pr in net.projections:
        if pr.post != pop.id:
            continue
        weight_bytes = 1 if pr.quantized else 4
        if pr.kind == "conv":
            syn += pr.weight_params * weight_bytes
        else:
            post = pr.synapses["post"]
            entries = int(np.count_nonzero((post >= lo) & (post < hi)))
            syn += entries * pe_model.syn_entry_bytes
    rec = n * math.ceil(net.max_timesteps / 8) if pop.record_spikes else 0
    return SliceLedger(
        state_bytes=state,
        synapse_bytes=syn,
        record_bytes=rec,
        fifo_bytes=pe_model.fifo_reserve_bytes,
    )


def partition(
    net: Network,
    pe_model: PeModel | None = None,
    overrides: dict[str, int] | None = None,
    chip_pes: int = DEFAULT_CHIP_PES,
) -> Placement:
    """Assign population slices to PEs; deterministic for identical inputs.

    ``overrides`` maps population id to a per-PE neuron limit (must not
    exceed the kind cap).  Raises :class:`PartitionError` when PEs run out
    or a slice cannot fit SRAM even at its minimum size, naming the
    binding constraint.
    """
    pe_model = pe_model or PeModel()
    overrides = overrides or {}
    net.validate()
    for pid, limit in overrides.items():
        pop = net.population(pid)
        if limit < 1:
            raise PartitionError(f"override for {pid!r} must be >= 1, got {limit}")
        if limit > pe_model.caps[pop.kind]:
            raise PartitionError(
                f"override {limit} for {pid!r} exceeds the {pop.kind} cap "
                f"{pe_model.caps[pop.kind]}"
            )
    slices: list[Slice] = []
    pe = 0
    for pop in net.populations:
        limit = min(pe_model.caps[pop.kind], overrides.get(pop.id, pe_model.caps[pop.kind]))
        lo = 0
        while lo < pop.size:
            hi = min(lo + limit, pop.size)
            if pe >= chip_pes:
                raise PartitionError(
                    f"network needs more than {chip_pes} PEs (exhausted while placing "
                    f"{pop.id!r})"
                )
            ledger = _slice_ledger(net, pop, lo, hi, pe_model)
            if ledger.total > pe_model.usable_bytes:
                over = ledger.total - pe_model.usable_bytes
                binding = max(
                    ("state", ledger.state_bytes),
                    ("synapses", ledger.synapse_bytes),
                    ("spike recording", ledger.record_bytes),
                    ("fifo", ledger.fifo_bytes),
                    key=lambda kv: kv[1],
                )[0]
                raise PartitionError(
                    f"slice {pop.id!r}[{lo}:{hi}] needs {ledger.total} B "
                    f"({over} over the {pe_model.usable_bytes} B budget); "
                    f"binding constraint: {binding}"
                )
            slices.append(Slice(population=pop.id, lo=lo, hi=hi, pe=pe, ledger=ledger))
            pe += 1
            lo = hi
    return Placement(slices=slices, pe_model=pe_model, chip_pes=chip_pes)


def memory_report(pl: Placement) -> list[dict]:
    """Per-PE ledger rows (`pe, population, lo, hi, state_B, syn_B, rec_B,
    fifo_B, total_B`)."""
    rows = []
    for sl in pl.slices:
        rows.append(
            {
                "pe": sl.pe,
                "population": sl.population,
                "lo": sl.lo,
                "hi": sl.hi,
                "state_B": sl.ledger.state_bytes,
                "syn_B": sl.ledger.synapse_bytes,
                "rec_B": sl.ledger.record_bytes,
                "fifo_B": sl.ledger.fifo_bytes,
                "total_B": sl.ledger.total,
            }
        )
    return rows


def save_placement(pl: Placement, json_path: str, csv_path: str | None = None) -> None:
    doc = {
        "format": "snnplacement-v1",
        "chip_pes": pl.chip_pes,
        "usable_bytes": pl.pe_model.usable_bytes,
        "slices": memory_report(pl),
    }
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
    if csv_path:
        rows = memory_report(pl)
        with open(csv_path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0].keys()) if rows else ["pe"])
            w.writeheader()
            w.writerows(rows)


def load_placement(path: str, pe_model: PeModel | None = None) -> Placement:
    pe_model = pe_model or PeModel()
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "snnplacement-v1":
        raise PartitionError(f"unsupported placement format {doc.get('format')!r}")
    slices = [
        Slice(
            population=r["population"],
            lo=r["lo"],
            hi=r["hi"],
            pe=r["pe"],
            ledger=SliceLedger(r["state_B"], r["syn_B"], r["rec_B"], r["fifo_B"]),
        )
        for r in doc["slices"]
    ]
    return Placement(slices=slices, pe_model=pe_model, chip_pes=doc.get("chip_pes", DEFAULT_CHIP_PES))
