"""Place the quantized gesture net onto the 152-PE chip.

Each processing element hosts one contiguous slice of one population and
must fit neuron state, synapse storage, the spike-record bitmap, and the
FIFO reserve into its three usable SRAM banks.  With the per-population
slice limits below the net occupies exactly 147 PEs.
"""

from snndeploy.fixtures import make_gesture_net
from snndeploy.lowering import lower
from snndeploy.partition import memory_report, partition
from snndeploy.quantize import PtqConfig, ptq_quantize_graph

OVERRIDES = {"lif_1": 900, "lif_3": 900, "lif_6": 980, "lif_10": 16, "input": 17}

net = lower(ptq_quantize_graph(make_gesture_net(), PtqConfig()))
pl = partition(net, overrides=OVERRIDES)

print(f"PEs used: {pl.pes_used} of {pl.chip_pes}")
print(f"SRAM budget per PE: {pl.pe_model.usable_bytes} B "
      f"({pl.pe_model.banks - pl.pe_model.reserved_banks} of {pl.pe_model.banks} banks)")
print()

per_pop = {}
worst = max(pl.slices, key=lambda s: s.ledger.total)
for sl in pl.slices:
    per_pop[sl.population] = per_pop.get(sl.population, 0) + 1
print("PEs per population:")
for pop, n in per_pop.items():
    print(f"  {pop:<8} {n:>4}")
print()
print(f"tightest slice: {worst.population}[{worst.lo}:{worst.hi}] "
      f"uses {worst.ledger.total} B "
      f"({100 * worst.ledger.total / pl.pe_model.usable_bytes:.1f}% of budget)")

rows = memory_report(pl)
print(f"ledger rows: {len(rows)} (see partition.memory_report for CSV export)")
