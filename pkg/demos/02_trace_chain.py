"""Reconstruct the attack chain from the hash of the malicious add-in.

Starting from one SHA-256, forward tracking finds the process that opened the
file, follows its descendants through the process graph and labels the kill
chain stages it can evidence.
"""

from sentinel.chain import build_process_graph, forward_track, render_timeline
from sentinel.ingest import ingest_text
from sentinel.simulator import generate_reference_log

PPAM_SHA256 = "8cbd47119356081e70fc023d3ac78af560651e7932636adeca7bec96b09e0e95"

store, _ = ingest_text(generate_reference_log())
graph = build_process_graph(store)
print(f"process graph: {len(graph)} nodes, warnings: {graph.warnings}")

chain = forward_track(PPAM_SHA256, store, graph=graph)
print("\nprocesses (root first):")
for proc in chain.processes:
    print(f"  depth {chain.depths[proc.key]}  pid {proc.pid:<6} {proc.path}")

print("\nstages:")
for stage in chain.stages:
    print(f"  {stage.time}  {stage.stage.value}")

print("\ntimeline:")
for line in render_timeline(chain):
    print("  " + line)
