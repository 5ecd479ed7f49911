"""Parameterised scenarios: switch stages off, bury the attack in noise, fuzz.

Every scenario is deterministic in its spec, so the output below never changes.
"""

from sentinel import builtin_crimson_rat_rule, eval_rule
from sentinel.chain import forward_track
from sentinel.ingest import ingest_text
from sentinel.simulator import ScenarioSpec, generate_c2_transcript, generate_scenario

PPAM_SHA256 = "8cbd47119356081e70fc023d3ac78af560651e7932636adeca7bec96b09e0e95"
rule = builtin_crimson_rat_rule()

specs = {
    "full campaign": ScenarioSpec(),
    "no C2": ScenarioSpec(c2=False),
    "dropped, never run": ScenarioSpec(exec=False, c2=False),
    "10k noise events": ScenarioSpec(noise_events=10_000, jitter_seed=7),
    # Fuzz reuses the campaign GUIDs with random parents and actions, so the
    # lineage is deliberately scrambled and fewer stages survive.
    "500 fuzz events": ScenarioSpec(fuzz_events=500, jitter_seed=7),
}
for name, spec in specs.items():
    store, _ = ingest_text(generate_scenario(spec))
    hits = eval_rule(rule, store)
    stages = [s.stage.value for s in forward_track(PPAM_SHA256, store).stages]
    print(f"{name:<20} events={len(store):<6} detections={len(hits):<3} stages={stages}")

# What the operator might have done over the C2 channel in that window.
transcript = generate_c2_transcript(ScenarioSpec(jitter_seed=3))
print(f"\nC2 session between {transcript.window[0]} and {transcript.window[1]}:")
for t, command, direction in transcript.session:
    arrow = "->" if direction.value == "to_implant" else "<-"
    print(f"  {t} {arrow} {command.value:<8} {command.description}")
