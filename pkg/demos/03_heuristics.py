"""Behavioural heuristics that do not depend on any indicator.

The same reference log is scored by four heuristics:

- H1: an Office process spawning an executable from a non-standard directory
  shortly after it started.
- H2: a non-executable file renamed to an executable.
- H3: an outbound connection to a high, non-standard port.
- H4: a directory name that imitates a vendor (``0ffice360-48``).

Then a benign-only scenario shows that background noise stays quiet.
"""

from sentinel.heuristics import run_heuristics
from sentinel.ingest import ingest_text
from sentinel.simulator import ScenarioSpec, generate_reference_log, generate_scenario

store, _ = ingest_text(generate_reference_log())
for finding in run_heuristics(store):
    print(f"{finding.heuristic_id} @ {finding.time}: {finding.explanation}")

benign = ScenarioSpec(decoy=False, drop=False, rename=False, exec=False, c2=False,
                      phishing_connects=False, noise_events=2000, jitter_seed=1)
quiet, _ = ingest_text(generate_scenario(benign))
print(f"\nbenign scenario with {len(quiet)} events -> {len(run_heuristics(quiet))} findings")
