"""Detect the Crimson RAT campaign in the reference telemetry.

Generates the 25-event reference log (a PowerPoint add-in that drops and
launches the implant, which then beacons to its C2), runs the built-in rule
and the bundled IOC corpus over it, and prints what fired.
"""

from sentinel import builtin_crimson_rat_rule, default_iocs, eval_rule, ingest_log, match_event
from sentinel.simulator import generate_reference_log

log_text = generate_reference_log()
store, report = ingest_log(log_text.splitlines())
print(f"ingested {report.accepted} events ({len(report.rejected)} rejected)")

# The rule mirrors the two-part osquery hunt: suspicious file activity by
# POWERPNT.EXE / the implant, and connections to known C2 endpoints.
detections = eval_rule(builtin_crimson_rat_rule(), store)
print(f"\n{len(detections)} rule detections:")
for d in detections:
    row = d.to_record()
    print(f"  {row['utc_time']}  part {d.matched_part}  {row['action']:<15} {row['target_path']}")

# IOC matching is independent of the rule. Note the 443 connections: the IP is
# known-bad but 443 is not in the C2 port list, and the Microsoft CDN endpoint
# is allowlisted outright.
iocs = default_iocs()
print("\nIOC hits:")
for event in store:
    for hit in match_event(event, iocs):
        print(f"  {event.payload.time}  {hit.field_matched.value:<15} {hit.value}")
