"""Render one simulated call to two channels, segment it and compare with the truth.

The simulator knows every turn it generated, so the segmentation can be
scored directly: boundary F1 at 10 ms and frame-level speaker agreement.
"""

from dialmood.dialogue import summarize
from dialmood.scoring import boundary_f1, speaker_accuracy
from dialmood.segmentation import segment_call
from dialmood.simulator import RenderConfig, preset, render_audio, simulate_cohort

cohort = simulate_cohort(preset("table1", n_patients=1, calls_per_patient=1, seed=4))
call_id, truth = next(iter(cohort.timelines.items()))
print(f"call {call_id}: {truth.call_duration_ms / 60000:.1f} min, {len(truth.turns)} turns")

rendered = render_audio(truth, RenderConfig(seed=4, snr_db=25.0))
estimate, alignment = segment_call(rendered.patient, rendered.landline, call_id=call_id)
print(f"offset: true {rendered.true_offset_samples} samples, estimated {alignment.offset_samples} "
      f"(peak ratio {alignment.peak_ratio:.1f})")

f1, precision, recall = boundary_f1(truth, estimate, 10.0)
print(f"boundary F1 {f1:.3f} (precision {precision:.3f}, recall {recall:.3f})")
print(f"speaker agreement on shared speech frames {speaker_accuracy(truth, estimate):.4f}")

print("\nfirst turns (truth | estimate):")
for a, b in list(zip(truth.turns, estimate.turns))[:6]:
    print(f"  {a.speaker.value:9s} {a.start_ms:8.0f}-{a.end_ms:<8.0f} | "
          f"{b.speaker.value:9s} {b.start_ms:8.0f}-{b.end_ms:<8.0f}")

print("\nfeatures from truth vs estimate:")
ft, fe = summarize(truth), summarize(estimate)
for k in ("switches_per_min", "patient_floor_control_pct", "patient_turn_length_mean", "clinician_hold_offset_mean"):
    print(f"  {k:30s} {ft[k]:10.2f} {fe[k]:10.2f}")
