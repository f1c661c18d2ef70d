"""Fit the per-feature mixed models on a simulated cohort with known mood effects.

The `table1` preset injects effect sizes observed in real interviews; the table printed here
sets each estimate next to the value the simulator targeted. Features
without a target ("-") are free to move as by-products: switch rate
follows turn lengths and floor control, and clinician floor control is
the complement of the patient's.
"""

import warnings

from dialmood.dialogue import DIALOGUE_FEATURES
from dialmood.simulator import feature_table, preset, simulate_cohort
from dialmood.stats import analyze_features

warnings.simplefilter("ignore", RuntimeWarning)

cfg = preset("table1", seed=21)
cohort = simulate_cohort(cfg)
table = feature_table(cohort).merge(cohort.calls[["call_id", "clinician_gender"]], on="call_id")
print(f"{len(table)} calls from {table['patient_id'].nunique()} patients")

for pair, episode in (("euthymic-vs-depressed", "depressed"), ("euthymic-vs-manic", "manic")):
    truth = cfg.effects[episode]
    reports = analyze_features(table, pair, features=list(DIALOGUE_FEATURES), clinicians=cohort.female_clinicians())
    print(f"\n{pair}")
    print(f"  {'feature':34s} {'target':>9s} {'estimate':>9s} {'SE':>8s} {'p':>8s}  FDR")
    for r in reports:
        if r.error:
            print(f"  {r.feature:34s} {'':>9s} fit failed: {r.error}")
            continue
        inj = f"{truth[r.feature]:9.3f}" if r.feature in truth else f"{'-':>9s}"
        print(f"  {r.feature:34s} {inj} {r.estimate:9.3f} {r.std_error:8.3f} {r.p_value:8.2g}  "
              f"{'*' if r.fdr_significant else ''}")
