"""Leave-one-speaker-out AUROC for rhythm, dialogue and fused features.

Each test speaker's classifier is trained on the other speakers only; the
fold audit then recomputes every fold's selection, scaling and grid search
from the logged training speakers and should report nothing.
"""

import logging

from dialmood.classifiers import ClassifierConfig
from dialmood.harness import audit_report, loso_evaluate
from dialmood.simulator import feature_table, preset, simulate_cohort

logging.basicConfig(level=logging.ERROR)

cohort = simulate_cohort(preset("table1", n_patients=16, seed=8))
table = feature_table(cohort, rhythm=True)
cfg = ClassifierConfig("LogReg")

for task in ("euthymic-vs-depressed", "euthymic-vs-manic"):
    print(task)
    for feature_set in ("rhythm", "dialogue", "both"):
        rep = loso_evaluate(table, task, cfg, feature_set, seed=0)
        print(f"  {feature_set:9s} mean AUROC {rep.mean_auroc:.3f} over {len(rep.per_speaker)} speakers")
    problems = audit_report(table, rep, cfg, seed=0)
    print(f"  audit of the fused run: {'clean' if not problems else problems}")
