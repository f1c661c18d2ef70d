"""Independent oracles and generators shared by the unit and acceptance tests."""

import math

import numpy as np
import pandas as pd

from dialmood.classifiers import _init_mlp, mlp_loss_and_grad, rbf_kernel, train_svm_rbf
from dialmood.dialogue import DIALOGUE_FEATURES, summarize
from dialmood.segmentation import timeline_from_turns
from dialmood.stats import fit_mixed, marginal_deviance

# criterion number -> (passed, detail); filled by test_acceptance.py, printed by conftest
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def make_t1():
    """Canonical four-turn timeline; its feature values are enumerated by hand in ``T1_EXPECTED``."""
    return timeline_from_turns(
        "T1",
        [
            ("Patient", [(0, 2000), (2300, 4000)]),
            ("Clinician", [(5000, 7000)]),
            ("Patient", [(8000, 9000)]),
            ("Patient", [(9700, 10500)]),
        ],
        10500,
    )


T1_EXPECTED = {
    "call_duration_min": 0.175,
    "switches_per_min": 2 / 0.175,
    "patient_floor_control_pct": 100 * 5500 / 7500,
    "clinician_floor_control_pct": 100 * 2000 / 7500,
    "patient_hold_offset_mean": 300.0,
    "patient_hold_offset_sd": 0.0,
    "clinician_hold_offset_mean": 0.0,
    "clinician_hold_offset_sd": 0.0,
    "patient_consecutive_turns_mean": 1.5,
    "patient_consecutive_turns_sd": math.sqrt(0.5),
    "clinician_consecutive_turns_mean": 1.0,
    "clinician_consecutive_turns_sd": 0.0,
    "patient_switch_offset_mean": 1000.0,
    "patient_switch_offset_sd": 0.0,
    "clinician_switch_offset_mean": 1000.0,
    "clinician_switch_offset_sd": 0.0,
    "patient_turn_length_mean": 5800 / 3,
    "patient_turn_length_sd": math.sqrt(((4000 - 5800 / 3) ** 2 + (1000 - 5800 / 3) ** 2 + (800 - 5800 / 3) ** 2) / 2),
    "clinician_turn_length_mean": 2000.0,
    "clinician_turn_length_sd": 0.0,
}


def random_timeline(rng: np.random.Generator, call_id: str = "R", n_turns: int | None = None,
                    both_speakers: bool = True):
    """Random valid timeline on an integer-ms grid (same-speaker turns kept >= 500 ms apart)."""
    n = int(rng.integers(2, 30)) if n_turns is None else n_turns
    turns = []
    t = int(rng.integers(0, 2000))
    prev = None
    for i in range(n):
        spk = "Patient" if rng.random() < 0.5 else "Clinician"
        if both_speakers and i == n - 1 and prev is not None and all(s == prev for s, _ in turns):
            spk = "Clinician" if prev == "Patient" else "Patient"
        if turns:
            gap = int(rng.integers(500, 3000)) if spk == prev else int(rng.integers(0, 2000))
            t += gap
        segs = []
        for j in range(int(rng.integers(1, 5))):
            if j:
                t += int(rng.integers(1, 500))
            d = int(rng.integers(1, 3000))
            segs.append((t, t + d))
            t += d
        turns.append((spk, segs))
        prev = spk
    return timeline_from_turns(call_id, turns, t + int(rng.integers(0, 5000)))


def oracle_features(raw, duration_ms):
    """Plain-loop re-implementation over ``[(speaker_str, [(a, b), ...]), ...]``.

    Shares no code with the package: no Turn objects, no numpy reductions.
    """
    def stats(xs):
        if not xs:
            return 0.0, 0.0
        m = math.fsum(xs) / len(xs)
        if len(xs) == 1:
            return m, 0.0
        return m, math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))

    out = {"call_duration_min": duration_ms / 60000.0}
    switches = 0
    for k in range(1, len(raw)):
        if raw[k][0] != raw[k - 1][0]:
            switches += 1
    out["switches_per_min"] = switches / (duration_ms / 60000.0)
    speech = {"Patient": 0.0, "Clinician": 0.0}
    for spk, segs in raw:
        for a, b in segs:
            speech[spk] += b - a
    total = speech["Patient"] + speech["Clinician"]
    for spk, prefix in (("Patient", "patient"), ("Clinician", "clinician")):
        holds, lengths, runs, offs = [], [], [], []
        for k, (who, segs) in enumerate(raw):
            if who != spk:
                continue
            for j in range(1, len(segs)):
                holds.append(segs[j][0] - segs[j - 1][1])
            lengths.append(segs[-1][1] - segs[0][0])
            if k > 0 and raw[k - 1][0] != spk:
                offs.append(segs[0][0] - raw[k - 1][1][-1][1])
            if k > 0 and raw[k - 1][0] == spk:
                runs[-1] += 1
            else:
                runs.append(1)
        out[f"{prefix}_floor_control_pct"] = 100.0 * speech[spk] / total
        for name, xs in (("hold_offset", holds), ("consecutive_turns", runs),
                         ("switch_offset", offs), ("turn_length", lengths)):
            m, s = stats(xs)
            out[f"{prefix}_{name}_mean"] = m
            out[f"{prefix}_{name}_sd"] = s
    return out


def raw_of(timeline):
    return [(t.speaker.value, [(s.start_ms, s.end_ms) for s in t.segments]) for t in timeline.turns]


_MS = tuple(k for k in DIALOGUE_FEATURES if any(s in k for s in ("hold_offset", "switch_offset", "turn_length")))
_UNCHANGED_BY_SCALE = tuple(k for k in DIALOGUE_FEATURES if "floor_control" in k or "consecutive" in k)


def _swap_name(k):
    if k.startswith("patient_"):
        return "clinician_" + k[len("patient_"):]
    if k.startswith("clinician_"):
        return "patient_" + k[len("clinician_"):]
    return k


def property_violations(tl, shift_ms, factor):
    """Count violated feature relations for one timeline (used by the acceptance suite too)."""
    base = summarize(tl)
    bad = 0
    # speaker swap exchanges the per-speaker blocks exactly
    sw = summarize(tl.swapped())
    bad += sum(sw[k] != base[_swap_name(k)] for k in DIALOGUE_FEATURES)
    # translation of turn times inside a fixed-length call
    moved = tl.transformed(lambda t: t + shift_ms, tl.call_duration_ms)
    tr = summarize(moved)
    bad += sum(not math.isclose(tr[k], base[k], rel_tol=1e-12, abs_tol=1e-9) for k in DIALOGUE_FEATURES)
    # scaling by k
    sc = summarize(tl.scaled(factor))
    for k in DIALOGUE_FEATURES:
        if k in _MS:
            want = factor * base[k]
        elif k in _UNCHANGED_BY_SCALE:
            want = base[k]
        elif k == "switches_per_min":
            want = base[k] / factor
        else:  # call duration
            want = factor * base[k]
        bad += not math.isclose(sc[k], want, rel_tol=1e-9, abs_tol=1e-9)
    return bad


def random_property_case(rng):
    tl = random_timeline(rng)
    lo = -tl.turns[0].start_ms
    hi = tl.call_duration_ms - tl.turns[-1].end_ms
    shift = float(rng.uniform(lo, hi)) if hi > lo else 0.0
    factor = float(rng.choice([0.5, 2.0, 3.0, rng.uniform(0.1, 10.0)]))
    return tl, shift, factor


def simulate_lmem(rng, beta=(1.0, 2.0, 0.5), sd_patient=1.0, sd_clinician=0.5, sd_resid=1.0,
                  n_patients=30, calls=10, n_clinicians=5):
    """Crossed random-intercept data: y = b0 + b_mood mood + b_gender gender + u_p + u_c + e.

    Each patient has a fixed gender and a random clinician per call; mood is
    Bernoulli(1/2) per call. Returns (y, X with columns 1/mood/gender, patient codes, clinician codes).
    """
    n = n_patients * calls
    patient = np.repeat(np.arange(n_patients), calls)
    clinician = rng.integers(0, n_clinicians, n)
    gender = np.repeat(rng.integers(0, 2, n_patients), calls).astype(float)
    mood = rng.integers(0, 2, n).astype(float)
    X = np.column_stack([np.ones(n), mood, gender])
    y = (X @ np.asarray(beta, float)
         + sd_patient * rng.normal(size=n_patients)[patient]
         + sd_clinician * rng.normal(size=n_clinicians)[clinician]
         + sd_resid * rng.normal(size=n))
    return y, X, patient, clinician


def svm_qp_oracle(K, y_pm, C, iters=50000, tol=1e-13):
    """Dual soft-margin SVM objective by accelerated projected gradient.

    Maximizes sum(a) - a'Qa/2 over {0 <= a <= C, y'a = 0}; the projection
    onto that set is found by bisection on the multiplier of y'a = 0.
    """
    Q = (y_pm[:, None] * y_pm[None, :]) * K
    step = 1.0 / np.linalg.eigvalsh(Q)[-1]

    def project(v):
        lo, hi = -1e3 - C, 1e3 + C
        for _ in range(64):
            lam = 0.5 * (lo + hi)
            if y_pm @ np.clip(v - lam * y_pm, 0, C) > 0:
                lo = lam
            else:
                hi = lam
        return np.clip(v - 0.5 * (lo + hi) * y_pm, 0, C)

    a = np.zeros(y_pm.size)
    z, t = a.copy(), 1.0
    for _ in range(iters):
        a_new = project(z + step * (1.0 - Q @ z))
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = a_new + (t - 1) / t_new * (a_new - a)
        done = np.max(np.abs(a_new - a)) < tol
        a, t = a_new, t_new
        if done:
            break
    return float(a.sum() - 0.5 * a @ Q @ a)


def auroc_by_counting(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def mlp_fd_error(rng, n=5, d=4, layers=2, width=6, h=1e-6):
    """Max relative error between analytic MLP gradients and central finite differences."""

    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, n).astype(float)
    params = _init_mlp(d, layers, width, rng)
    params = [p + 0.1 * rng.normal(size=p.shape) for p in params]  # non-zero biases
    _, grads = mlp_loss_and_grad(params, X, y)
    worst = 0.0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = mlp_loss_and_grad(params, X, y)[0]
            p[idx] = orig - h
            down = mlp_loss_and_grad(params, X, y)[0]
            p[idx] = orig
            fd = (up - down) / (2 * h)
            g = grads[k][idx]
            worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-6))
    return worst


def synthetic_feature_table(rng, n_patients=8, calls=8, effect=0.0, effect_columns=(), columns=None,
                            task="euthymic-vs-depressed"):
    """Feature table with alternating euthymic/episode calls and a shift of
    ``effect`` patient-level SDs on ``effect_columns`` during episodes."""

    columns = list(columns or DIALOGUE_FEATURES)
    rows = []
    for i in range(n_patients):
        u = rng.normal(size=len(columns))
        for j in range(calls):
            episode = j % 2 == 1
            hamd, ymrs = (2, 2) if not episode else ((14, 2) if task == "euthymic-vs-depressed" else (2, 14))
            row = {"call_id": f"P{i:02d}_{j:02d}", "patient_id": f"P{i:02d}", "clinician_id": f"C{j % 3}",
                   "patient_gender": "F" if i % 3 else "M", "hamd": hamd, "ymrs": ymrs}
            for k, c in enumerate(columns):
                row[c] = 10.0 + u[k] + rng.normal() + (effect if episode and c in effect_columns else 0.0)
            rows.append(row)
    return pd.DataFrame(rows)


def brute_force_lag(cell, land, max_lag):
    """Time-domain argmax of r[k] = sum_n land[n] cell[n - k] via np.correlate."""
    full = np.correlate(land, cell, mode="full")  # index i <-> lag i - (len(cell) - 1)
    lags = np.arange(full.size) - (cell.size - 1)
    keep = np.abs(lags) <= max_lag
    return int(lags[keep][np.argmax(full[keep])])


def bh_by_definition(p, alpha):
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    k = 0
    for rank, i in enumerate(order, 1):
        if p[i] <= rank * alpha / m:
            k = rank
    thresh = p[order[k - 1]] if k else -1.0
    return np.array([pi <= thresh for pi in p])


def ols_gap(rng):
    """Max |beta - OLS| on data whose residuals carry no group structure, so the ML variances are zero."""
    n = 200
    p = np.repeat(np.arange(20), 10)
    c = rng.integers(0, 4, n)
    X = np.column_stack([np.ones(n), rng.integers(0, 2, n), np.repeat(rng.integers(0, 2, 20), 10)])
    y = X @ [1.0, -0.7, 0.4] + rng.normal(size=n)
    for codes in (p, c):
        r = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
        y = y - pd.Series(r).groupby(codes).transform("mean").to_numpy()
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    fit = fit_mixed(y, X, {"patient": p, "clinician": c}, terms=("intercept", "mood", "gender"))
    assert fit.sigma2_patient < 1e-6 and fit.sigma2_clinician < 1e-6
    return float(np.max(np.abs(fit.beta - ols)))


def grid_gap(rng):
    """Fitted deviance minus the best deviance on a 20 x 20 variance-ratio grid (<= 1e-6 passes)."""
    y, X, p, c = simulate_lmem(rng, n_patients=int(rng.integers(8, 25)), calls=int(rng.integers(3, 9)),
                               sd_patient=float(rng.uniform(0, 2)), sd_clinician=float(rng.uniform(0, 1)))
    fit = fit_mixed(y, X, {"patient": p, "clinician": c}, terms=("intercept", "mood", "gender"))
    grid = 10.0 ** np.linspace(-4, 2, 20)
    best = min(marginal_deviance(y, X, [p, c], (a, b)) for a in grid for b in grid)
    return fit.deviance - best


def svm_objective_gap(rng):
    X = rng.normal(size=(20, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=20) > 0).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    C, gamma = float(rng.choice([0.1, 1.0, 10.0])), float(rng.choice([0.1, 0.5, 2.0]))
    m = train_svm_rbf(X, y, C, gamma)
    oracle = svm_qp_oracle(rbf_kernel(X, X, gamma), np.where(y > 0, 1.0, -1.0), C)
    return abs(m.metadata["dual_objective"] - oracle)
