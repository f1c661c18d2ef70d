"""Command-line entry point: ``dialmood <subcommand> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 missing input
path, 4 failure inside a stage (the message names the stage).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .audio import load_audio, write_wav
from .classifiers import ClassifierConfig
from .config import CONFIG_ENV, RunConfig, load_config
from .dialogue import DIALOGUE_FEATURES, summarize
from .harness import loso_evaluate
from .io import read_table, read_timelines, write_manifest, write_table, write_timelines
from .rhythm import rhythm_features
from .segmentation import estimate_offset, segment_call
from .simulator import RenderConfig, feature_table, preset, render_audio, simulate_cohort
from .stats.analysis import META_COLUMNS, analyze_features, reports_to_frame

log = logging.getLogger("dialmood")

EXIT_USAGE, EXIT_MISSING, EXIT_STAGE = 2, 3, 4
COMMANDS = ("align", "segment", "dialogue-features", "rhythm-features", "analyze", "classify", "simulate",
            "pipeline")
PATIENT_SUFFIX, LANDLINE_SUFFIX = "_patient.wav", "_landline.wav"


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


class MissingInput(FileNotFoundError):
    pass


def _require(path) -> Path:
    if path is None:
        raise MissingInput("no input path given (use --input)")
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"input path does not exist: {p}")
    return p


def _pairs(audio_dir: Path) -> list[tuple[str, Path, Path]]:
    """``{call_id}_patient.wav`` / ``{call_id}_landline.wav`` pairs, sorted by call id."""
    out = []
    for p in sorted(audio_dir.glob(f"*{PATIENT_SUFFIX}")):
        call_id = p.name[: -len(PATIENT_SUFFIX)]
        land = audio_dir / f"{call_id}{LANDLINE_SUFFIX}"
        if not land.exists():
            raise MissingInput(f"landline recording missing for {call_id}: {land}")
        out.append((call_id, p, land))
    if not out:
        raise MissingInput(f"no *{PATIENT_SUFFIX} recordings in {audio_dir}")
    return out


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# --------------------------------------------------------------------------
# stage workers (module level so they pickle)


def _align_one(args):
    call_id, pat, land, seg_cfg = args
    res = estimate_offset(load_audio(pat), load_audio(land), seg_cfg)
    return {"call_id": call_id, "offset_samples": res.offset_samples, "offset_ms": res.offset_ms,
            "peak_ratio": res.peak_ratio, "sample_rate": res.sample_rate, "warning": res.warning or ""}


def _segment_one(args):
    call_id, pat, land, seg_cfg = args
    timeline, res = segment_call(load_audio(pat), load_audio(land), seg_cfg, call_id)
    row = {"call_id": call_id, "offset_samples": res.offset_samples, "offset_ms": res.offset_ms,
           "peak_ratio": res.peak_ratio, "sample_rate": res.sample_rate, "warning": res.warning or ""}
    return timeline, row


def _rhythm_one(args):
    call_id, pat, rcfg = args
    return {"call_id": call_id, **rhythm_features(load_audio(pat), rcfg, call_id).as_dict()}


# --------------------------------------------------------------------------
# stages


def stage_align(cfg: RunConfig, out: Path) -> list[Path]:
    pairs = _pairs(_require(cfg.input))
    rows = _map(_align_one, [(c, p, l, cfg.segmentation) for c, p, l in pairs], cfg.jobs)
    return [write_table(pd.DataFrame(rows), out / "alignment.csv")]


def stage_segment(cfg: RunConfig, out: Path) -> list[Path]:
    pairs = _pairs(_require(cfg.input))
    res = _map(_segment_one, [(c, p, l, cfg.segmentation) for c, p, l in pairs], cfg.jobs)
    return [write_timelines([t for t, _ in res], out / "timelines.csv"),
            write_table(pd.DataFrame([r for _, r in res]), out / "alignment.csv")]


def _attach_meta(features: pd.DataFrame, calls_path) -> pd.DataFrame:
    if calls_path is None:
        return features
    meta = read_table(_require(calls_path), META_COLUMNS)
    return meta.merge(features, on="call_id", how="inner", validate="one_to_one")


def stage_dialogue(cfg: RunConfig, out: Path, timelines_path, calls_path=None) -> list[Path]:
    timelines = read_timelines(_require(timelines_path))
    df = pd.DataFrame([{"call_id": t.call_id, **summarize(t).values} for t in timelines])
    return [write_table(_attach_meta(df, calls_path), out / "dialogue_features.csv")]


def stage_rhythm(cfg: RunConfig, out: Path, calls_path=None) -> list[Path]:
    src = _require(cfg.input)
    items = [(p.name[: -len(PATIENT_SUFFIX)], p, cfg.rhythm) for p in sorted(src.glob(f"*{PATIENT_SUFFIX}"))]
    if not items:
        raise MissingInput(f"no *{PATIENT_SUFFIX} recordings in {src}")
    df = pd.DataFrame(_map(_rhythm_one, items, cfg.jobs))
    return [write_table(_attach_meta(df, calls_path), out / "rhythm_features.csv")]


def _load_features(paths, calls_path=None) -> pd.DataFrame:
    """Join one or more feature CSVs on call_id; metadata columns come from the first that has them."""
    if not paths:
        raise MissingInput("no feature table given (use --features)")
    tables = [read_table(_require(p)) for p in paths]
    df = tables[0]
    for t in tables[1:]:
        dup = [c for c in t.columns if c in df.columns and c != "call_id"]
        df = df.merge(t.drop(columns=dup), on="call_id", how="inner", validate="one_to_one")
    if calls_path is not None:
        meta = read_table(_require(calls_path), META_COLUMNS)
        df = meta.merge(df.drop(columns=[c for c in META_COLUMNS if c != "call_id" and c in df.columns]),
                        on="call_id", how="inner", validate="one_to_one")
        if "clinician_gender" in meta.columns and "clinician_gender" not in df.columns:
            df = df.merge(meta[["call_id", "clinician_gender"]], on="call_id")
    missing = [c for c in META_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"feature tables lack metadata columns {missing}; pass --calls")
    return df


def _clinician_filter(cfg: RunConfig, df: pd.DataFrame):
    if cfg.analysis.clinicians is not None:
        return [str(c) for c in cfg.analysis.clinicians]
    if cfg.analysis.female_clinicians_only:
        if "clinician_gender" not in df.columns:
            log.warning("no clinician_gender column; female-clinician filter not applied")
            return None
        return sorted(df.loc[df["clinician_gender"] == "F", "clinician_id"].astype(str).unique())
    return None


def stage_analyze(cfg: RunConfig, out: Path, feature_paths, calls_path=None) -> list[Path]:
    df = _load_features(feature_paths, calls_path)
    features = [c for c in df.columns if c not in META_COLUMNS and c != "clinician_gender"]
    clinicians = _clinician_filter(cfg, df)
    frames = []
    for pair in cfg.analysis.episode_pairs:
        reps = analyze_features(df, pair, cfg.analysis.alpha, features, clinicians, cfg.analysis.interaction_alpha)
        frames.append(reports_to_frame(reps))
    return [write_table(pd.concat(frames, ignore_index=True), out / "analysis.csv")]


def _classifier_cfg(cfg: RunConfig, kind: str) -> ClassifierConfig:
    h = cfg.harness
    return ClassifierConfig(kind=kind, C=h.C, gamma=h.gamma, layers=h.layers, width=h.width,
                            batch_size=h.batch_size, learning_rate=h.learning_rate, epochs=h.epochs,
                            seeds=h.mlp_seeds)


def stage_classify(cfg: RunConfig, out: Path, feature_paths, calls_path=None) -> list[Path]:
    df = _load_features(feature_paths, calls_path)
    frames = []
    for task in cfg.harness.tasks:
        for kind in cfg.harness.classifiers:
            for fs in cfg.harness.feature_sets:
                rep = loso_evaluate(df, task, _classifier_cfg(cfg, kind), fs, alpha=cfg.harness.alpha,
                                    inner_folds=cfg.harness.inner_folds, seed=cfg.seed,
                                    select=cfg.harness.select_features, jobs=cfg.jobs)
                frames.append(rep.to_frame())
    return [write_table(pd.concat(frames, ignore_index=True), out / "classification.csv")]


def stage_simulate(cfg: RunConfig, out: Path) -> list[Path]:
    s = cfg.simulate
    cohort_cfg = preset(s.preset, n_patients=s.n_patients, n_clinicians=s.n_clinicians,
                        calls_per_patient=s.calls_per_patient, seed=cfg.seed)
    cohort = simulate_cohort(cohort_cfg)
    calls = cohort.calls.drop(columns=["episode"])
    table = feature_table(cohort, rhythm=s.rhythm, rhythm_cfg=cfg.rhythm, jobs=cfg.jobs)
    dia_cols = [c for c in table.columns if c in DIALOGUE_FEATURES]
    rhy_cols = [c for c in table.columns if c not in dia_cols and c not in META_COLUMNS]
    truth = cohort.ground_truth.merge(cohort.calls[["call_id", "patient_id", "clinician_id"]], on="call_id")
    for name, u in (("patient", cohort.patient_intercepts), ("clinician", cohort.clinician_intercepts)):
        u = u.add_prefix(f"{name}_u_").reset_index().rename(columns={"id": f"{name}_id"})
        truth = truth.merge(u, on=f"{name}_id", how="left")
    paths = [
        write_table(calls, out / "calls.csv"),
        write_timelines(cohort.timelines.values(), out / "timelines.csv"),
        write_table(table[["call_id", *dia_cols]], out / "dialogue_features.csv"),
        write_table(truth, out / "ground_truth.csv"),
    ]
    if rhy_cols:
        paths.append(write_table(table[["call_id", *rhy_cols]], out / "rhythm_features.csv"))
    if s.render_audio:
        audio_dir = out / "audio"
        audio_dir.mkdir(parents=True, exist_ok=True)
        ids = list(cohort.timelines)
        if s.render_calls > 0:
            ids = ids[: s.render_calls]
        rates = cohort.ground_truth.set_index("call_id")["target_syllable_rate_hz"]
        rcfg = RenderConfig(snr_db=s.snr_db, seed=cfg.seed)
        offsets = []
        for cid in ids:
            r = render_audio(cohort.timelines[cid], rcfg, syllable_rate_hz=float(rates[cid]))
            write_wav(audio_dir / f"{cid}{PATIENT_SUFFIX}", r.patient)
            write_wav(audio_dir / f"{cid}{LANDLINE_SUFFIX}", r.landline)
            offsets.append({"call_id": cid, "true_offset_samples": r.true_offset_samples})
        paths.append(write_table(pd.DataFrame(offsets), out / "render_offsets.csv"))
        write_table(calls[calls["call_id"].isin(ids)], audio_dir / "calls.csv")
    return paths


def stage_pipeline(cfg: RunConfig, out: Path, calls_path=None) -> list[Path]:
    src = _require(cfg.input)
    calls_path = calls_path or src / "calls.csv"
    _require(calls_path)
    paths = _run_stage("segment", stage_segment, cfg, out)
    paths += _run_stage("dialogue-features", stage_dialogue, cfg, out, out / "timelines.csv", calls_path)
    paths += _run_stage("rhythm-features", stage_rhythm, cfg, out)
    feats = [out / "dialogue_features.csv", out / "rhythm_features.csv"]
    paths += _run_stage("analyze", stage_analyze, cfg, out, feats, calls_path)
    paths += _run_stage("classify", stage_classify, cfg, out, feats, calls_path)
    return paths


def _run_stage(name, fn, *args):
    try:
        return fn(*args)
    except (MissingInput, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise StageError(name, exc) from exc


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON run config (default: ${CONFIG_ENV})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field, e.g. analysis.alpha=0.1 (repeatable)")
    common.add_argument("-i", "--input", help="input directory (audio pairs)")
    common.add_argument("-o", "--output", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="run seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dialmood", description="Turn-taking and rhythm analysis of "
                                     "clinical phone interviews for mood-episode detection.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("align", parents=[common], help="estimate channel offsets for audio pairs")
    sub.add_parser("segment", parents=[common], help="align, VAD and derive turn timelines")
    p = sub.add_parser("dialogue-features", parents=[common], help="dialogue features from timelines")
    p.add_argument("--timelines", required=True, help="timeline CSV")
    p.add_argument("--calls", help="call metadata CSV to attach")
    p = sub.add_parser("rhythm-features", parents=[common], help="rhythm features from patient recordings")
    p.add_argument("--calls", help="call metadata CSV to attach")
    for name, text in (("analyze", "mixed-model mood analysis per feature"),
                       ("classify", "leave-one-speaker-out classification")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--features", action="append", default=[], help="feature CSV (repeatable; joined on call_id)")
        p.add_argument("--calls", help="call metadata CSV")
    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--preset", help="cohort preset: default, null, table1, strong")
    p.add_argument("--render-audio", action="store_true", help="also write wav pairs")
    p = sub.add_parser("pipeline", parents=[common], help="segment, features, analyze and classify")
    p.add_argument("--calls", help="call metadata CSV (default: INPUT/calls.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    for key in ("input", "output", "jobs", "seed"):
        v = getattr(args, key)
        if v is not None:
            overrides.append(f"{key}={json.dumps(v)}")
    if getattr(args, "preset", None):
        overrides.append(f"simulate.preset={json.dumps(args.preset)}")
    if getattr(args, "render_audio", False):
        overrides.append("simulate.render_audio=true")
    try:
        cfg = load_config(args.config, overrides)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(cfg.output)
    cmd = args.command
    try:
        if cmd == "align":
            paths = _run_stage(cmd, stage_align, cfg, out)
        elif cmd == "segment":
            paths = _run_stage(cmd, stage_segment, cfg, out)
        elif cmd == "dialogue-features":
            paths = _run_stage(cmd, stage_dialogue, cfg, out, args.timelines, args.calls)
        elif cmd == "rhythm-features":
            paths = _run_stage(cmd, stage_rhythm, cfg, out, args.calls)
        elif cmd == "analyze":
            paths = _run_stage(cmd, stage_analyze, cfg, out, args.features, args.calls)
        elif cmd == "classify":
            paths = _run_stage(cmd, stage_classify, cfg, out, args.features, args.calls)
        elif cmd == "simulate":
            paths = _run_stage(cmd, stage_simulate, cfg, out)
        else:
            paths = stage_pipeline(cfg, out, args.calls)
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except StageError as exc:
        print(f"error: stage {exc}", file=sys.stderr)
        return EXIT_STAGE
    write_manifest(out, cmd, cfg.to_dict(), cfg.seed, paths)
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
