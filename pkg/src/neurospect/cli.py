"""Command-line interface: one subcommand per pipeline stage.

synth     generate labeled synthetic EEG features (or raw signals)
extract   raw per-subject EEG CSVs -> canonical feature CSV
preprocess  clean a feature CSV (outliers, imputation) per config
train     fit the classifier, write the model artifact and reports
evaluate  score an artifact against a feature CSV
ablate    train both coherence arms and write the comparison
summarize dataset summary JSON (plus figures/CSV with --report-dir)
serve     HTTP service for the dashboard

Configuration precedence: flags > NEUROSPECT_* environment variables >
config-file defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import dataset as ds
from . import pipeline as pl
from . import preprocess as pp
from . import report as rp
from . import spectral as sp
from . import synthdata as sd
from .service import ServiceState, make_server

ENV_PREFIX = "NEUROSPECT_"


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name)


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"cannot parse config file {path}: {exc}")


class CliError(Exception):
    pass


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {p}")
    return p


def _write_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _parse_with_adapter(args) -> tuple[list, object]:
    adapter = None
    if getattr(args, "adapter", None):
        adapter = ds.load_adapter_map(_require_file(args.adapter, "adapter map"))
    bands = sp.band_set(args.bands)
    mode = args.mode
    if mode == "auto":
        with open(args.features, encoding="utf-8") as fh:
            header = fh.readline()
        names = {h.strip() for h in header.split(",")}
        if adapter:
            names = {adapter.get(n, n) for n in names}
        probe = ds.FeatureSchema.full(bands)
        coh_needed = [n for n in probe.feature_names if n.startswith("coh.")]
        mode = "full" if all(n in names for n in coh_needed[:5]) else "psd_only"
    return ds.parse_feature_table(args.features, mode=mode, adapter=adapter, bands=bands)


def _add_table_flags(parser, with_mode=True):
    parser.add_argument("--features", required=True, help="feature CSV path")
    parser.add_argument("--adapter", help="external-to-canonical column name map file")
    parser.add_argument("--bands", default="six", choices=["six", "five"],
                        help="frequency band set (default six)")
    if with_mode:
        parser.add_argument("--mode", default="auto", choices=["auto", "full", "psd_only"],
                            help="feature schema mode (default: sniff the header)")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.profile:
        with open(_require_file(args.profile, "profile"), encoding="utf-8") as fh:
            specs = sd.specs_from_profile(json.load(fh))
    else:
        specs = sd.SPEC_PRESETS[args.preset]()
    bands = sp.band_set(args.bands)
    if args.method == "spectral":
        records = sd.generate_subjects(
            specs, args.subjects_per_class, seed=args.seed, fs=args.fs,
            duration=args.duration, bands=bands,
            include_coherence=not args.no_coherence,
        )
    else:
        records = sd.generate_feature_records(
            specs, args.subjects_per_class, seed=args.seed, bands=bands,
            include_coherence=not args.no_coherence,
        )
    schema = ds.FeatureSchema(bands, include_coherence=not args.no_coherence)
    ds.write_feature_table(records, args.out, schema)
    print(f"wrote {len(records)} subjects x {schema.n_features} features to {args.out}")
    return 0


def cmd_extract(args) -> int:
    meta = ds.parse_meta_table(_require_file(args.meta, "metadata file"))
    raw_dir = Path(args.raw_dir)
    if not raw_dir.is_dir():
        raise CliError(f"raw-signal directory not found: {raw_dir}")
    bands = sp.band_set(args.bands)
    cfg = sp.WelchConfig(segment_len=args.segment_len, overlap=args.overlap)
    records = []
    for rid, (demo, label) in sorted(meta.items()):
        path = raw_dir / f"{rid}.csv"
        if not path.is_file():
            raise CliError(f"raw file for subject {rid!r} not found: {path}")
        window = sp.read_raw_window(path, fs=args.fs)
        psd = sp.band_powers(sp.welch_psd(window, cfg), bands).values
        coherence = None
        if not args.no_coherence:
            coherence = sp.msc_coherence(window, cfg, bands).values
        records.append(ds.SubjectRecord(rid, demo, psd, coherence, label))
    schema = ds.FeatureSchema(bands, include_coherence=not args.no_coherence)
    ds.write_feature_table(records, args.out, schema)
    print(f"extracted {len(records)} subjects to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    _require_file(args.features, "features file")
    records, schema = _parse_with_adapter(args)
    prep = pp.PreprocessConfig.from_dict(_load_config(args.config).get("preprocess", {}))
    cleaned = pp.clean_records(records, prep)
    ds.write_feature_table(cleaned, args.out, schema)
    print(f"cleaned {len(cleaned)} records to {args.out}")
    return 0


def _train_inputs(args):
    _require_file(args.features, "features file")
    records, schema = _parse_with_adapter(args)
    config = _load_config(args.config)
    prep = pp.PreprocessConfig.from_dict(config.get("preprocess", {}))
    records = pp.clean_records(records, prep)
    train_doc = dict(config.get("train", {}))
    if args.seed is not None:
        train_doc["seed"] = args.seed
    if args.epochs is not None:
        train_doc["epochs"] = args.epochs
    if args.workers is not None:
        train_doc["workers"] = args.workers
    if not schema.include_coherence:
        train_doc.setdefault("include_coherence", False)
    cfg = pl.TrainConfig.from_dict(train_doc)
    policy = prep.resample if config.get("preprocess") else None
    return records, schema, cfg, policy


def cmd_train(args) -> int:
    records, schema, cfg, policy = _train_inputs(args)
    result = pl.train(records, schema, cfg, resample_policy=policy)
    pl.save_artifact(result.artifact, args.out)
    if args.history_out:
        _write_json(result.history, args.history_out)
    if args.eval_out:
        _write_json(result.evaluation, args.eval_out)
    if args.test_out:
        test_ids = set(result.test_ids)
        ds.write_feature_table([r for r in records if r.id in test_ids],
                               args.test_out, schema)
    if args.report_dir:
        rp.save_history_report(result.history, args.report_dir)
        rp.save_evaluation_report(result.evaluation, args.report_dir)
    print(
        f"trained on {len(result.train_ids)} subjects, "
        f"test accuracy {result.evaluation['accuracy']:.3f}; artifact at {args.out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    artifact = pl.load_artifact(_require_file(args.model, "model artifact"))
    _require_file(args.features, "features file")
    records, schema = _parse_with_adapter(args)
    report = pl.evaluate(artifact, records, schema)
    _write_json(report, args.out)
    if args.report_dir:
        rp.save_evaluation_report(report, args.report_dir)
    print(f"evaluated {report['n_records']} records: accuracy {report['accuracy']:.3f}")
    return 0


def cmd_ablate(args) -> int:
    records, schema, cfg, policy = _train_inputs(args)
    report = pl.ablation_compare(records, schema, cfg, resample_policy=policy)
    _write_json(report, args.out)
    if args.report_dir:
        rp.save_ablation_report(report, args.report_dir)
    print(
        "ablation accuracy: with {w:.3f} vs without {wo:.3f} (delta {d:+.3f})".format(
            w=report["with_coherence"]["accuracy"],
            wo=report["without_coherence"]["accuracy"],
            d=report["accuracy_delta"],
        )
    )
    return 0


def cmd_summarize(args) -> int:
    _require_file(args.features, "features file")
    records, schema = _parse_with_adapter(args)
    summary = ds.summarize_dataset(records, band_names=[b.name for b in schema.bands])
    _write_json(summary, args.out)
    if args.report_dir:
        rp.save_summary_report(summary, args.report_dir)
    print(f"summarized {summary['n_records']} records to {args.out}")
    return 0


def resolve_serve_config(args) -> dict:
    """Flags beat NEUROSPECT_* environment variables beat config-file defaults."""
    defaults = _load_config(args.config).get("serve", {}) if args.config else {}

    def pick(flag, env_name, file_key, fallback=None):
        if flag is not None:
            return flag
        env_value = _env(env_name)
        if env_value is not None:
            return env_value
        return defaults.get(file_key, fallback)

    return {
        "model": pick(args.model, "MODEL", "model"),
        "static_dir": pick(args.static_dir, "STATIC_DIR", "static_dir"),
        "metrics": pick(args.metrics, "METRICS", "metrics"),
        "summary": pick(args.summary, "SUMMARY", "summary"),
        "host": pick(args.host, "HOST", "host", "127.0.0.1"),
        "port": int(pick(args.port, "PORT", "port", 8321)),
    }


def cmd_serve(args) -> int:
    cfg = resolve_serve_config(args)
    if cfg["model"]:
        _require_file(cfg["model"], "model artifact")
    state = ServiceState(model_path=cfg["model"], metrics_path=cfg["metrics"],
                         summary_path=cfg["summary"], static_dir=cfg["static_dir"])
    server = make_server(state, host=cfg["host"], port=cfg["port"],
                         enable_reload=args.reload)
    print(f"serving on http://{cfg['host']}:{server.server_address[1]}"
          f" (model={'yes' if state.artifact else 'no'})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurospect",
        description="EEG spectral features, coherence ablation and disorder prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects-per-class", type=int, default=100)
    p.add_argument("--preset", default="seven-class", choices=sorted(sd.SPEC_PRESETS))
    p.add_argument("--profile", help="class profile JSON (overrides --preset)")
    p.add_argument("--method", default="spectral", choices=["spectral", "direct"],
                   help="synthesize raw EEG then extract, or sample features directly")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fs", type=float, default=128.0)
    p.add_argument("--duration", type=float, default=16.0)
    p.add_argument("--bands", default="six", choices=["six", "five"])
    p.add_argument("--no-coherence", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract features from raw EEG CSVs")
    p.add_argument("--raw-dir", required=True, help="directory of <id>.csv raw signals")
    p.add_argument("--meta", required=True, help="subject metadata CSV (id, demographics, label)")
    p.add_argument("--out", required=True)
    p.add_argument("--fs", type=float, required=True, help="sampling rate in Hz")
    p.add_argument("--segment-len", type=int, default=256)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--bands", default="six", choices=["six", "five"])
    p.add_argument("--no-coherence", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("preprocess", help="clean a feature CSV per config")
    _add_table_flags(p)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train and persist a model artifact")
    _add_table_flags(p)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="artifact output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--history-out")
    p.add_argument("--eval-out")
    p.add_argument("--test-out", help="write the held-out test rows as CSV")
    p.add_argument("--report-dir", help="render figures and CSVs here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate an artifact on a feature CSV")
    _add_table_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train with/without coherence and compare")
    _add_table_flags(p)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("summarize", help="dataset summary JSON")
    _add_table_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report-dir")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("serve", help="serve prediction, metrics and summary endpoints")
    p.add_argument("--model")
    p.add_argument("--metrics", help="evaluation or ablation report JSON to serve")
    p.add_argument("--summary", help="dataset summary JSON to serve")
    p.add_argument("--static-dir", help="dashboard static files")
    p.add_argument("--config", help="config JSON with a 'serve' section of defaults")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--reload", action="store_true",
                   help="reload the model artifact on SIGHUP")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ds.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    except pl.ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
