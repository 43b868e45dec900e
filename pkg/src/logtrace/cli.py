"""``logtrace`` command line: synthesize, segment, embed, extract, evaluate, report.

Every command that takes ``--out`` leaves a run directory holding
``config.yaml`` (the resolved experiment config, usable with ``--config`` to
repeat the run), ``run.json`` (command, seeds, package versions) and the outputs.
"""

import argparse
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import CircularGridBaseline, IrisBaseline, estimate_pith
from .embedding import TripletEmbedder
from .evaluation import EERReport, cross_validate, make_folds, render_table, write_scores_csv
from .exceptions import (
    ConfigError,
    InvalidInputError,
    LogTraceError,
    ProtocolError,
    SegmentationFailedError,
    UndefinedEERError,
)
from .io import load_patch, save_mask, save_patch, write_embeddings_bin, write_embeddings_csv, write_template
from .records import AcquisitionId
from .segmentation import DEFAULT_THRESHOLDS, CrossSectionSegmenter, extract_patch, threshold_for
from .synthgen import DatasetManifest, generate_dataset

logger = logging.getLogger("logtrace")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PROTOCOL = 0, 2, 3, 4
DEVICE_ENV = "LOGTRACE_DEVICE"
METHODS = ("embedder", "iris", "circular-grid")
REGIMES = {"sqnet": "SqNet", "sqnet+": "SqNet+"}
MAX_FAILURE_RATE = 0.10
PROFILES = {"hldb-sm": {"n_logs": 100, "acquisitions_per_end": 3, "dataset_tag": "SM"}}


@dataclass
class SynthSection:
    n_logs: int = 8
    acquisitions_per_end: int = 4
    dataset_tag: str = "S"
    image_size: int = 512


@dataclass
class SegmentationSection:
    epochs: int = 30
    input_size: int = 96
    width: int = 12
    learning_rate: float = 1e-2
    border: int = 5
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    threshold: float = None  # overrides the per-tag map when set


@dataclass
class EmbeddingSection:
    input_side: int = 224
    dim: int = 256
    epochs: int = 400
    base_lr: float = 0.001
    decay_factor: float = 10.0
    decay_period: int = 120
    margin: float = 0.2
    classes_per_batch: int = 8
    samples_per_class: int = 4
    jitter: int = 10


@dataclass
class BaselineSection:
    bands: int = 8
    angular_positions: int = 512
    wavelength: float = 64.0
    max_shift: int = 21
    grid_bands: int = 4
    cells_per_band: int = 32
    grid_max_shift: int = 2
    prealign: bool = True


@dataclass
class EvaluationSection:
    k: int = 4
    fold_seed: int = 0
    method: str = "embedder"
    regime: str = "sqnet"
    extra: list = field(default_factory=list)


_SECTIONS = {"synth": SynthSection, "segmentation": SegmentationSection, "embedding": EmbeddingSection,
             "baselines": BaselineSection, "evaluation": EvaluationSection}


@dataclass
class ExperimentConfig:
    """Every tunable constant with its default; YAML sections mirror the fields."""

    seed: int = 0
    synth: SynthSection = field(default_factory=SynthSection)
    segmentation: SegmentationSection = field(default_factory=SegmentationSection)
    embedding: EmbeddingSection = field(default_factory=EmbeddingSection)
    baselines: BaselineSection = field(default_factory=BaselineSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - {"seed"} - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {"seed": d.get("seed", 0)}
        for name, sec in _SECTIONS.items():
            values = d.get(name) or {}
            if not isinstance(values, dict):
                raise ConfigError(f"config section {name} must be a mapping")
            allowed = {f.name for f in fields(sec)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name}: {sorted(bad)}")
            kwargs[name] = sec(**values)
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(yaml.safe_load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc

    def to_dict(self):
        return asdict(self)

    def validate(self):
        seg, ev = self.segmentation, self.evaluation
        ts = dict(seg.thresholds)
        if seg.threshold is not None:
            ts["<override>"] = seg.threshold
        for tag, t in ts.items():
            if not isinstance(t, (int, float)) or not 0 < t < 1:
                raise ConfigError(f"threshold for {tag} must lie in (0, 1), got {t!r}")
        if ev.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {ev.method!r}")
        if ev.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {sorted(REGIMES)}, got {ev.regime!r}")
        if ev.regime == "sqnet+" and not ev.extra:
            raise ConfigError("regime sqnet+ needs at least one --extra patch directory")
        if ev.k < 2:
            raise ConfigError("k must be at least 2")
        for name in ("n_logs", "acquisitions_per_end", "image_size"):
            if getattr(self.synth, name) < 1:
                raise ConfigError(f"synth.{name} must be positive")
        if seg.epochs < 0 or self.embedding.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        return self


# ---------------------------------------------------------------- run directory


def _versions():
    import scipy
    import sklearn
    import torch

    return {"logtrace": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "torch": torch.__version__}


def _device():
    device = os.environ.get(DEVICE_ENV, "cpu")
    if device != "cpu":
        logger.warning("%s=%s requested; the models in this package run on cpu", DEVICE_ENV, device)
    return device


def _start_run(out, command, config, argv):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
    info = {"command": command, "argv": list(argv), "seed": config.seed,
            "fold_seed": config.evaluation.fold_seed, "device": _device(), "versions": _versions()}
    with open(out / "run.json", "w") as fh:
        json.dump(info, fh, indent=1, sort_keys=True)
    return out


# ---------------------------------------------------------------- patch directories

INDEX = "index.json"


def _write_index(directory, dataset_tag, entries, extra=None):
    doc = {"dataset_tag": dataset_tag, "entries": entries, **(extra or {})}
    with open(Path(directory) / INDEX, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_patch_dir(directory):
    """``(dataset_tag, [(AcquisitionId, SquarePatch), ...])`` of a patch directory."""
    path = Path(directory) / INDEX
    if not path.is_file():
        raise ConfigError(f"{directory} is not a patch directory (no {INDEX})")
    with open(path) as fh:
        doc = json.load(fh)
    out = []
    for e in doc["entries"]:
        if e.get("failed"):
            continue
        acq = AcquisitionId.parse(e["id"])
        out.append((acq, load_patch(directory, acq)))
    if not out:
        raise InvalidInputError(f"{directory} holds no usable patches")
    return doc["dataset_tag"], out


def _load_manifest(data):
    path = Path(data)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ConfigError(f"no dataset manifest at {path}")
    return DatasetManifest.load(path)


# ---------------------------------------------------------------- commands


def cmd_synth(config, args):
    syn = config.synth
    manifest = generate_dataset(syn.n_logs, syn.acquisitions_per_end, syn.dataset_tag, config.seed, args.out,
                                image_size=syn.image_size)
    _start_run(manifest.path.parent, "synth", config, args.argv)
    print(manifest.path)
    return EXIT_OK


def _segmenter(config, args, out):
    seg = config.segmentation
    if args.model and Path(args.model).is_file():
        return CrossSectionSegmenter.load(args.model)
    train = _load_manifest(args.train_data or args.data)
    images = [train.load_image(e) for e in train.entries]
    masks = [train.load_mask(e) for e in train.entries]
    model = CrossSectionSegmenter(epochs=seg.epochs, input_size=seg.input_size, width=seg.width,
                                  learning_rate=seg.learning_rate, border=seg.border, seed=config.seed)
    model.fit(images, masks)
    model.save(args.model or out / "segmenter.pt")
    return model


def cmd_segment(config, args):
    manifest = _load_manifest(args.data)
    out = _start_run(args.out, "segment", config, args.argv)
    seg = config.segmentation
    t = seg.threshold if seg.threshold is not None else threshold_for(manifest.dataset_tag, seg.thresholds)
    model = None if args.masks == "truth" else _segmenter(config, args, out)
    patch_dir = out / "patches"
    (out / "masks").mkdir(exist_ok=True)
    patch_dir.mkdir(exist_ok=True)
    entries, failures = [], 0
    for e in manifest.entries:
        acq = e.acquisition_id
        image = manifest.load_image(e)
        mask = manifest.load_mask(e) if model is None else model.predict(image, threshold=t)
        stem = f"{acq.log_id}_{acq.end}_{acq.acq_index}"
        save_mask(mask, out / "masks" / f"{stem}.mask.png")
        try:
            patch = extract_patch(image, mask, seg.border, source_id=str(acq))
        except SegmentationFailedError as exc:
            failures += 1
            logger.warning("%s", exc)
            entries.append({"id": str(acq), "failed": True, "error": str(exc)})
            continue
        entries.append({"id": str(acq), "patch": save_patch(patch, patch_dir, acq), "offset": list(patch.offset)})
    _write_index(patch_dir, manifest.dataset_tag, entries, {"threshold": t, "masks": args.masks})
    rate = failures / max(len(entries), 1)
    print(patch_dir)
    if rate > MAX_FAILURE_RATE:
        logger.error("segmentation failed on %d of %d images", failures, len(entries))
        return EXIT_DATA
    return EXIT_OK


def _embedder(config):
    emb = config.embedding
    return TripletEmbedder(input_side=emb.input_side, dim=emb.dim, epochs=emb.epochs, base_lr=emb.base_lr,
                           decay_factor=emb.decay_factor, decay_period=emb.decay_period, margin=emb.margin,
                           classes_per_batch=emb.classes_per_batch, samples_per_class=emb.samples_per_class,
                           jitter=emb.jitter, seed=config.seed)


def _baseline(config, method):
    b = config.baselines
    if method == "iris":
        return IrisBaseline(bands=b.bands, angular_positions=b.angular_positions, wavelength=b.wavelength,
                            max_shift=b.max_shift, prealign=b.prealign)
    return CircularGridBaseline(bands=b.grid_bands, cells_per_band=b.cells_per_band, max_shift=b.grid_max_shift,
                                prealign=b.prealign)


def cmd_train_embed(config, args):
    _, samples = read_patch_dir(args.patches)
    out = _start_run(args.out, "train-embed", config, args.argv)
    model = _embedder(config).fit([p for _, p in samples], [a.label for a, _ in samples])
    path = model.save(out / "embedder.pt")
    print(path)
    return EXIT_OK


def cmd_embed(config, args):
    if not args.model or not Path(args.model).is_file():
        raise ConfigError("embed needs --model pointing at a trained embedder")
    _, samples = read_patch_dir(args.patches)
    out = _start_run(args.out, "embed", config, args.argv)
    model = TripletEmbedder.load(args.model)
    emb = model.transform([p for _, p in samples])
    ids = [a for a, _ in samples]
    write_embeddings_csv(ids, emb, out / "embeddings.csv")
    write_embeddings_bin(ids, emb, out / "embeddings.bin")
    print(out / "embeddings.csv")
    return EXIT_OK


def cmd_baseline_extract(config, args):
    method = config.evaluation.method
    if method not in ("iris", "circular-grid"):
        raise ConfigError("baseline-extract needs --method iris or circular-grid")
    _, samples = read_patch_dir(args.patches)
    out = _start_run(args.out, "baseline-extract", config, args.argv)
    (out / "templates").mkdir(exist_ok=True)
    baseline = _baseline(config, method)
    piths = {}
    for acq, patch in samples:
        pith = estimate_pith(patch)
        (t,) = baseline.transform([patch], piths=[pith])
        stem = f"{acq.log_id}_{acq.end}_{acq.acq_index}"
        write_template(t, out / "templates" / f"{stem}.tpl", acq)
        piths[str(acq)] = {"x": float(pith.position[0]), "y": float(pith.position[1]),
                           "confidence": pith.confidence}
    with open(out / "piths.json", "w") as fh:
        json.dump(piths, fh, indent=1)
    print(out / "templates")
    return EXIT_OK


def cmd_evaluate(config, args):
    ev = config.evaluation
    tag, samples = read_patch_dir(args.patches)
    extra = []
    for d in ev.extra if ev.regime == "sqnet+" else []:
        extra += read_patch_dir(d)[1]
    out = _start_run(args.out, "evaluate", config, args.argv)
    if ev.method == "embedder":
        method, name = _embedder(config), REGIMES[ev.regime]
    else:
        method, name = _baseline(config, ev.method), ev.method
        if extra:
            logger.warning("baselines learn nothing; extra training data is ignored")
            extra = []
    folds = make_folds([a.log_id for a, _ in samples], ev.k, seed=ev.fold_seed)
    report, records = cross_validate(samples, folds, method, extra_train=extra or None, method_name=name,
                                     fold_seed=ev.fold_seed, return_records=True)
    report.dataset = tag
    report.save(out / "report.json")
    write_scores_csv(records, out / "scores.csv")
    table = render_table({name: {tag: report.mean_eer}})
    (out / "report.txt").write_text(table)
    print(table, end="")
    for f, eer in enumerate(report.fold_eers):
        print(f"fold {f}: EER {100 * eer:.2f}%")
    return EXIT_OK


def cmd_report(config, args):
    results = {}
    for path in args.reports:
        try:
            r = EERReport.load(path)
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
        results.setdefault(r.method, {})[r.dataset] = r.mean_eer
    table = render_table(results)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "segment": cmd_segment, "train-embed": cmd_train_embed, "embed": cmd_embed,
            "baseline-extract": cmd_baseline_extract, "evaluate": cmd_evaluate, "report": cmd_report}


# ---------------------------------------------------------------- argument handling


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output / run directory")
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--regime", choices=sorted(REGIMES))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="logtrace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"logtrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--tag")
    p.add_argument("--logs", type=int)
    p.add_argument("--acqs", type=int, help="acquisitions per log end")
    p.add_argument("--image-size", type=int)

    p = sub.add_parser("segment", parents=[common], help="segment a dataset and cut square patches")
    p.add_argument("--data", required=True, help="dataset directory (holding manifest.json)")
    p.add_argument("--train-data", help="dataset used to train the segmenter (default: --data)")
    p.add_argument("--model", help="segmenter file; loaded if present, else written after training")
    p.add_argument("--masks", choices=("cnn", "truth"), default="cnn")
    p.add_argument("--threshold", type=float)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("train-embed", parents=[common], help="train the triplet embedder")
    p.add_argument("--patches", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--input-side", type=int)

    p = sub.add_parser("embed", parents=[common], help="embed patches with a trained model")
    p.add_argument("--patches", required=True)
    p.add_argument("--model")

    p = sub.add_parser("baseline-extract", parents=[common], help="write iris or circular-grid templates")
    p.add_argument("--patches", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="k-fold EER evaluation")
    p.add_argument("--patches", required=True)
    p.add_argument("--extra", action="append", help="extra training patch directory (sqnet+)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--input-side", type=int)

    p = sub.add_parser("report", parents=[common], help="render saved reports as a table")
    p.add_argument("reports", nargs="+")
    return parser


def resolve_config(args):
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    opt = lambda name: getattr(args, name, None)  # noqa: E731
    if args.seed is not None:
        config.seed = args.seed
    if opt("profile"):
        for k, v in PROFILES[args.profile].items():
            setattr(config.synth, k, v)
    for flag, key in (("tag", "dataset_tag"), ("logs", "n_logs"), ("acqs", "acquisitions_per_end"),
                      ("image_size", "image_size")):
        if opt(flag) is not None:
            setattr(config.synth, key, opt(flag))
    if opt("threshold") is not None:
        config.segmentation.threshold = args.threshold
    if opt("epochs") is not None:
        section = config.segmentation if args.command == "segment" else config.embedding
        section.epochs = args.epochs
    if opt("input_side") is not None:
        config.embedding.input_side = args.input_side
    if args.method:
        config.evaluation.method = args.method
    if args.regime:
        config.evaluation.regime = args.regime
    if opt("extra"):
        config.evaluation.extra = list(args.extra)
    return config.validate()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "report" and not args.out:
        print(f"logtrace {args.command}: --out is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol error in fold {exc.fold}: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except UndefinedEERError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (InvalidInputError, SegmentationFailedError, LogTraceError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
