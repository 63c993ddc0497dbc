"""Synthetic open-class tasks, the evaluation protocol, and run drivers.

A synthetic task stands in for a real image dataset: each class is a raw
prototype vector plus isotropic noise.  Prototypes are constructed so the
frozen image encoder maps a clean prototype onto its class's zero-shot
text feature direction, which emulates the pre-aligned embedding space a
pre-trained dual encoder would provide; without that alignment zero-shot
classification is chance and few-shot tuning has nothing to trade off
against.  Training pools contain base classes only; test pools contain
every class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .archive import read_archive, record_text, text_record, write_archive
from .core import harmonic_mean, round_half_up
from .encoder import (
    Encoders,
    ImageEncoderParams,
    TextEncoderParams,
    Vocabulary,
    build_handcrafted_prompt,
    build_image_encoder,
    build_text_encoder,
    build_vocabulary,
    encode_image_batch,
    encode_text_prenorm,
    split_template,
    tokenize,
)
from .errors import ConfigError, DataError, IoError
from .fusion import (
    ComboPredictor,
    FixedAlphaPredictor,
    OpenClassPredictor,
    build_prompt_bank,
)
from .scoring import ClassUniverse
from .tuning import ContextBlock, FewShotSet, TrainConfig, train_coop

__all__ = [
    "DEFAULT_TEMPLATE",
    "EvalReport",
    "Pool",
    "SyntheticTask",
    "build_predictor",
    "derive_seeds",
    "emit_report",
    "evaluate_open",
    "generate_synthetic_task",
    "load_context",
    "load_task",
    "read_report",
    "run_pipeline",
    "run_shot_sweep",
    "run_temperature_sweep",
    "sample_few_shot",
    "save_context",
    "save_task",
    "split_base_new",
]

DEFAULT_TEMPLATE = "a photo of a [CLASS]"


@dataclass(frozen=True, eq=False)
class Pool:
    """A labeled sample pool."""

    samples: np.ndarray  # (N, S)
    labels: np.ndarray  # (N,) int


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """One generated open-class task plus the frozen encoders it was built for."""

    universe: ClassUniverse
    prototypes: dict[int, np.ndarray]
    noise_scale: float
    train_pool: Pool
    test_pool: Pool
    seed: int
    template: str
    encoders: Encoders


def split_base_new(
    class_ids: list[int],
    seed: int,
    classnames: dict[int, str] | None = None,
) -> ClassUniverse:
    """Seeded shuffle; the first ceil(n/2) ids become base classes."""
    ids = list(class_ids)
    if len(ids) < 2:
        raise ConfigError(f"need at least 2 classes to split, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate class ids")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    n_base = math.ceil(len(ids) / 2)
    if classnames is None:
        classnames = {i: f"class_{i:02d}" for i in ids}
    return ClassUniverse(
        base_ids=tuple(shuffled[:n_base]),
        new_ids=tuple(shuffled[n_base:]),
        classnames=dict(classnames),
    )


def _derive_children(seed: int, n: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n)]


def generate_synthetic_task(
    n_classes: int,
    dim: int,
    noise_scale: float,
    samples_per_class: int,
    seed: int,
    *,
    test_per_class: int | None = None,
    embed_width: int = 16,
    feat_dim: int = 8,
    template: str = DEFAULT_TEMPLATE,
    shift_scale: float = 0.72,
) -> SyntheticTask:
    """Build a task whose clean prototypes encode near their text features.

    ``samples_per_class`` sizes the training pool of each base class;
    ``test_per_class`` (default: the same) sizes the test pool of every
    class.  Everything is deterministic given ``seed``.

    ``shift_scale`` controls how far prototypes sit from exact zero-shot
    alignment: base classes share one seeded offset direction in feature
    space and new classes share another.  Zero-shot inference is therefore
    equally imperfect on both splits, a context tuned on base data can
    recover the base offset (which lifts base accuracy well above
    zero-shot) but in doing so drifts away from the new-class offset
    (which costs new accuracy).  At ``shift_scale = 0`` tuning has nothing
    to recover and zero-shot is already optimal.  The default is chosen so
    that at the standard task size the trade-off is clearly visible on
    both splits after the standard 200-epoch recipe.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if dim < 2:
        raise ConfigError(f"sample dimension must be >= 2, got {dim}")
    if dim < feat_dim:
        raise ConfigError(
            f"sample dimension {dim} must be >= feature dimension {feat_dim}"
        )
    if noise_scale <= 0:
        raise ConfigError(f"noise_scale must be positive, got {noise_scale}")
    if shift_scale < 0:
        raise ConfigError(f"shift_scale must be nonnegative, got {shift_scale}")
    if samples_per_class < 1:
        raise ConfigError(f"samples_per_class must be >= 1, got {samples_per_class}")
    test_per_class = samples_per_class if test_per_class is None else test_per_class
    if test_per_class < 1:
        raise ConfigError(f"test_per_class must be >= 1, got {test_per_class}")

    split_seed, vocab_seed, text_seed, image_seed, noise_seed, shift_seed = (
        _derive_children(seed, 6)
    )
    ids = list(range(1, n_classes + 1))
    classnames = {i: f"class_{i:02d}" for i in ids}
    universe = split_base_new(ids, split_seed, classnames)

    vocab = build_vocabulary(
        [classnames[i] for i in ids], [template], embed_width, vocab_seed
    )
    prefix, suffix = split_template(template)
    max_class_tokens = max(len(tokenize(classnames[i])) for i in ids)
    max_len = len(prefix) + len(suffix) + max_class_tokens
    text = build_text_encoder(embed_width, feat_dim, max_len, text_seed)
    image = build_image_encoder(dim, feat_dim, image_seed)
    encoders = Encoders(vocab=vocab, text=text, image=image)

    # place each prototype where the image encoder maps it onto the class's
    # zero-shot text feature nudged by its split's offset; the offset is
    # applied before normalization with one shared magnitude, so a single
    # shared context shift can compensate it exactly for one split.  The
    # noise then controls task difficulty on top of that misalignment.
    shift_rng = np.random.default_rng(shift_seed)
    offsets = shift_rng.standard_normal((2, feat_dim))
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    base_set = set(universe.base_ids)
    prenorm = {
        cid: encode_text_prenorm(
            build_handcrafted_prompt(template, classnames[cid], vocab), text
        )
        for cid in ids
    }
    mean_norm = float(np.mean([np.linalg.norm(y) for y in prenorm.values()]))
    gram = image.matrix.T @ image.matrix
    prototypes: dict[int, np.ndarray] = {}
    for cid in ids:
        offset = offsets[0] if cid in base_set else offsets[1]
        target = prenorm[cid] + shift_scale * mean_norm * offset
        target /= np.linalg.norm(target)
        raw = image.matrix @ np.linalg.solve(gram, target)
        prototypes[cid] = raw / np.linalg.norm(raw)

    rng = np.random.default_rng(noise_seed)

    def draw(cid: int, count: int) -> np.ndarray:
        return prototypes[cid] + noise_scale * rng.standard_normal((count, dim))

    train_parts, train_labels = [], []
    for cid in sorted(universe.base_ids):
        train_parts.append(draw(cid, samples_per_class))
        train_labels.extend([cid] * samples_per_class)
    test_parts, test_labels = [], []
    for cid in ids:
        test_parts.append(draw(cid, test_per_class))
        test_labels.extend([cid] * test_per_class)

    return SyntheticTask(
        universe=universe,
        prototypes=prototypes,
        noise_scale=float(noise_scale),
        train_pool=Pool(np.vstack(train_parts), np.array(train_labels)),
        test_pool=Pool(np.vstack(test_parts), np.array(test_labels)),
        seed=seed,
        template=template,
        encoders=encoders,
    )


def sample_few_shot(task: SyntheticTask, shots: int, seed: int) -> FewShotSet:
    """Draw exactly ``shots`` training samples per base class, no replacement."""
    if shots < 1:
        raise DataError(f"shots must be >= 1, got {shots}")
    rng = np.random.default_rng(seed)
    pool = task.train_pool
    parts, labels = [], []
    for cid in sorted(task.universe.base_ids):
        idx = np.flatnonzero(pool.labels == cid)
        if len(idx) < shots:
            raise DataError(
                f"class {cid} has {len(idx)} training samples, needs {shots}"
            )
        chosen = rng.choice(idx, size=shots, replace=False)
        parts.append(pool.samples[np.sort(chosen)])
        labels.extend([cid] * shots)
    return FewShotSet(
        samples=np.vstack(parts), labels=np.array(labels), shots=shots
    )


@dataclass(frozen=True)
class EvalReport:
    """Open-class evaluation result; accuracies stored already rounded.

    ``h`` is recomputed from the rounded base/new accuracies so the
    emitted file is internally consistent.
    """

    predictor: str
    base_acc: float
    new_acc: float
    h: float
    shots: int
    tau: float
    alpha_mode: str
    seed: int
    epochs: int
    per_class: tuple[tuple[int, str, str, float], ...]
    mean_alpha_base: float | None
    mean_alpha_new: float | None


def evaluate_open(
    predictor,
    task: SyntheticTask,
    universe: ClassUniverse | None = None,
    *,
    shots: int = 0,
    epochs: int = 0,
    seed: int | None = None,
) -> EvalReport:
    """Argmax accuracy over all classes, split into base and new.

    ``predictor`` is called once per test image feature and must return a
    posterior over all K' classes (in ``universe.all_ids`` order), or a
    ``(posterior, alpha)`` pair; alphas, when present, are averaged per
    split.
    """
    universe = task.universe if universe is None else universe
    universe.require_open()
    feats = encode_image_batch(task.test_pool.samples, task.encoders.image)
    labels = task.test_pool.labels
    all_ids = universe.all_ids
    base_set = set(universe.base_ids)

    correct: dict[int, int] = {cid: 0 for cid in all_ids}
    totals: dict[int, int] = {cid: 0 for cid in all_ids}
    alphas_base: list[float] = []
    alphas_new: list[float] = []
    for i in range(feats.shape[0]):
        out = predictor(feats[i])
        probs, alpha = out if isinstance(out, tuple) else (out, None)
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (len(all_ids),):
            raise ConfigError(
                f"predictor returned {probs.shape[0] if probs.ndim else 0} "
                f"probabilities for a {len(all_ids)}-class universe"
            )
        label = int(labels[i])
        if label not in totals:
            raise ConfigError(f"test label {label} is not in the universe")
        pred = all_ids[int(np.argmax(probs))]
        totals[label] += 1
        if pred == label:
            correct[label] += 1
        if alpha is not None:
            (alphas_base if label in base_set else alphas_new).append(float(alpha))

    def acc(ids) -> float:
        n = sum(totals[c] for c in ids)
        k = sum(correct[c] for c in ids)
        return 100.0 * k / n if n else 0.0

    base_acc = round_half_up(acc(universe.base_ids))
    new_acc = round_half_up(acc(universe.new_ids))
    per_class = tuple(
        (
            cid,
            universe.classnames[cid],
            "base" if cid in base_set else "new",
            round_half_up(acc([cid])),
        )
        for cid in sorted(all_ids)
    )
    return EvalReport(
        predictor=str(getattr(predictor, "name", "custom")),
        base_acc=base_acc,
        new_acc=new_acc,
        h=round_half_up(harmonic_mean(base_acc, new_acc)),
        shots=shots,
        tau=float(getattr(predictor, "tau", 0.0)),
        alpha_mode=str(getattr(predictor, "alpha_mode", "custom")),
        seed=task.seed if seed is None else seed,
        epochs=epochs,
        per_class=per_class,
        mean_alpha_base=round_half_up(float(np.mean(alphas_base)), 4)
        if alphas_base
        else None,
        mean_alpha_new=round_half_up(float(np.mean(alphas_new)), 4)
        if alphas_new
        else None,
    )


# ---------------------------------------------------------------------------
# report files

_REPORT_HEADER = "promptfuse-report-v1"


def _fmt_acc(x: float) -> str:
    return f"{round_half_up(x):.1f}"


def _fmt_opt(x: float | None) -> str:
    return "none" if x is None else f"{round_half_up(x, 4):.4f}"


def emit_report(report: EvalReport, path) -> None:
    """Fixed-key-order text serialization; byte-deterministic.

    Accuracies go through half-up one-decimal rounding on the way out (a
    no-op for reports built by :func:`evaluate_open`, which stores them
    pre-rounded).
    """
    lines = [
        f"format = {_REPORT_HEADER}",
        f"predictor = {report.predictor}",
        f"alpha_mode = {report.alpha_mode}",
        f"base_acc = {_fmt_acc(report.base_acc)}",
        f"new_acc = {_fmt_acc(report.new_acc)}",
        f"h = {_fmt_acc(report.h)}",
        f"mean_alpha_base = {_fmt_opt(report.mean_alpha_base)}",
        f"mean_alpha_new = {_fmt_opt(report.mean_alpha_new)}",
        f"shots = {report.shots}",
        f"epochs = {report.epochs}",
        f"seed = {report.seed}",
        f"tau = {report.tau!r}",
    ]
    for cid, name, split, acc in report.per_class:
        lines.append(f"class = {cid} | {name} | {split} | {_fmt_acc(acc)}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def read_report(path) -> EvalReport:
    """Parse a file written by :func:`emit_report`."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read report {path}: {exc}") from exc
    fields: dict[str, str] = {}
    per_class = []
    for line in raw_lines:
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        if not _:
            raise IoError(f"{path}: malformed report line {line!r}")
        if key == "class":
            cid, name, split, acc = (part.strip() for part in value.split("|"))
            per_class.append((int(cid), name, split, float(acc)))
        else:
            fields[key] = value
    if fields.get("format") != _REPORT_HEADER:
        raise IoError(f"{path}: not a {_REPORT_HEADER} file")

    def opt(v: str) -> float | None:
        return None if v == "none" else float(v)

    try:
        return EvalReport(
            predictor=fields["predictor"],
            base_acc=float(fields["base_acc"]),
            new_acc=float(fields["new_acc"]),
            h=float(fields["h"]),
            shots=int(fields["shots"]),
            tau=float(fields["tau"]),
            alpha_mode=fields["alpha_mode"],
            seed=int(fields["seed"]),
            epochs=int(fields["epochs"]),
            per_class=tuple(per_class),
            mean_alpha_base=opt(fields["mean_alpha_base"]),
            mean_alpha_new=opt(fields["mean_alpha_new"]),
        )
    except KeyError as exc:
        raise IoError(f"{path}: missing report field {exc}") from exc


# ---------------------------------------------------------------------------
# run drivers

@dataclass(frozen=True)
class RunSeeds:
    """Child seeds for the independent random stages of one run."""

    task: int
    sample: int
    train: int


def derive_seeds(seed: int) -> RunSeeds:
    """Stable child seeds so pipeline and CLI stages agree on stream usage."""
    ss = np.random.SeedSequence(seed)
    task_ss, sample_ss, train_ss = ss.spawn(3)
    return RunSeeds(
        task=int(task_ss.generate_state(1)[0]),
        sample=int(sample_ss.generate_state(1)[0]),
        train=int(train_ss.generate_state(1)[0]),
    )


def build_predictor(mode: str, bank, universe, encoders, tau, alpha_cache_bins=0):
    """Instantiate one predictor from its mode string."""
    if mode == "dynamic":
        return OpenClassPredictor(
            bank, universe, encoders, tau, alpha_cache_bins=alpha_cache_bins
        )
    if mode == "combo":
        return ComboPredictor(bank, universe, encoders, tau)
    if mode == "learned":
        return FixedAlphaPredictor(bank, universe, encoders, tau, 1.0, name="learned")
    if mode == "handcrafted":
        return FixedAlphaPredictor(
            bank, universe, encoders, tau, 0.0, name="handcrafted"
        )
    if mode.startswith("fixed:"):
        try:
            alpha = float(mode.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad fixed-alpha mode {mode!r}") from exc
        return FixedAlphaPredictor(bank, universe, encoders, tau, alpha)
    raise ConfigError(f"unknown predictor mode {mode!r}")


def _prepare(settings):
    """generate -> sample -> train; shared by every driver."""
    seeds = derive_seeds(settings.seed)
    task = generate_synthetic_task(
        settings.n_classes,
        settings.dim,
        settings.noise_scale,
        settings.train_per_class,
        seeds.task,
        test_per_class=settings.test_per_class,
        embed_width=settings.embed_width,
        feat_dim=settings.feat_dim,
        template=settings.template,
    )
    few = sample_few_shot(task, settings.shots, seeds.sample)
    config = TrainConfig(
        max_epochs=settings.epochs,
        lr_init=settings.lr_init,
        warmup_lr=settings.warmup_lr,
        warmup_epochs=settings.warmup_epochs,
        shots=settings.shots,
        seed=seeds.train,
        tau=settings.tau,
        batch_size=settings.batch_size,
    )
    context = train_coop(few, config, task.encoders, task.universe, task.template)
    return task, context


def _report_filename(name: str) -> str:
    return "report_" + name.replace(":", "_") + ".txt"


def _write_reports(reports, out_dir) -> None:
    if out_dir is None:
        return
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for report in reports:
        emit_report(report, out / _report_filename(report.predictor))


def run_pipeline(settings) -> list[EvalReport]:
    """Full run: task, few-shot tuning, every requested predictor, reports."""
    task, context = _prepare(settings)
    bank = build_prompt_bank(context, task.encoders, task.universe)
    reports = []
    for mode in settings.predictors:
        predictor = build_predictor(
            mode,
            bank,
            task.universe,
            task.encoders,
            settings.tau,
            settings.alpha_cache_bins,
        )
        reports.append(
            evaluate_open(
                predictor,
                task,
                shots=settings.shots,
                epochs=settings.epochs,
                seed=settings.seed,
            )
        )
    _write_reports(reports, settings.out_dir)
    return reports


def run_temperature_sweep(settings, taus: list[float]) -> list[EvalReport]:
    """Evaluate the dynamic predictor at each temperature; train once."""
    if not taus:
        raise ConfigError("temperature sweep needs at least one value")
    task, context = _prepare(settings)
    bank = build_prompt_bank(context, task.encoders, task.universe)
    reports = []
    for tau in sorted(taus):
        predictor = OpenClassPredictor(bank, task.universe, task.encoders, tau)
        reports.append(
            evaluate_open(
                predictor,
                task,
                shots=settings.shots,
                epochs=settings.epochs,
                seed=settings.seed,
            )
        )
    _write_reports(
        [replace(r, predictor=f"dynamic_tau_{r.tau!r}") for r in reports],
        settings.out_dir,
    )
    return reports


def run_shot_sweep(settings, shot_counts: list[int]) -> list[EvalReport]:
    """Full train+eval of the dynamic predictor per shot count; shared task."""
    if not shot_counts:
        raise ConfigError("shot sweep needs at least one value")
    if any(s < 1 for s in shot_counts):
        raise ConfigError("shot counts must be >= 1")
    seeds = derive_seeds(settings.seed)
    task = generate_synthetic_task(
        settings.n_classes,
        settings.dim,
        settings.noise_scale,
        settings.train_per_class,
        seeds.task,
        test_per_class=settings.test_per_class,
        embed_width=settings.embed_width,
        feat_dim=settings.feat_dim,
        template=settings.template,
    )
    reports = []
    for shots in sorted(shot_counts):
        few = sample_few_shot(task, shots, seeds.sample)
        config = TrainConfig(
            max_epochs=settings.epochs,
            lr_init=settings.lr_init,
            warmup_lr=settings.warmup_lr,
            warmup_epochs=settings.warmup_epochs,
            shots=shots,
            seed=seeds.train,
            tau=settings.tau,
            batch_size=settings.batch_size,
        )
        context = train_coop(few, config, task.encoders, task.universe, task.template)
        bank = build_prompt_bank(context, task.encoders, task.universe)
        predictor = OpenClassPredictor(
            bank, task.universe, task.encoders, settings.tau
        )
        reports.append(
            evaluate_open(
                predictor,
                task,
                shots=shots,
                epochs=settings.epochs,
                seed=settings.seed,
            )
        )
    _write_reports(
        [replace(r, predictor=f"dynamic_shots_{r.shots}") for r in reports],
        settings.out_dir,
    )
    return reports


# ---------------------------------------------------------------------------
# persistence

def save_task(task: SyntheticTask, path) -> None:
    """Persist a task (pools, split, prototypes, encoders) as one archive."""
    ids = sorted(task.universe.classnames)
    names = "\n".join(f"{i}\t{task.universe.classnames[i]}" for i in ids)
    records = {
        "meta/template": text_record(task.template),
        "meta/seed": text_record(str(task.seed)),
        "meta/noise_scale": np.array([task.noise_scale]),
        "universe/base_ids": np.array(task.universe.base_ids, dtype=np.float64),
        "universe/new_ids": np.array(task.universe.new_ids, dtype=np.float64),
        "universe/classnames": text_record(names),
        "vocab/tokens": text_record("\n".join(task.encoders.vocab.tokens)),
        "vocab/table": task.encoders.vocab.table,
        "vocab/seed": text_record(str(task.encoders.vocab.seed)),
        "text/positional_mix": task.encoders.text.positional_mix,
        "text/projection": task.encoders.text.projection,
        "text/seed": text_record(str(task.encoders.text.seed)),
        "image/matrix": task.encoders.image.matrix,
        "image/seed": text_record(str(task.encoders.image.seed)),
        "prototypes/matrix": np.stack([task.prototypes[i] for i in ids]),
        "pools/train_samples": task.train_pool.samples,
        "pools/train_labels": task.train_pool.labels.astype(np.float64),
        "pools/test_samples": task.test_pool.samples,
        "pools/test_labels": task.test_pool.labels.astype(np.float64),
    }
    write_archive(path, records)


def _frozen_arr(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def load_task(path) -> SyntheticTask:
    """Load a task archive written by :func:`save_task`."""
    rec = read_archive(path)
    try:
        names = {}
        for line in record_text(rec["universe/classnames"]).splitlines():
            cid, _, name = line.partition("\t")
            names[int(cid)] = name
        universe = ClassUniverse(
            base_ids=tuple(int(round(x)) for x in rec["universe/base_ids"]),
            new_ids=tuple(int(round(x)) for x in rec["universe/new_ids"]),
            classnames=names,
        )
        tokens = tuple(record_text(rec["vocab/tokens"]).split("\n"))
        vocab = Vocabulary(
            tokens=tokens,
            table=_frozen_arr(rec["vocab/table"]),
            seed=int(record_text(rec["vocab/seed"])),
            _index={t: i for i, t in enumerate(tokens)},
        )
        text = TextEncoderParams(
            positional_mix=_frozen_arr(rec["text/positional_mix"]),
            projection=_frozen_arr(rec["text/projection"]),
            seed=int(record_text(rec["text/seed"])),
        )
        image = ImageEncoderParams(
            matrix=_frozen_arr(rec["image/matrix"]),
            seed=int(record_text(rec["image/seed"])),
        )
        ids = sorted(universe.classnames)
        protos = rec["prototypes/matrix"]
        return SyntheticTask(
            universe=universe,
            prototypes={cid: protos[j] for j, cid in enumerate(ids)},
            noise_scale=float(rec["meta/noise_scale"][0]),
            train_pool=Pool(
                rec["pools/train_samples"],
                rec["pools/train_labels"].astype(np.int64),
            ),
            test_pool=Pool(
                rec["pools/test_samples"],
                rec["pools/test_labels"].astype(np.int64),
            ),
            seed=int(record_text(rec["meta/seed"])),
            template=record_text(rec["meta/template"]),
            encoders=Encoders(vocab=vocab, text=text, image=image),
        )
    except KeyError as exc:
        raise IoError(f"{path}: missing task record {exc}") from exc


def save_context(context: ContextBlock, path) -> None:
    """Persist a tuned context: its vectors plus the origin template."""
    write_archive(
        path,
        {
            "context": context.vectors,
            "meta/origin_template": text_record(context.origin_template),
        },
    )


def load_context(path) -> ContextBlock:
    rec = read_archive(path)
    try:
        return ContextBlock(
            vectors=np.ascontiguousarray(rec["context"], dtype=np.float64),
            origin_template=record_text(rec["meta/origin_template"]),
        )
    except KeyError as exc:
        raise IoError(f"{path}: missing context record {exc}") from exc
