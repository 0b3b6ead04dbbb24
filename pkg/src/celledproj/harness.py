"""Experiment harness: splits, synthetic digits, the feature x classifier grid,
report emission and extractor benchmarks."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import logging
import math
import re
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from celledproj import classifiers as clf
from celledproj import features as feat
from celledproj.errors import ConfigError, EmptyImage, ExtractionError, TooFewSamples
from celledproj.imagecore import BinaryImage, LabeledDataset, load_dataset, load_pbm, normalize

log = logging.getLogger(__name__)

CLASSIFIER_PARAM = {"knn": "k", "pnn": "spread", "fbpn": "hidden"}
CLASSIFIER_TITLE = {
    "knn": "k-Nearest Neighbour (k)",
    "pnn": "Probabilistic Neural Network (spread)",
    "fbpn": "Back Propagation Network (hidden neurons)",
}
CSV_COLUMNS = ("feature", "feature_params", "classifier", "classifier_params", "accuracy", "seconds")


# --- splitting ---------------------------------------------------------------------

def split_dataset(data: LabeledDataset, train_fraction: float, test_fraction: float,
                  seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified, seeded split into disjoint train and test sets.

    Each class contributes ``round(fraction * class size)`` samples to each
    side; both keep the original sample order.
    """
    if train_fraction <= 0 or test_fraction <= 0 or train_fraction + test_fraction > 1 + 1e-9:
        raise ConfigError("fractions must be positive and sum to at most 1")
    labels = data.labels
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(data.class_count):
        members = np.flatnonzero(labels == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise TooFewSamples(f"class {c} has {members.size} sample; at least 2 are needed")
        members = rng.permutation(members)
        n_train = max(1, int(round(train_fraction * members.size)))
        n_test = max(1, int(round(test_fraction * members.size)))
        n_train = min(n_train, members.size - 1)
        n_test = min(n_test, members.size - n_train)
        train_idx.extend(members[:n_train])
        test_idx.extend(members[n_train : n_train + n_test])

    def subset(idx, suffix):
        return LabeledDataset([data.samples[i] for i in sorted(idx)], data.class_count,
                              f"{data.name}:{suffix}")

    return subset(train_idx, "train"), subset(test_idx, "test")


# --- synthetic digits ----------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    samples_per_class: int = 30
    rotation: float = 15.0
    shear: float = 0.15
    noise: float = 0.03
    thickness_steps: int = 0
    size: int = 16

    def __post_init__(self):
        if not 0 <= self.noise <= 0.2:
            raise ConfigError("noise probability must lie in [0, 0.2]")
        if not 0 <= self.rotation <= 30:
            raise ConfigError("rotation range must lie within [-30, 30] degrees")
        if self.samples_per_class < 0 or self.thickness_steps < 0 or self.shear < 0:
            raise ConfigError("samples_per_class, thickness_steps and shear must be non-negative")


def load_templates(directory=None) -> list[BinaryImage]:
    """The ten digit glyphs ``digit0.pbm`` .. ``digit9.pbm``."""
    if directory is None:
        root = resources.files("celledproj") / "templates"
        return [load_pbm(root / f"digit{d}.pbm") for d in range(10)]
    directory = Path(directory)
    return [load_pbm(directory / f"digit{d}.pbm") for d in range(10)]


def _affine(px: np.ndarray, angle_deg: float, shear: float) -> np.ndarray:
    """Rotate and shear about the foreground centroid by inverse nearest-neighbour mapping."""
    if angle_deg == 0 and shear == 0:
        return px.copy()
    ys, xs = np.nonzero(px)
    cy, cx = ys.mean(), xs.mean()
    theta = math.radians(angle_deg)
    # forward map: shear x by y, then rotate
    fwd = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]]) @ np.array([[1.0, shear], [0.0, 1.0]])
    inv = np.linalg.inv(fwd)
    rr, cc = np.indices(px.shape)
    dx, dy = cc - cx, rr - cy
    sx = np.rint(inv[0, 0] * dx + inv[0, 1] * dy + cx).astype(int)
    sy = np.rint(inv[1, 0] * dx + inv[1, 1] * dy + cy).astype(int)
    inside = (sx >= 0) & (sx < px.shape[1]) & (sy >= 0) & (sy < px.shape[0])
    out = np.zeros_like(px)
    out[inside] = px[sy[inside], sx[inside]]
    return out


def _dilate(px: np.ndarray) -> np.ndarray:
    out = px.copy()
    out[1:, :] |= px[:-1, :]
    out[:, 1:] |= px[:, :-1]
    out[1:, 1:] |= px[:-1, :-1]
    return out


def _erode(px: np.ndarray) -> np.ndarray:
    out = px.copy()
    out[:-1, :] &= px[1:, :]
    out[:, :-1] &= px[:, 1:]
    out[:-1, :-1] &= px[1:, 1:]
    out[-1, :] = 0
    out[:, -1] = 0
    return out


def distort(template: BinaryImage, cfg: SynthConfig, rng: np.random.Generator) -> BinaryImage:
    """One random variant of ``template`` in the template's own frame (not normalized)."""
    px = template.pixels.astype(np.uint8)
    angle = rng.uniform(-cfg.rotation, cfg.rotation) if cfg.rotation else 0.0
    shear = rng.uniform(-cfg.shear, cfg.shear) if cfg.shear else 0.0
    px = _affine(px, angle, shear)
    # stroke width changes before pixel noise so noise stays single-pixel
    step = int(rng.integers(-cfg.thickness_steps, cfg.thickness_steps + 1)) if cfg.thickness_steps else 0
    for _ in range(abs(step)):
        px = _dilate(px) if step > 0 else _erode(px)
    px ^= (rng.random(px.shape) < cfg.noise).astype(np.uint8)
    return BinaryImage(px)


def synth_generate(templates, cfg: SynthConfig = SynthConfig(), retries: int = 10) -> LabeledDataset:
    """``cfg.samples_per_class`` distorted, normalized samples per template, class-major order."""
    templates = list(templates)
    if len(templates) != 10:
        raise ConfigError(f"expected 10 templates, got {len(templates)}")
    for d, t in enumerate(templates):
        if t.foreground_count() == 0:
            raise EmptyImage(f"template {d} has no foreground")
    rng = np.random.default_rng(cfg.seed)
    samples = []
    for label, template in enumerate(templates):
        for _ in range(cfg.samples_per_class):
            for _attempt in range(retries + 1):
                img = distort(template, cfg, rng)
                if img.foreground_count():
                    break
            else:
                raise EmptyImage(f"distortions erased template {label} {retries + 1} times in a row")
            samples.append((normalize(img, cfg.size, cfg.size), label))
    return LabeledDataset(samples, 10, name=f"synth-seed{cfg.seed}")


# --- experiment spec ----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureSpec:
    label: str
    name: str
    params: dict = field(default_factory=dict)
    title: str = ""
    subtitle: str = ""


@dataclass(frozen=True)
class ClassifierSpec:
    name: str
    subranges: tuple  # ((label, (value, ...)), ...)

    def __post_init__(self):
        if self.name not in CLASSIFIER_PARAM:
            raise ConfigError(f"unknown classifier {self.name!r}")
        cast = float if self.name == "pnn" else int
        subranges = tuple((str(label), tuple(cast(v) for v in values)) for label, values in self.subranges)
        if not subranges or any(not values for _, values in subranges):
            raise ConfigError(f"classifier {self.name!r} needs at least one parameter value per subrange")
        object.__setattr__(self, "subranges", subranges)


@dataclass
class ExperimentSpec:
    features: list
    classifiers: list
    dataset: str = "synth"
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(samples_per_class=300))
    train_fraction: float = 2 / 3
    test_fraction: float = 1 / 3
    seed: int = 0
    size: int = 16
    fbpn: clf.FbpnConfig = field(default_factory=clf.FbpnConfig)
    jobs: int = 1

    def __post_init__(self):
        if not self.features or not self.classifiers:
            raise ConfigError("at least one feature and one classifier must be enabled")
        if self.train_fraction + self.test_fraction > 1 + 1e-9:
            raise ConfigError("train and test fractions sum to more than 1")

    def canonical(self) -> str:
        """Stable text of everything that affects results (``jobs`` excluded)."""
        lines = [f"dataset={self.dataset}", f"synth={self.synth!r}",
                 f"split={self.train_fraction!r},{self.test_fraction!r}", f"seed={self.seed}",
                 f"size={self.size}", f"fbpn={self.fbpn!r}"]
        lines += [f"feature={f.label}:{f.name}:{feat.format_params(f.params)}" for f in self.features]
        lines += [f"classifier={c.name}:{c.subranges!r}" for c in self.classifiers]
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


DEFAULT_FEATURES = [
    FeatureSpec("cp-4h", "cp", {"kh": 4, "kv": 0}, "Celled Projections", "4 Horizontal"),
    FeatureSpec("cp-8h", "cp", {"kh": 8, "kv": 0}, "Celled Projections", "8 Horizontal"),
    FeatureSpec("cp-4h4v", "cp", {"kh": 4, "kv": 4}, "Celled Projections", "4 Horizontal & 4 Vertical"),
    FeatureSpec("crossings", "crossings", {}, "Crossings", "Horizontal & Vertical"),
    FeatureSpec("fourier", "fourier", {}, "Fourier Transforms", "64 Low Frequency"),
    FeatureSpec("moments", "moments", {}, "Moments", "15 Central Moments"),
    FeatureSpec("hist", "hist", {}, "Projection Histograms", "Horizontal & Vertical"),
    FeatureSpec("zoning", "zoning", {"rows": 4, "cols": 4}, "Zoning", "4 x 4"),
]

DEFAULT_CLASSIFIERS = [
    ClassifierSpec("knn", (("3", (3,)), ("5", (5,)), ("7", (7,)))),
    ClassifierSpec("pnn", (("0-1", (0.25, 0.5, 0.75, 1.0)), ("1-2", (1.25, 1.5, 2.0)),
                           ("2-inf", (3.0, 5.0, 9.0, 30.0, 100.0, 900.0)))),
    ClassifierSpec("fbpn", (("21-30", (25, 30)), ("31-40", (35, 40)), ("41-50", (45, 50)))),
]


def default_spec(**overrides) -> ExperimentSpec:
    """The full Table-1-shaped grid on synthetic digits."""
    spec = ExperimentSpec(list(DEFAULT_FEATURES), list(DEFAULT_CLASSIFIERS))
    return replace(spec, **overrides)


def _number(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def _value(text: str):
    x = _number(text)
    return int(x) if x.is_integer() and "." not in text else x


def parse_subranges(text: str) -> tuple:
    """``"0-1: 0.25, 0.5 | 1-2: 1.5"`` -> ``(("0-1", (0.25, 0.5)), ("1-2", (1.5,)))``."""
    out = []
    for part in text.split("|"):
        label, sep, values = part.partition(":")
        if not sep or not label.strip() or not values.strip():
            raise ConfigError(f"bad subrange {part.strip()!r}; expected 'label: v1, v2'")
        out.append((label.strip(), tuple(_value(v) for v in values.split(","))))
    return tuple(out)


def _format_value(v) -> str:
    return str(v) if isinstance(v, int) else f"{v:g}"


def format_subranges(subranges) -> str:
    return " | ".join(f"{label}: {', '.join(_format_value(v) for v in vals)}" for label, vals in subranges)


_BOOL = {"yes": True, "true": True, "on": True, "1": True, "no": False, "false": False, "off": False, "0": False}


def parse_spec(text: str) -> ExperimentSpec:
    """Parse the ``key = value`` spec file format.

    Sections: ``[experiment]``, ``[dataset]``, ``[fbpn]``, one
    ``[feature <label>]`` per feature row and one ``[classifier <name>]`` per
    classifier.  Omitted feature/classifier sections fall back to the
    defaults; ``enabled = no`` switches an entry off.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"spec does not parse: {exc}") from None

    def enabled(sec):
        flag = sec.get("enabled", "yes").strip().lower()
        if flag not in _BOOL:
            raise ConfigError(f"bad enabled flag {flag!r}")
        return _BOOL[flag]

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    ds = cp["dataset"] if cp.has_section("dataset") else {}
    seed = int(exp.get("seed", 0))
    synth = SynthConfig(
        seed=seed,
        samples_per_class=int(ds.get("per_class", 300)),
        rotation=_number(ds.get("rotation", "15")),
        shear=_number(ds.get("shear", "0.15")),
        noise=_number(ds.get("noise", "0.03")),
        thickness_steps=int(ds.get("thickness", 0)),
        size=int(exp.get("size", 16)),
    )

    features = {f.label: f for f in DEFAULT_FEATURES}
    feature_sections = [s for s in cp.sections() if s.startswith("feature ")]
    if feature_sections:
        features = {}
    for s in feature_sections:
        sec = cp[s]
        label = s[len("feature "):].strip()
        name = sec.get("kind", label).strip()
        params = feat.canonical_params(name, feat.parse_params(sec.get("params", "")))
        if enabled(sec):
            features[label] = FeatureSpec(label, name, params, sec.get("title", label).strip(),
                                          sec.get("subtitle", feat.format_params(params)).strip())

    classifiers = {c.name: c for c in DEFAULT_CLASSIFIERS}
    clf_sections = [s for s in cp.sections() if s.startswith("classifier ")]
    if clf_sections:
        classifiers = {}
    for s in clf_sections:
        sec = cp[s]
        name = s[len("classifier "):].strip()
        if name not in CLASSIFIER_PARAM:
            raise ConfigError(f"unknown classifier {name!r}")
        default = next(c for c in DEFAULT_CLASSIFIERS if c.name == name)
        subranges = parse_subranges(sec["subranges"]) if "subranges" in sec else default.subranges
        if enabled(sec):
            classifiers[name] = ClassifierSpec(name, subranges)
    ordered = [classifiers[n] for n in ("knn", "pnn", "fbpn") if n in classifiers]

    fb = cp["fbpn"] if cp.has_section("fbpn") else {}
    base = clf.FbpnConfig()
    fbpn = clf.FbpnConfig(
        hidden_count=base.hidden_count,
        learning_rate=_number(fb.get("learning_rate", repr(base.learning_rate))),
        max_epochs=int(fb.get("max_epochs", base.max_epochs)),
        validation_fraction=_number(fb.get("validation_fraction", repr(base.validation_fraction))),
        patience=int(fb.get("patience", base.patience)),
        seed=seed,
    )
    return ExperimentSpec(
        features=list(features.values()),
        classifiers=ordered,
        dataset=ds.get("source", "synth").strip() or "synth",
        synth=synth,
        train_fraction=_number(exp.get("train_fraction", "2/3")),
        test_fraction=_number(exp.get("test_fraction", "1/3")),
        seed=seed,
        size=synth.size,
        fbpn=fbpn,
        jobs=int(exp.get("jobs", 1)),
    )


def load_spec(path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8"))


def format_spec(spec: ExperimentSpec) -> str:
    """Spec file text that :func:`parse_spec` reads back to ``spec``."""
    s = spec.synth
    lines = [
        "[experiment]", f"seed = {spec.seed}", f"train_fraction = {spec.train_fraction!r}",
        f"test_fraction = {spec.test_fraction!r}", f"size = {spec.size}", f"jobs = {spec.jobs}", "",
        "[dataset]", f"source = {spec.dataset}", f"per_class = {s.samples_per_class}",
        f"rotation = {s.rotation!r}", f"shear = {s.shear!r}", f"noise = {s.noise!r}",
        f"thickness = {s.thickness_steps}", "",
        "[fbpn]", f"learning_rate = {spec.fbpn.learning_rate!r}", f"max_epochs = {spec.fbpn.max_epochs}",
        f"validation_fraction = {spec.fbpn.validation_fraction!r}", f"patience = {spec.fbpn.patience}", "",
    ]
    for f in spec.features:
        lines += [f"[feature {f.label}]", f"kind = {f.name}", f"params = {feat.format_params(f.params)}",
                  f"title = {f.title or f.label}", f"subtitle = {f.subtitle or feat.format_params(f.params)}", ""]
    for c in spec.classifiers:
        lines += [f"[classifier {c.name}]", f"subranges = {format_subranges(c.subranges)}", ""]
    return "\n".join(lines)


# --- evaluation ---------------------------------------------------------------------

@dataclass
class CellResult:
    feature: str
    feature_params: str
    classifier: str
    classifier_params: str
    confusion: np.ndarray
    seconds: float = 0.0
    order: tuple = ()

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) * 100.0 / total) if total else 0.0


@dataclass
class ExperimentReport:
    cells: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    seed: int = 0

    def cell(self, feature: str, classifier: str, subrange: str | None = None) -> CellResult:
        for c in self.cells:
            if c.feature == feature and c.classifier == classifier and (
                    subrange is None or c.classifier_params.split(";")[0].split("=")[1] == subrange):
                return c
        raise KeyError((feature, classifier, subrange))


def featurize(data: LabeledDataset, name: str, params: dict | None = None) -> clf.FeatureMatrix:
    vecs = [feat.extract(img, name, params) for img in data.images]
    return clf.FeatureMatrix.from_vectors(vecs, data.labels, data.class_count)


def confusion_matrix(truth, predicted, class_count: int) -> np.ndarray:
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (np.asarray(truth, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return cm


def evaluate_matrices(train: clf.FeatureMatrix, test: clf.FeatureMatrix, classifier: str, value,
                      fbpn_config: clf.FbpnConfig | None = None) -> tuple[np.ndarray, float]:
    """Train, predict every test vector; returns ``(confusion, seconds)``."""
    start = time.perf_counter()
    model = clf.train(classifier, train, value, fbpn_config)
    predicted = clf.predict(model, test)
    return confusion_matrix(test.labels, predicted, train.class_count), time.perf_counter() - start


def evaluate(train: LabeledDataset, test: LabeledDataset, feature: str, feature_params: dict | None,
             classifier: str, value, fbpn_config: clf.FbpnConfig | None = None) -> CellResult:
    """One grid cell: extract features, train, classify the test set."""
    if len(train) == 0 or len(test) == 0:
        raise ConfigError("train and test sets must be non-empty")
    params = feat.canonical_params(feature, feature_params)
    start = time.perf_counter()
    tr, te = featurize(train, feature, params), featurize(test, feature, params)
    cm, _ = evaluate_matrices(tr, te, classifier, value, fbpn_config)
    return CellResult(feature, feat.format_params(params), classifier,
                      f"{CLASSIFIER_PARAM[classifier]}={_format_value(value)}", cm,
                      time.perf_counter() - start)


def _cell_id(feature_label: str, classifier: str, value) -> str:
    return re.sub(r"[^A-Za-z0-9.=_-]+", "_", f"{feature_label}__{classifier}__{_format_value(value)}")


def _write_trial(path: Path, trial: CellResult) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + ("confusion",))
    w.writerow([trial.feature, trial.feature_params, trial.classifier, trial.classifier_params,
                f"{trial.accuracy:.2f}", repr(trial.seconds), " ".join(map(str, trial.confusion.ravel()))])
    tmp = path.with_suffix(".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    tmp.replace(path)


def _read_trial(path: Path, class_count: int) -> CellResult | None:
    try:
        rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
        row = rows[1]
        cm = np.array([int(v) for v in row[6].split()], dtype=np.int64).reshape(class_count, class_count)
        return CellResult(row[0], row[1], row[2], row[3], cm, float(row[5]))
    except (OSError, IndexError, ValueError):
        log.warning("ignoring unreadable cache entry %s", path)
        return None


def _run_task(task):
    """Evaluate every value of one (feature, classifier, subrange) block, using the cache."""
    fspec, cname, values, tr, te, fbpn_config, cache = task
    out = []
    for value in values:
        path = cache / f"{_cell_id(fspec.label, cname, value)}.csv" if cache else None
        if path is not None and path.exists():
            cached = _read_trial(path, tr.class_count)
            if cached is not None:
                out.append(cached)
                continue
        cm, seconds = evaluate_matrices(tr, te, cname, value, fbpn_config)
        trial = CellResult(fspec.label, feat.format_params(fspec.params), cname,
                           f"{CLASSIFIER_PARAM[cname]}={_format_value(value)}", cm, seconds)
        if path is not None:
            _write_trial(path, trial)
        out.append(trial)
    return out


def build_dataset(spec: ExperimentSpec, templates=None) -> LabeledDataset:
    if spec.dataset == "synth":
        synth = replace(spec.synth, seed=spec.seed, size=spec.size)
        return synth_generate(load_templates(templates), synth)
    return load_dataset(spec.dataset).normalized(spec.size, spec.size)


def run_grid(spec: ExperimentSpec, jobs: int | None = None, cache_dir=None, templates=None,
             data: LabeledDataset | None = None) -> ExperimentReport:
    """Evaluate every feature x classifier x parameter value and keep the best value
    of each parameter subrange.

    Trials are cached under ``cache_dir/<spec digest>/`` when ``cache_dir`` is
    given, so an interrupted run resumes where it stopped.  Results do not
    depend on ``jobs``.
    """
    jobs = jobs or spec.jobs
    if data is None:
        data = build_dataset(spec, templates)
    else:
        data = data.normalized(spec.size, spec.size)
    train, test = split_dataset(data, spec.train_fraction, spec.test_fraction, spec.seed + 1)
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / spec.digest()
        cache.mkdir(parents=True, exist_ok=True)

    fbpn_config = replace(spec.fbpn, seed=spec.seed)
    blocks, tasks = [], []
    # FBPN blocks go last: they dominate the run time
    for ci, cspec in sorted(enumerate(spec.classifiers), key=lambda t: t[1].name == "fbpn"):
        for fi, fspec in enumerate(spec.features):
            for si, (label, values) in enumerate(cspec.subranges):
                blocks.append((fi, ci, si, fspec, cspec, label, values))
    matrices = {}
    for fspec in spec.features:
        matrices[fspec.label] = (featurize(train, fspec.name, fspec.params),
                                 featurize(test, fspec.name, fspec.params))
    for fi, ci, si, fspec, cspec, label, values in blocks:
        tr, te = matrices[fspec.label]
        tasks.append((fspec, cspec.name, values, tr, te, fbpn_config, cache))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    report = ExperimentReport(seed=spec.seed, metadata={
        "dataset": data.name, "train": len(train), "test": len(test),
        "classes": data.class_count, "size": f"{spec.size}x{spec.size}", "spec": spec.digest(),
    })
    for (fi, ci, si, fspec, cspec, label, values), trials in zip(blocks, results):
        best_i = max(range(len(trials)), key=lambda i: (trials[i].accuracy, -i))
        best = trials[best_i]
        pname = CLASSIFIER_PARAM[cspec.name]
        params = f"{pname}={label}"
        if len(values) > 1 or label != _format_value(values[best_i]):
            params += f";best={_format_value(values[best_i])}"
        report.cells.append(CellResult(fspec.label, best.feature_params, cspec.name, params,
                                       best.confusion, best.seconds, (fi, ci, si)))
        for ti, trial in enumerate(trials):
            trial.order = (fi, ci, si, ti)
            report.trials.append(trial)
    report.cells.sort(key=lambda c: c.order)
    report.trials.sort(key=lambda c: c.order)
    return report


# --- reports --------------------------------------------------------------------------

def emit_report(report: ExperimentReport, fmt: str = "csv", timings: bool = False,
                spec: ExperimentSpec | None = None) -> str:
    """Render ``report`` as CSV rows or as a markdown table with one row per
    feature and one column per classifier parameter range.

    The ``seconds`` column stays empty unless ``timings`` is set, which keeps
    reruns byte-identical.
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in report.cells:
            w.writerow([c.feature, c.feature_params, c.classifier, c.classifier_params,
                        f"{c.accuracy:.2f}", f"{c.seconds:.3f}" if timings else ""])
        return buf.getvalue()
    if fmt in ("md", "markdown"):
        return _markdown(report, spec)
    raise ConfigError(f"unknown report format {fmt!r}")


def _markdown(report: ExperimentReport, spec: ExperimentSpec | None) -> str:
    columns = []  # (classifier, subrange label)
    for c in report.cells:
        key = (c.classifier, c.classifier_params.split(";")[0].split("=", 1)[1])
        if key not in columns:
            columns.append(key)
    titles = {f.label: (f.title or f.label, f.subtitle or feat.format_params(f.params))
              for f in (spec.features if spec else DEFAULT_FEATURES)}
    rows = []
    for c in report.cells:
        if c.feature not in rows:
            rows.append(c.feature)
    lookup = {(c.feature, c.classifier, c.classifier_params.split(";")[0].split("=", 1)[1]): c
              for c in report.cells}
    head = ["Feature", "Parameter"] + [f"{n.upper()} {CLASSIFIER_PARAM[n]} {lab}" for n, lab in columns]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        title, sub = titles.get(r, (r, ""))
        vals = []
        for n, lab in columns:
            cell = lookup.get((r, n, lab))
            vals.append(f"{cell.accuracy:.2f}" if cell else "")
        lines.append("| " + " | ".join([title, sub] + vals) + " |")
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def ordering_warnings(report: ExperimentReport, classifier: str = "knn") -> list[str]:
    """Check the qualitative ranking celled projection >= zoning >= histograms."""
    msgs = []
    chain = ("cp-4h4v", "zoning", "hist")
    labels = {c.feature for c in report.cells}
    if not set(chain) <= labels:
        return msgs
    for c in report.cells:
        if c.feature != chain[0] or c.classifier != classifier:
            continue
        sub = c.classifier_params.split(";")[0].split("=", 1)[1]
        accs = [report.cell(f, classifier, sub).accuracy for f in chain]
        if not accs[0] >= accs[1] >= accs[2]:
            msgs.append(f"{classifier} {sub}: cp-4h4v {accs[0]:.2f}, zoning {accs[1]:.2f}, "
                        f"hist {accs[2]:.2f} breaks the expected ordering")
    return msgs


# --- benchmarks ------------------------------------------------------------------------

BENCH_FEATURES = (
    ("cp-4h4v", "cp", {"kh": 4, "kv": 4}),
    ("crossings", "crossings", {}),
    ("fourier", "fourier", {}),
    ("moments", "moments", {}),
    ("hu", "hu", {}),
    ("hist", "hist", {}),
    ("zoning", "zoning", {"rows": 4, "cols": 4}),
)


@dataclass(frozen=True)
class BenchRow:
    name: str
    per_second: float
    ns_per_item: float
    unit: str = "image"


def _median_time(fn, repetitions: int) -> float:
    runs = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        fn()
        runs.append(time.perf_counter_ns() - start)
    return max(statistics.median(runs), 1.0)


def bench_extractors(images, repetitions: int = 3, queries: int = 50) -> list[BenchRow]:
    """Median-of-runs extraction cost per feature, plus KNN query latency on
    packed (Hamming) versus expanded (Euclidean) celled-projection vectors."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    images = list(images)
    rows = []
    if not images:
        return rows
    for label, name, params in BENCH_FEATURES:
        try:
            feat.extract(images[0], name, params)
        except ExtractionError as exc:
            log.info("skipping %s: %s", label, exc)
            continue
        ns = _median_time(lambda: [feat.extract(img, name, params) for img in images], repetitions)
        per = ns / len(images)
        rows.append(BenchRow(label, 1e9 / per, per))
    try:
        vecs = [feat.extract(img, "cp", {"kh": 4, "kv": 4}) for img in images]
    except ExtractionError as exc:
        log.info("skipping KNN latency: %s", exc)
        return rows
    labels = np.zeros(len(vecs), dtype=np.int64)
    data = clf.FeatureMatrix.from_vectors(vecs, labels, 1)
    packed = clf.knn_train(data, 3, "hamming")
    expanded = clf.knn_train(data, 3, "euclidean")
    qs = vecs[:queries]
    q_dense = [v.to_bits().astype(np.float64) for v in qs]
    for label, model, qv in (("knn-hamming-packed", packed, qs), ("knn-euclidean-expanded", expanded, q_dense)):
        ns = _median_time(lambda: [clf.knn_classify(model, q) for q in qv], repetitions)
        per = ns / len(qv)
        rows.append(BenchRow(label, 1e9 / per, per, "query"))
    return rows


def format_bench(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("name", "unit", "per_second", "ns_per_item"))
    for r in rows:
        w.writerow((r.name, r.unit, f"{r.per_second:.1f}", f"{r.ns_per_item:.0f}"))
    return buf.getvalue()
