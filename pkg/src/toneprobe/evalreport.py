"""Layer x fold sweep driver, metrics, aggregation, and report emission.

A sweep trains one one-vs-rest model per (layer, evaluation instance) cell
of a fold plan and scores the held-out rows. Results aggregate to mean and
sample (n-1) standard deviation per layer, feed a per-tone recall heatmap,
and are emitted as CSV tables plus self-contained SVG figures.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embstore import FeatureTable
from .folds import FoldPlan
from .svm import predict, train_ovr

LONG_CSV_HEADER = "model_tag,language,mode,layer,fold,n_test,accuracy,macro_f1"
AGG_CSV_HEADER = "model_tag,language,mode,layer,mean_accuracy,std_accuracy,mean_f1,std_f1,n_folds"
HEATMAP_CSV_HEADER = "model_tag,language,tone,layer,accuracy_pct"


class EvalError(Exception):
    pass


@dataclass
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_epochs: int = 1000
    seed: int = 42
    standardize: bool = True


@dataclass
class LayerResult:
    model_tag: str
    language: str
    mode: str
    layer: int
    fold: int
    classes: tuple[str, ...]
    confusion: np.ndarray  # rows = true, columns = predicted
    accuracy: float
    macro_f1: float

    @property
    def n_test(self) -> int:
        return int(self.confusion.sum())

    def per_class_recall(self) -> np.ndarray:
        row_sums = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            recall = np.where(row_sums > 0, np.diag(self.confusion) / row_sums, 0.0)
        return recall


@dataclass
class AggregateResult:
    model_tag: str
    language: str
    mode: str
    layer: int
    mean_accuracy: float
    std_accuracy: float
    mean_f1: float
    std_f1: float
    n_folds: int

    @property
    def single_fold(self) -> bool:
        return self.n_folds < 2


def confusion_and_metrics(
    true_labels: list[str], predicted_labels: list[str], classes: tuple[str, ...]
) -> tuple[np.ndarray, float, float, np.ndarray]:
    """Confusion matrix, accuracy, macro-F1, per-class recall.

    A class's F1 is 0 when precision + recall is 0, so classes absent from
    both label lists still weigh into the macro mean.
    """
    if len(true_labels) != len(predicted_labels):
        raise EvalError(f"{len(true_labels)} true vs {len(predicted_labels)} predicted labels")
    index = {c: i for i, c in enumerate(classes)}
    if len(index) != len(classes):
        raise EvalError(f"duplicate class names in {classes}")
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index or p not in index:
            raise EvalError(f"label outside class list: true={t!r} predicted={p!r}")
        confusion[index[t], index[p]] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    diag = np.diag(confusion).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)
    col = confusion.sum(axis=0).astype(np.float64)
    f1 = np.zeros(len(classes))
    recall = np.zeros(len(classes))
    for i in range(len(classes)):
        precision = diag[i] / col[i] if col[i] > 0 else 0.0
        recall[i] = diag[i] / row[i] if row[i] > 0 else 0.0
        if precision + recall[i] > 0:
            f1[i] = 2.0 * precision * recall[i] / (precision + recall[i])
    return confusion, accuracy, float(f1.mean()), recall


def aggregate(results: list[LayerResult]) -> list[AggregateResult]:
    """Mean and sample (n-1) std per (model, language, mode, layer) group."""
    groups: dict[tuple, list[LayerResult]] = {}
    for r in results:
        groups.setdefault((r.model_tag, r.language, r.mode, r.layer), []).append(r)
    out = []
    for (model_tag, language, mode, layer) in sorted(groups):
        # fixed reduction order keeps float results independent of input order
        rs = sorted(groups[(model_tag, language, mode, layer)], key=lambda r: r.fold)
        acc = np.array([r.accuracy for r in rs])
        f1 = np.array([r.macro_f1 for r in rs])
        n = len(rs)
        out.append(
            AggregateResult(
                model_tag, language, mode, layer,
                mean_accuracy=float(acc.mean()),
                std_accuracy=float(acc.std(ddof=1)) if n > 1 else 0.0,
                mean_f1=float(f1.mean()),
                std_f1=float(f1.std(ddof=1)) if n > 1 else 0.0,
                n_folds=n,
            )
        )
    return out


def best_layer(aggregates: list[AggregateResult]) -> tuple[int, float]:
    """Layer with the highest mean F1; ties go to the lowest layer index."""
    if not aggregates:
        raise EvalError("no aggregates to rank")
    best = min(aggregates, key=lambda a: (-a.mean_f1, a.layer))
    return best.layer, best.mean_f1


def _fit_cell(
    features: FeatureTable,
    fold_of: dict[str, int],
    classes: tuple[str, ...],
    layer: int,
    test_fold: int,
    train_folds: tuple[int, ...],
    config: SvmConfig,
):
    rows = features.rows_for_layer(layer)
    train_set = set(train_folds)
    train_idx = [i for i in rows if fold_of[features.token_ids[i]] in train_set]
    test_idx = [i for i in rows if fold_of[features.token_ids[i]] == test_fold]
    if not train_idx or not test_idx:
        raise EvalError(f"layer {layer}: empty train or test split for test fold {test_fold}")
    model = train_ovr(
        features.X[train_idx],
        [features.tones[i] for i in train_idx],
        classes=classes,
        C=config.C,
        tol=config.tol,
        max_epochs=config.max_epochs,
        seed=config.seed,
        standardize=config.standardize,
    )
    predicted = predict(model, features.X[test_idx])
    return model, [features.tones[i] for i in test_idx], predicted


def run_sweep(
    features: FeatureTable,
    plan: FoldPlan,
    layers: list[int],
    config: SvmConfig = SvmConfig(),
    jobs: int = 1,
) -> list[LayerResult]:
    """Train and score every (layer, instance) cell; deterministic output
    order regardless of the parallel schedule."""
    layers = sorted(set(int(v) for v in layers))
    available = set(features.available_layers())
    missing_layers = [l for l in layers if l not in available]
    if missing_layers:
        raise EvalError(f"features lack layer(s) {missing_layers} (have {sorted(available)})")
    fold_of = plan.assignment
    plan_tokens = set(fold_of)
    for layer in layers:
        at_layer = {features.token_ids[i] for i in features.rows_for_layer(layer)}
        missing = sorted(plan_tokens - at_layer)
        if missing:
            raise EvalError(
                f"layer {layer}: no features for {len(missing)} plan token(s), e.g. {missing[:3]}"
            )
    plan_classes = tuple(
        sorted({features.tones[i] for i in range(len(features)) if features.token_ids[i] in fold_of})
    )
    instances = plan.evaluation_instances()

    def run_cell(cell):
        layer, (index, (test_fold, train_folds)) = cell
        _, y_true, y_pred = _fit_cell(features, fold_of, plan_classes, layer, test_fold, train_folds, config)
        confusion, accuracy, macro_f1, _ = confusion_and_metrics(y_true, y_pred, plan_classes)
        return LayerResult(
            features.model_tag, features.language, plan.mode, layer, index,
            plan_classes, confusion, accuracy, macro_f1,
        )

    cells = [(layer, inst) for layer in layers for inst in enumerate(instances)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]
    results.sort(key=lambda r: (r.model_tag, r.language, r.mode, r.layer, r.fold))
    return results


def save_results(results: list[LayerResult], path: str | Path) -> None:
    doc = [
        {
            "model_tag": r.model_tag,
            "language": r.language,
            "mode": r.mode,
            "layer": r.layer,
            "fold": r.fold,
            "classes": list(r.classes),
            "confusion": r.confusion.tolist(),
            "accuracy": r.accuracy,
            "macro_f1": r.macro_f1,
        }
        for r in results
    ]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_results(path: str | Path) -> list[LayerResult]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        LayerResult(
            d["model_tag"], d["language"], d["mode"], int(d["layer"]), int(d["fold"]),
            tuple(d["classes"]), np.asarray(d["confusion"], dtype=np.int64),
            float(d["accuracy"]), float(d["macro_f1"]),
        )
        for d in doc
    ]


def _heatmap_cells(results: list[LayerResult]) -> list[tuple[str, str, str, int, float]]:
    """(model, language, tone, layer, pct): per-class recall averaged over
    folds, in percent."""
    groups: dict[tuple, list[LayerResult]] = {}
    for r in results:
        groups.setdefault((r.model_tag, r.language, r.layer), []).append(r)
    cells = []
    for (model_tag, language, layer), rs in sorted(groups.items()):
        classes = rs[0].classes
        recall = np.mean([r.per_class_recall() for r in rs], axis=0)
        for tone, value in zip(classes, recall):
            cells.append((model_tag, language, tone, layer, float(value) * 100.0))
    cells.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
    return cells


def emit_reports(results: list[LayerResult], out_dir: str | Path) -> list[Path]:
    """Write the long CSV, the aggregate CSV, the heatmap backing CSV, and
    per (model, language, mode) layer-curve and heatmap SVGs."""
    if not results:
        raise EvalError("no results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    ordered = sorted(results, key=lambda r: (r.model_tag, r.language, r.mode, r.layer, r.fold))
    long_path = out_dir / "results_long.csv"
    with long_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LONG_CSV_HEADER.split(","))
        for r in ordered:
            writer.writerow(
                [r.model_tag, r.language, r.mode, r.layer, r.fold, r.n_test,
                 f"{r.accuracy:.6f}", f"{r.macro_f1:.6f}"]
            )
    written.append(long_path)

    aggregates = aggregate(results)
    agg_path = out_dir / "results_aggregate.csv"
    with agg_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGG_CSV_HEADER.split(","))
        for a in aggregates:
            writer.writerow(
                [a.model_tag, a.language, a.mode, a.layer,
                 f"{a.mean_accuracy:.6f}", f"{a.std_accuracy:.6f}",
                 f"{a.mean_f1:.6f}", f"{a.std_f1:.6f}", a.n_folds]
            )
    written.append(agg_path)

    heat_path = out_dir / "heatmap_cells.csv"
    cells = _heatmap_cells(results)
    with heat_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEATMAP_CSV_HEADER.split(","))
        for model_tag, language, tone, layer, pct in cells:
            writer.writerow([model_tag, language, tone, layer, f"{pct:.2f}"])
    written.append(heat_path)

    groups = sorted({(r.model_tag, r.language, r.mode) for r in results})
    for model_tag, language, mode in groups:
        group_aggs = [a for a in aggregates if (a.model_tag, a.language, a.mode) == (model_tag, language, mode)]
        group_results = [r for r in ordered if (r.model_tag, r.language, r.mode) == (model_tag, language, mode)]
        stem = f"{model_tag}_{language}_{mode}"
        curve = out_dir / f"{stem}_layer_curve.svg"
        _plot_layer_curve(group_aggs, f"{model_tag} / {language} ({mode})", curve)
        written.append(curve)
        heat = out_dir / f"{stem}_tone_heatmap.svg"
        _plot_tone_heatmap(group_results, f"{model_tag} / {language} ({mode})", heat)
        written.append(heat)
    return written


def _savefig_deterministic(fig, path: Path) -> None:
    import matplotlib

    with matplotlib.rc_context({"svg.hashsalt": "toneprobe"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_layer_curve(aggs: list[AggregateResult], title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    aggs = sorted(aggs, key=lambda a: a.layer)
    layers = [a.layer for a in aggs]
    mean = np.array([a.mean_f1 for a in aggs])
    std = np.array([a.std_f1 for a in aggs])
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(layers, mean, marker="o", lw=1.5, color="#1f6fb4")
    ax.fill_between(layers, mean - std, mean + std, alpha=0.25, color="#1f6fb4", lw=0)
    top_layer, top_f1 = best_layer(aggs)
    ax.plot([top_layer], [top_f1], marker="*", ms=16, color="#d4a017", zorder=5)
    ax.set_xlabel("layer")
    ax.set_ylabel("macro F1")
    ax.set_title(title)
    ax.set_xticks(layers)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _savefig_deterministic(fig, path)
    plt.close(fig)


def _plot_tone_heatmap(group_results: list[LayerResult], title: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    classes = group_results[0].classes
    layers = sorted({r.layer for r in group_results})
    grid = np.zeros((len(classes), len(layers)))
    for j, layer in enumerate(layers):
        rs = [r for r in group_results if r.layer == layer]
        grid[:, j] = np.mean([r.per_class_recall() for r in rs], axis=0) * 100.0
    fig, ax = plt.subplots(figsize=(6.0, 0.6 * len(classes) + 1.6))
    im = ax.imshow(grid, cmap="viridis", aspect="auto", vmin=0.0, vmax=100.0)
    ax.set_xticks(range(len(layers)), [str(l) for l in layers])
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("layer")
    ax.set_ylabel("tone")
    ax.set_title(title)
    for i in range(len(classes)):
        for j in range(len(layers)):
            color = "white" if grid[i, j] < 55.0 else "black"
            ax.text(j, i, f"{grid[i, j]:.0f}", ha="center", va="center", fontsize=7, color=color)
    fig.colorbar(im, ax=ax, label="accuracy (%)")
    fig.tight_layout()
    _savefig_deterministic(fig, path)
    plt.close(fig)
