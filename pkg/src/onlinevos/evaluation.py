"""Jaccard scoring of label-map sequences and the plain-text report."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError


def jaccard(pred, gt, object_id):
    """Intersection over union of the pixels labelled ``object_id``; 1 if both are empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    p = pred == object_id
    g = gt == object_id
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


@dataclass
class SequenceScore:
    name: str
    object_ids: list
    per_frame: dict  # object id -> list of J for frames 1..N-1

    def object_mean(self, oid):
        vals = self.per_frame[oid]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean(self):
        means = [self.object_mean(o) for o in self.object_ids if self.per_frame[o]]
        return float(np.mean(means)) if means else float("nan")


def score_sequence(pred_maps, gt_maps, name="sequence", object_ids=None):
    """Per-object J for frames 1..N-1; frame 0 is the given annotation and is skipped."""
    pred_maps = list(pred_maps)
    gt_maps = list(gt_maps)
    if len(pred_maps) != len(gt_maps):
        raise InputError(f"{name}: {len(pred_maps)} predicted frames for {len(gt_maps)} ground-truth frames")
    if not gt_maps:
        raise InputError(f"{name}: no frames")
    if object_ids is None:
        object_ids = [int(i) for i in np.unique(gt_maps[0]) if i != 0]
    per_frame = {oid: [jaccard(p, g, oid) for p, g in zip(pred_maps[1:], gt_maps[1:])]
                 for oid in object_ids}
    return SequenceScore(name, list(object_ids), per_frame)


@dataclass
class EvalReport:
    sequences: list = field(default_factory=list)
    fps: float = None

    @property
    def global_mean(self):
        vals = [s.mean for s in self.sequences if not np.isnan(s.mean)]
        return float(np.mean(vals)) if vals else float("nan")

    def to_text(self, per_frame=True):
        """Fixed-width UTF-8 table; identical inputs give identical text."""
        lines = [f"{'sequence':<24} {'object':>6} {'frames':>6} {'mean_J':>8}"]
        for s in self.sequences:
            for oid in s.object_ids:
                lines.append(f"{s.name:<24} {oid:>6d} {len(s.per_frame[oid]):>6d} "
                             f"{s.object_mean(oid):>8.4f}")
        lines.append(f"{'global':<24} {'':>6} {'':>6} {self.global_mean:>8.4f}")
        if self.fps is not None:
            lines.append(f"fps {self.fps:.2f}")
        if per_frame:
            lines.append("")
            lines.append("per-frame J (frames 1..N-1)")
            for s in self.sequences:
                for oid in s.object_ids:
                    series = " ".join(f"{v:.4f}" for v in s.per_frame[oid])
                    lines.append(f"{s.name} {oid}: {series}")
        return "\n".join(lines) + "\n"
