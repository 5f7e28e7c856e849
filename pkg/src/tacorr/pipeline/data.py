"""Shape pairs and the on-disk dataset layout ``pairs/<id>/{source,target}.ply, gt.txt``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import PointCloud, load_cloud, save_cloud


@dataclass
class ShapePair:
    source: PointCloud
    target: PointCloud
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.source, PointCloud):
            self.source = PointCloud(self.source)
        if not isinstance(self.target, PointCloud):
            self.target = PointCloud(self.target)
        if self.ground_truth is not None:
            gt = np.asarray(self.ground_truth, dtype=int)
            if gt.shape != (len(self.source),):
                raise ValueError(
                    f"ground truth has {gt.size} entries for {len(self.source)} source points")
            if gt.size and (gt.min() < 0 or gt.max() >= len(self.target)):
                raise ValueError(f"ground-truth index out of range [0, {len(self.target)})")
            self.ground_truth = gt


def save_correspondence(indices, path):
    Path(path).write_text("".join(f"{int(i)}\n" for i in indices))


def load_correspondence(path):
    path = Path(path)
    out = []
    for no, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise ValueError(f"{path}:{no}: expected an integer index, got {line!r}") from None
    return np.array(out, dtype=int)


def save_dataset(pairs, root):
    root = Path(root)
    width = max(4, len(str(len(pairs) - 1)))
    for i, pair in enumerate(pairs):
        d = root / "pairs" / f"{i:0{width}d}"
        d.mkdir(parents=True, exist_ok=True)
        save_cloud(pair.source, d / "source.ply")
        save_cloud(pair.target, d / "target.ply")
        if pair.ground_truth is not None:
            save_correspondence(pair.ground_truth, d / "gt.txt")
    return root


def load_dataset(root, require_gt=False):
    """Pairs sorted by id, as ``[(id, ShapePair)]``."""
    base = Path(root) / "pairs"
    if not base.is_dir():
        raise FileNotFoundError(f"no pairs/ directory under {root}")
    out = []
    for d in sorted(p for p in base.iterdir() if p.is_dir()):
        gt_path = d / "gt.txt"
        if require_gt and not gt_path.exists():
            raise FileNotFoundError(f"missing ground truth {gt_path}")
        gt = load_correspondence(gt_path) if gt_path.exists() else None
        out.append((d.name, ShapePair(load_cloud(d / "source.ply"), load_cloud(d / "target.ply"),
                                      gt)))
    if not out:
        raise FileNotFoundError(f"no pair directories under {base}")
    return out
