"""Command-line interface.

Exit codes: 0 success, 1 internal error, 2 user or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .bending import BendingParams, bending_loss, pattern_table
from .imgcore import (
    FormatError,
    LabelMap,
    encode_fmap,
    read_fmap,
    read_float_map,
    read_float_map_pair,
    read_label_map,
    write_float_map,
    write_label_map,
)
from .losses import dist_loss, inst_loss, total_loss
from .metrics import METRIC_NAMES, aggregate, evaluate
from .pipeline import (
    PostprocessParams,
    extract_patches,
    hv_ground_truth,
    identify_overlapped,
    merge_patches,
    PatchIndex,
    watershed_postprocess,
)

LABEL_SUFFIXES = {".png": "png16", ".lmap": "lmap"}

# overlay colours keyed by the upper BE bound of each band
GREY, BLUE, GREEN, RED = (160, 160, 160), (40, 90, 255), (0, 200, 0), (255, 0, 0)
BLUE_MAX, GREEN_MAX = 9.66, 40.0


class UserError(Exception):
    """Bad input from the user; reported with exit status 2."""


def fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def key_values(d: dict) -> str:
    return "".join(f"{k}={fmt(d[k])}\n" for k in sorted(d))


def _label_format(path: Path, override: str | None) -> str:
    if override:
        return override
    try:
        return LABEL_SUFFIXES[path.suffix.lower()]
    except KeyError:
        raise UserError(f"cannot infer label format of {path}; pass --format") from None


def _read_labels(path, fmt=None) -> LabelMap:
    path = Path(path)
    try:
        return read_label_map(path, _label_format(path, fmt))
    except (OSError, FormatError, ValueError) as exc:
        raise UserError(f"cannot read {path}: {exc}") from exc


def _read_pair(path):
    try:
        return read_float_map_pair(path)
    except (OSError, FormatError, ValueError) as exc:
        raise UserError(f"cannot read {path}: {exc}") from exc


def _read_single(path):
    try:
        return read_float_map(path)
    except (OSError, FormatError, ValueError) as exc:
        raise UserError(f"cannot read {path}: {exc}") from exc


def _bending_params(args) -> BendingParams:
    try:
        return BendingParams(mu=args.mu, alpha=args.alpha, concavity_extent=args.concavity_extent)
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def _post_params(args) -> PostprocessParams:
    try:
        return PostprocessParams(args.prob_threshold, args.contour_threshold, args.min_marker_area)
    except ValueError as exc:
        raise UserError(str(exc)) from exc


# --- evaluate --------------------------------------------------------------


def _label_files(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise UserError(f"{directory} is not a directory")
    return {
        p.name: p
        for p in sorted(directory.iterdir())
        if p.is_file() and p.suffix.lower() in LABEL_SUFFIXES
    }


def _evaluate_one(gt_path, pred_path, fmt, tau):
    gt = _read_labels(gt_path, fmt)
    pred = _read_labels(pred_path, fmt)
    if gt.shape != pred.shape:
        raise UserError(f"{gt_path.name}: shapes differ {gt.shape} vs {pred.shape}")
    return evaluate(gt, pred, tau=tau)


def _report_dict(rep) -> dict:
    d = rep.values()
    d.update(
        n_gt=rep.n_gt,
        n_pred=rep.n_pred,
        n_overlapped=rep.n_overlapped,
        n_overlapped_matched=rep.n_overlapped_matched,
        tp=rep.match.tp,
        fp=rep.match.fp,
        fn=rep.match.fn,
        tau=rep.tau,
    )
    return d


def _table_row(name: str, values: dict, width: int) -> str:
    cells = ["%.4f" % values[m] if values[m] is not None else "  none" for m in METRIC_NAMES]
    return f"{name:<{width}}  " + "  ".join(f"{c:>6}" for c in cells)


def cmd_evaluate(args) -> int:
    gt_files = _label_files(Path(args.gt_dir))
    pred_files = _label_files(Path(args.pred_dir))
    if not gt_files and not pred_files:
        raise UserError("no label maps found")
    unmatched = sorted(set(gt_files) ^ set(pred_files))
    if unmatched:
        raise UserError("unmatched filenames: " + ", ".join(unmatched))
    names = sorted(gt_files)
    jobs = max(1, args.jobs)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        reports = list(
            pool.map(
                lambda n: _evaluate_one(gt_files[n], pred_files[n], args.format, args.tau), names
            )
        )
    summary = aggregate(reports, mode=args.aggregate)

    width = max(len("summary"), *(len(n) for n in names))
    lines = [f"{'image':<{width}}  " + "  ".join(f"{m:>6}" for m in METRIC_NAMES)]
    lines += [_table_row(n, r.values(), width) for n, r in zip(names, reports)]
    lines.append(_table_row("summary", summary, width))
    print("\n".join(lines))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, rep in zip(names, reports):
            (out / (Path(name).stem + ".txt")).write_text(key_values(_report_dict(rep)))
        summary_d = dict(summary, images=len(names), aggregate=args.aggregate)
        (out / "summary.txt").write_text(key_values(summary_d))
    return 0


# --- bend ------------------------------------------------------------------


def band_colors(energy: np.ndarray) -> np.ndarray:
    colors = np.empty((energy.size, 3), dtype=np.uint8)
    colors[:] = RED
    colors[energy <= GREEN_MAX] = GREEN
    colors[energy <= BLUE_MAX] = BLUE
    colors[energy == 0] = GREY
    return colors


def label_boundaries(labels: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour of another label."""
    padded = np.pad(labels, 1)
    edge = np.zeros(labels.shape, dtype=bool)
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        edge |= padded[1 + dy : 1 + dy + labels.shape[0], 1 + dx : 1 + dx + labels.shape[1]] != labels
    return edge & (labels != 0)


def render_overlay(label_map: LabelMap, report, backdrop=None) -> np.ndarray:
    """(H, W, 3) uint8 image with contour points coloured by BE band."""
    h, w = label_map.shape
    if backdrop is not None:
        base = np.asarray(backdrop, dtype=np.float64)
        if base.shape[:2] != (h, w):
            raise UserError(f"backdrop shape {base.shape[:2]} differs from label map {(h, w)}")
        if base.ndim == 3:
            base = base[..., :3].mean(axis=2)
        grey = (base / max(base.max(), 1) * 255).astype(np.uint8)
    else:
        grey = np.where(label_boundaries(label_map.labels), 90, 0).astype(np.uint8)
    img = np.repeat(grey[:, :, None], 3, axis=2)
    if report.m:
        # duplicated spur points keep the highest band
        order = np.argsort(report.energy, kind="stable")
        pts = report.points[order]
        img[pts[:, 1], pts[:, 0]] = band_colors(report.energy[order])
    return img


def cmd_bend(args) -> int:
    lm = _read_labels(args.labelmap, args.format)
    params = _bending_params(args)
    report = bending_loss(lm, params)
    info = {
        "l_be": report.loss,
        "alpha": params.alpha,
        "weighted": params.alpha * report.loss,
        "max_be": report.max_energy,
        "points": report.m,
        "concave_points": int(report.concave.sum()),
    }
    sys.stdout.write(key_values(info))
    if args.out:
        backdrop = None
        if args.image:
            with Image.open(args.image) as im:
                backdrop = np.array(im)
        out = Path(args.out)
        if out.suffix.lower() != ".png":
            out.mkdir(parents=True, exist_ok=True)
            out = out / (Path(args.labelmap).stem + "_bending.png")
        Image.fromarray(render_overlay(lm, report, backdrop), mode="RGB").save(out)
    if args.points:
        with open(args.points, "w") as fh:
            fh.write("x,y,instance,kappa,concave,energy\n")
            for (x, y), inst, k, c, e in zip(
                report.points.tolist(),
                report.instance_ids.tolist(),
                report.kappa.tolist(),
                report.concave.tolist(),
                report.energy.tolist(),
            ):
                fh.write(f"{x},{y},{inst},{k!r},{c},{e!r}\n")
    return 0


# --- pattern-table ---------------------------------------------------------


def cmd_pattern_table(args) -> int:
    try:
        params = BendingParams(mu=args.mu)
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    rows = pattern_table(params)
    print(f"{'group':>5}  {'neighbor_a':>10}  {'neighbor_b':>10}  {'angle':>5}  {'convex':>8}  {'concave':>8}")
    for p in rows:
        a = "(%d,%d)" % p.neighbor_a
        b = "(%d,%d)" % p.neighbor_b
        print(f"{p.group:>5}  {a:>10}  {b:>10}  {p.angle:5.0f}  {p.convex:8.2f}  {p.concave:8.2f}")
    return 0


# --- gt-distmap ------------------------------------------------------------


def cmd_gt_distmap(args) -> int:
    gt = _read_labels(args.gt, args.format)
    ids = identify_overlapped(gt)
    hv = hv_ground_truth(gt, ids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.gt).stem
    write_float_map(hv.all_nuclei, out / f"{stem}_hv.fmap")
    write_float_map(hv.overlapped_only, out / f"{stem}_ohv.fmap")
    (out / f"{stem}_overlapped.txt").write_text("".join(f"{i}\n" for i in sorted(ids)))
    print(f"overlapped={len(ids)}")
    return 0


# --- postprocess -----------------------------------------------------------


def cmd_postprocess(args) -> int:
    prob = _read_single(args.prob)
    hv = _read_pair(args.hv)
    if prob.shape != hv.shape:
        raise UserError(f"shapes differ: prob {prob.shape} vs hv {hv.shape}")
    labels = watershed_postprocess(prob, hv, _post_params(args))
    out = Path(args.out)
    fmt = args.format or LABEL_SUFFIXES.get(out.suffix.lower(), "png16")
    try:
        write_label_map(labels, out, fmt)
    except OverflowError as exc:
        raise UserError(str(exc)) from exc
    print(f"instances={len(labels.instance_ids())}")
    return 0


# --- loss ------------------------------------------------------------------


def cmd_loss(args) -> int:
    gt = _read_labels(args.gt, args.format)
    prob = _read_single(args.prob)
    hv = _read_pair(args.hv)
    ohv = _read_pair(args.ohv)
    for name, m in (("prob", prob), ("hv", hv), ("ohv", ohv)):
        if m.shape != gt.shape:
            raise UserError(f"{name} shape {m.shape} differs from gt {gt.shape}")
    params = _bending_params(args)
    if args.pred_labels:
        pred_labels = _read_labels(args.pred_labels, args.format)
    else:
        pred_labels = watershed_postprocess(prob, hv, _post_params(args))

    ids = identify_overlapped(gt)
    target = hv_ground_truth(gt, ids)
    truth = gt.labels != 0
    overlapped_fg = np.isin(gt.labels, sorted(ids)) if ids else np.zeros(gt.shape, bool)
    region_all = None if args.whole_image else truth
    region_ohv = None if args.whole_image else overlapped_fg
    try:
        l_inst = inst_loss(prob, truth)
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    breakdown = total_loss(
        l_inst,
        dist_loss(hv, target.all_nuclei, region_all),
        dist_loss(ohv, target.overlapped_only, region_ohv),
        bending_loss(pred_labels, params),
        params.alpha,
    )
    sys.stdout.write(key_values(breakdown.as_dict()))
    return 0


# --- patch / merge ---------------------------------------------------------


def _read_grid(path: Path, fmt):
    if path.suffix.lower() == ".fmap":
        try:
            return read_fmap(path), "fmap"
        except (OSError, FormatError) as exc:
            raise UserError(f"cannot read {path}: {exc}") from exc
    lm = _read_labels(path, fmt)
    return lm.labels, _label_format(path, fmt)


def _write_grid(arr: np.ndarray, path: Path, kind: str) -> None:
    if kind == "fmap":
        path.write_bytes(encode_fmap(arr))
    else:
        write_label_map(LabelMap(np.ascontiguousarray(arr)), path, kind)


_EXT = {"fmap": ".fmap", "png16": ".png", "lmap": ".lmap"}


def cmd_patch(args) -> int:
    src = Path(args.input)
    arr, kind = _read_grid(src, args.format)
    patches, index = extract_patches(arr, args.patch, args.window)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, p in enumerate(patches):
        name = f"patch_{i:05d}{_EXT[kind]}"
        _write_grid(np.ascontiguousarray(p), out / name, kind)
        names.append(name)
    meta = {
        "source": src.name,
        "kind": kind,
        "height": index.height,
        "width": index.width,
        "patch": index.patch,
        "window": index.window,
        "origins": [list(o) for o in index.origins],
        "files": names,
    }
    (out / "index.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"patches={len(patches)}")
    return 0


def cmd_merge(args) -> int:
    src = Path(args.patch_dir)
    try:
        meta = json.loads((src / "index.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UserError(f"cannot read patch index: {exc}") from exc
    index = PatchIndex(
        meta["height"], meta["width"], meta["patch"], meta["window"],
        tuple(tuple(o) for o in meta["origins"]),
    )
    missing = [n for n in meta["files"] if not (src / n).is_file()]
    if missing:
        raise UserError("missing patches: " + ", ".join(missing))
    kind = meta["kind"]
    outputs = []
    for n in meta["files"]:
        arr, _ = _read_grid(src / n, kind if kind != "fmap" else None)
        outputs.append(arr)
    try:
        merged = merge_patches(outputs, index)
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    _write_grid(merged, Path(args.out), kind)
    print(f"merged={index.height}x{index.width}")
    return 0


# --- parser ----------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nucbend", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({kernels.BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    def bending_flags(p):
        p.add_argument("--mu", type=float, default=20.0)
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--concavity-extent", type=int, default=1)

    def post_flags(p):
        p.add_argument("--prob-threshold", type=float, default=0.5)
        p.add_argument("--contour-threshold", type=float, default=0.4)
        p.add_argument("--min-marker-area", type=int, default=10)

    def format_flag(p):
        p.add_argument("--format", choices=["png16", "lmap"], default=None)

    p = sub.add_parser("evaluate", help="score predicted label maps against ground truth")
    p.add_argument("gt_dir")
    p.add_argument("pred_dir")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--aggregate", choices=["mean", "pooled"], default="mean")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out")
    format_flag(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bend", help="bending loss of a label map, with overlay")
    p.add_argument("labelmap")
    bending_flags(p)
    p.add_argument("--image", help="greyscale backdrop for the overlay")
    p.add_argument("--points", help="write per-point CSV here")
    p.add_argument("--out", help="overlay PNG path or directory")
    format_flag(p)
    p.set_defaults(func=cmd_bend)

    p = sub.add_parser("pattern-table", help="print the 28 neighbour-pair patterns")
    p.add_argument("--mu", type=float, default=20.0)
    p.set_defaults(func=cmd_pattern_table)

    p = sub.add_parser("gt-distmap", help="HV/OHV ground-truth maps and overlapped ids")
    p.add_argument("gt")
    p.add_argument("--out", required=True)
    format_flag(p)
    p.set_defaults(func=cmd_gt_distmap)

    p = sub.add_parser("postprocess", help="watershed instance recovery")
    p.add_argument("prob", help="1-channel FMAP foreground probability")
    p.add_argument("hv", help="2-channel FMAP HV prediction")
    p.add_argument("--out", required=True)
    post_flags(p)
    format_flag(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("loss", help="loss breakdown of predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--prob", required=True)
    p.add_argument("--hv", required=True)
    p.add_argument("--ohv", required=True)
    p.add_argument("--pred-labels", help="predicted instances for the bending term")
    p.add_argument("--whole-image", action="store_true",
                   help="average the gradient loss over all pixels, not just nuclei")
    bending_flags(p)
    post_flags(p)
    format_flag(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("patch", help="cut an image into mirror-padded tiles")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=_positive_int, default=270)
    p.add_argument("--window", type=_positive_int, default=80)
    format_flag(p)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("merge", help="stitch tile outputs back together")
    p.add_argument("patch_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    for action in sub.choices.values():
        if not any(a.dest == "jobs" for a in action._actions):
            action.add_argument("--jobs", type=_positive_int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
