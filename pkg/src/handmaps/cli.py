"""Batch command-line client for synthesis, evaluation and data tooling.

Thin wrapper over the service layer: every command builds the same
request models the HTTP API accepts and runs them in process, or against
a remote server when ``--server URL`` is given. Progress and log lines go
to stderr; stdout carries the command's product (tables, or one JSON
object under ``--json-summary``).
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data, evaluation
from .handmodel import GroupScheme
from .losses import default_weights
from .service import handlers, models
from .synthesis import ChannelStack, KeypointSet, Representation

RENDER_PALETTE = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 190),
]


class CliError(Exception):
    """User-facing failure; message printed to stderr, nonzero exit."""

    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _parse_grid(text: str) -> dict:
    """Grid syntax: WIDTHxHEIGHT:INPUT, WIDTH:INPUT or WIDTH (square)."""
    match = re.fullmatch(r"(\d+)(?:x(\d+))?(?::(\d+))?", text)
    if not match:
        raise CliError(f"bad --grid value {text!r}; expected e.g. 46x46:368")
    width = int(match.group(1))
    height = int(match.group(2)) if match.group(2) else width
    input_size = int(match.group(3)) if match.group(3) else 368
    return {"width": width, "height": height, "input_size": input_size}


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise CliError(f"bad {flag} value {text!r}; expected comma-separated numbers") from None


def build_run_config(args) -> models.RunConfig:
    payload = {}
    if getattr(args, "config", None):
        try:
            payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise CliError(f"cannot read config {args.config}: {err}") from None
    overrides = {
        "representation": getattr(args, "repr", None),
        "scheme": getattr(args, "scheme", None),
        "sigma_ldm": getattr(args, "sigma_ldm", None),
        "sigma_lpm": getattr(args, "sigma_lpm", None),
        "sigma_kcm": getattr(args, "sigma_kcm", None),
        "lpm_distance_mode": getattr(args, "lpm_distance", None),
    }
    payload.update({key: value for key, value in overrides.items() if value is not None})
    if getattr(args, "grid", None):
        payload["grid"] = _parse_grid(args.grid)
    try:
        return models.RunConfig(**payload)
    except (ValueError, TypeError) as err:
        raise CliError(f"invalid configuration: {err}", exit_code=2) from None


def _load_records(path: str, format_name: str) -> list[data.AnnotationRecord]:
    try:
        return data.load_annotations(path, data.AnnotationFormat(format_name))
    except (OSError, ValueError) as err:
        raise CliError(str(err)) from None


def _safe_name(image_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", image_id)


def _remote_post(server: str, path: str, payload, response_cls):
    import httpx

    url = server.rstrip("/") + path
    try:
        reply = httpx.post(url, json=payload.model_dump(), timeout=300.0)
    except httpx.HTTPError as err:
        raise CliError(f"request to {url} failed: {err}") from None
    if reply.status_code != 200:
        detail = reply.json().get("detail", reply.text) if reply.content else reply.text
        raise CliError(f"{url} returned {reply.status_code}: {detail}")
    return response_cls(**reply.json())


def _emit_summary(args, summary: dict) -> None:
    if getattr(args, "json_summary", False):
        print(json.dumps(summary, sort_keys=True))


# ---------------------------------------------------------------- synth --


def _synth_one(record: data.AnnotationRecord, config, outputs, out_dir: Path):
    started = time.perf_counter()
    stacks = handlers.synthesize_record(record.keypoints, config, outputs)
    written = []
    for kind, stack in stacks.items():
        target = out_dir / f"{_safe_name(record.image_id)}.{kind}.nsrm"
        data.write_tensor(stack, target)
        written.append(str(target))
    return (time.perf_counter() - started) * 1000.0, written


def _synth_task(record, config, outputs, out_dir):
    """Record synthesis wrapper for worker processes; failures come back as values."""
    try:
        return _synth_one(record, config, outputs, Path(out_dir))
    except ValueError as err:
        return err


def cmd_synth(args) -> int:
    config = build_run_config(args)
    outputs = tuple(token.strip() for token in args.outputs.split(",") if token.strip())
    unknown = set(outputs) - {"structure", "keypoints"}
    if unknown or not outputs:
        raise CliError(
            f"--outputs takes a comma list from {{structure, keypoints}}, got {args.outputs!r}",
            exit_code=2,
        )
    records = _load_records(args.annotations, args.format)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    failures: list[tuple[str, str]] = []
    succeeded = 0

    if args.server:
        request = models.SynthesisRequest(
            records=[models.KeypointSetModel.from_core(r.keypoints) for r in records],
            config=config,
            outputs=list(outputs),
        )
        response = _remote_post(args.server, "/synthesize", request, models.SynthesisResponse)
        batches = {
            "structure": response.structure.to_array() if response.structure else None,
            "keypoints": response.keypoints.to_array() if response.keypoints else None,
        }
        for index, record in enumerate(records):
            for kind in outputs:
                data.write_tensor(
                    batches[kind][index], out_dir / f"{_safe_name(record.image_id)}.{kind}.nsrm"
                )
        succeeded = len(records)
    else:
        if args.jobs > 1:
            # CPU-bound numpy work: worker processes, not threads
            pool = ProcessPoolExecutor(max_workers=args.jobs)
            chunk = max(1, len(records) // (args.jobs * 8))
            outcomes = zip(records, pool.map(
                _synth_task, records,
                (config for _ in records), (outputs for _ in records),
                (str(out_dir) for _ in records), chunksize=chunk,
            ))
        else:
            pool = None
            outcomes = ((r, _synth_task(r, config, outputs, out_dir)) for r in records)

        for record, outcome in outcomes:
            if isinstance(outcome, Exception):
                failures.append((record.image_id, str(outcome)))
                _log(f"{record.image_id}: FAILED: {outcome}")
                if not args.keep_going:
                    break
            else:
                millis, _ = outcome
                succeeded += 1
                _log(f"{record.image_id}: {millis:.2f} ms")
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)

    elapsed = time.perf_counter() - started
    rate = succeeded / elapsed if elapsed > 0 else 0.0
    _log(
        f"synthesized {succeeded}/{len(records)} records in {elapsed:.2f} s "
        f"({rate:.1f} records/s) -> {out_dir}"
    )
    _emit_summary(args, {
        "command": "synth",
        "records": len(records),
        "succeeded": succeeded,
        "failed": len(failures),
        "failures": [{"image_id": i, "error": e} for i, e in failures],
        "seconds": elapsed,
        "records_per_second": rate,
        "output_dir": str(out_dir),
    })
    return 0 if succeeded == len(records) else 1


# ----------------------------------------------------------------- eval --


def _keypoints_from_tensor_dir(directory: Path, gts, grid) -> list[KeypointSet]:
    decoded = []
    for record in gts:
        tensor_path = directory / f"{_safe_name(record.image_id)}.keypoints.nsrm"
        if not tensor_path.exists():
            raise CliError(f"no prediction tensor for record {record.image_id!r}: {tensor_path}")
        values = data.read_tensor(tensor_path)
        if values.ndim != 3:
            raise CliError(f"{tensor_path}: expected a rank 3 stack, got rank {values.ndim}")
        stack = ChannelStack(values, tuple(f"kp{k:02d}" for k in range(values.shape[0])), grid)
        decoded.append(evaluation.decode_keypoints(stack))
    return decoded


def _resolve_thresholds(args, value_count: int | None = None) -> list[float]:
    if args.threshold_list:
        return _parse_float_list(args.threshold_list, "--threshold-list")
    preset = evaluation.THRESHOLD_PRESETS[args.preset]
    if value_count is not None and len(preset) != value_count:
        raise CliError(
            f"{value_count} values do not fit preset {args.preset!r} "
            f"({len(preset)} thresholds); pass --threshold-list"
        )
    return list(preset)


def _print_pck_table(thresholds, values, average, emit) -> None:
    emit("".join(f"{t:>10g}" for t in thresholds) + f"{'ave':>10}")
    emit("".join(f"{v:>10.4f}" for v in values) + f"{average:>10.4f}")


def _print_improvement(baseline_average: float, average: float, server: str | None, emit) -> dict:
    if server:
        request = models.ImprovementRequest(
            baseline_average=baseline_average, new_average=average
        )
        reply = _remote_post(server, "/evaluate/improvement", request, models.ImprovementResponse)
        absolute, relative = reply.absolute, reply.relative
    else:
        absolute, relative = evaluation.improvement(baseline_average, average)
    emit(f"improvement: {absolute:+.2f} ({relative * 100.0:+.2f}%)")
    return {"improvement_absolute": absolute, "improvement_relative": relative}


def cmd_eval(args) -> int:
    summary: dict = {"command": "eval"}
    # with --json-summary stdout carries only the JSON object
    emit = _log if args.json_summary else print

    if args.values:
        values = _parse_float_list(args.values, "--values")
        thresholds = _resolve_thresholds(args, len(values))
        average = evaluation.average_pck(values)
        _print_pck_table(thresholds, values, average, emit)
        summary.update({"thresholds": thresholds, "values": values, "average": average})
    else:
        if not (args.preds and args.gts):
            raise CliError("eval needs either --values or both --preds and --gts")
        thresholds = _resolve_thresholds(args)
        gts = _load_records(args.gts, args.gt_format)
        grid = models.GridModel(**_parse_grid(args.grid)).to_core() if args.grid \
            else models.GridModel().to_core()
        preds_path = Path(args.preds)
        if preds_path.is_dir():
            preds = _keypoints_from_tensor_dir(preds_path, gts, grid)
        else:
            pred_records = _load_records(args.preds, args.pred_format)
            if len(pred_records) != len(gts):
                raise CliError(
                    f"{len(pred_records)} prediction records vs {len(gts)} ground-truth records"
                )
            preds = [r.keypoints for r in pred_records]
        gt_sets = [r.keypoints for r in gts]

        if args.server:
            request = models.PckRequest(
                predictions=[models.KeypointSetModel.from_core(k) for k in preds],
                ground_truth=[models.KeypointSetModel.from_core(k) for k in gt_sets],
                thresholds=thresholds,
            )
            reply = _remote_post(args.server, "/evaluate/pck", request, models.PckResponse)
            curve = evaluation.PckCurve(
                tuple(reply.thresholds), tuple(reply.values), reply.average
            )
        else:
            try:
                curve = evaluation.pck(preds, gt_sets, thresholds)
            except ValueError as err:
                raise CliError(str(err)) from None
        values, average = list(curve.values), curve.average
        _print_pck_table(curve.thresholds, values, average, emit)
        summary.update({"thresholds": thresholds, "values": values, "average": average})

        if args.curve_out:
            Path(args.curve_out).write_text(curve.to_text_table(), encoding="utf-8")
            _log(f"curve table -> {args.curve_out}")
        if args.plot_out:
            _write_curve_plot(curve.thresholds, values, args.plot_out)
            _log(f"curve plot -> {args.plot_out}")

    if args.baseline:
        baseline_values = _parse_float_list(args.baseline, "--baseline")
        baseline_average = evaluation.average_pck(baseline_values)
        summary["baseline_average"] = baseline_average
        summary.update(
            _print_improvement(baseline_average, summary["average"], args.server, emit)
        )

    _emit_summary(args, summary)
    return 0


def _write_curve_plot(thresholds, values, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(thresholds, values, marker="o")
    ax.set_xlabel("normalized distance threshold")
    ax.set_ylabel("PCK")
    ax.set_ylim(0.0, 1.05 if max(values) <= 1.0 else None)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --------------------------------------------------------------- render --


def cmd_render(args) -> int:
    from PIL import Image

    try:
        values = data.read_tensor(args.tensor)
    except (OSError, ValueError) as err:
        raise CliError(str(err)) from None
    if values.ndim == 4:
        if args.record >= values.shape[0]:
            raise CliError(f"record {args.record} out of range for batch of {values.shape[0]}")
        values = values[args.record]
    if values.ndim != 3:
        raise CliError(f"{args.tensor}: expected a rank 3 or 4 tensor, got rank {values.ndim}")

    channel = args.channel
    if channel is None and values.shape[0] == 1:
        channel = 0
    if channel is not None:
        if not 0 <= channel < values.shape[0]:
            raise CliError(
                f"channel {channel} out of range for stack of {values.shape[0]}"
            )
        gray = np.clip(values[channel], 0.0, 1.0) * 255.0
        image = Image.fromarray(gray.round().astype(np.uint8), mode="L")
    else:
        height, width = values.shape[1:]
        rgb = np.zeros((height, width, 3), dtype=np.float64)
        for index, plane in enumerate(values):
            color = np.asarray(RENDER_PALETTE[index % len(RENDER_PALETTE)], dtype=np.float64)
            rgb = np.maximum(rgb, np.clip(plane, 0.0, 1.0)[:, :, None] * color)
        image = Image.fromarray(rgb.round().astype(np.uint8), mode="RGB")

    image.save(args.out)
    _log(f"rendered {args.tensor} -> {args.out}")
    return 0


# ------------------------------------------------------------- schedule --


def cmd_schedule(args) -> int:
    if args.lambda1 is not None:
        weights = models.WeightsModel(
            lambda1=args.lambda1,
            lambda2=args.lambda2 if args.lambda2 is not None else 0.0,
            decay_ratio=args.decay_ratio,
            decay_period=args.decay_period,
        )
    else:
        try:
            published = default_weights(
                Representation(args.repr or "lpm"), GroupScheme(args.scheme or "g1")
            )
        except ValueError as err:
            raise CliError(str(err)) from None
        weights = models.WeightsModel.from_core(published)
        if args.decay_ratio != 0.1 or args.decay_period != 20:
            weights = models.WeightsModel(
                lambda1=weights.lambda1,
                lambda2=weights.lambda2,
                decay_ratio=args.decay_ratio,
                decay_period=args.decay_period,
            )

    request = models.ScheduleRequest(weights=weights, epochs=args.epochs)
    if args.server:
        response = _remote_post(args.server, "/schedule", request, models.ScheduleResponse)
    else:
        try:
            response = handlers.schedule(request)
        except ValueError as err:
            raise CliError(str(err)) from None

    emit = _log if args.json_summary else print
    emit(f"{'epoch':>6}{'lambda1':>14}{'lambda2':>14}")
    for row in response.rows:
        emit(f"{row.epoch:>6}{row.lambda1:>14.6g}{row.lambda2:>14.6g}")
    _emit_summary(args, {
        "command": "schedule",
        "rows": [row.model_dump() for row in response.rows],
    })
    return 0


# ---------------------------------------------------------------- split --


def cmd_split(args) -> int:
    records = _load_records(args.annotations, args.format)
    fractions = _parse_float_list(args.fractions, "--fractions")
    if len(fractions) != 3:
        raise CliError("--fractions needs exactly three numbers (train, validation, test)")
    try:
        parts = data.split_dataset(records, tuple(fractions), args.seed)
    except ValueError as err:
        raise CliError(str(err)) from None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = ("train", "validation", "test")
    sizes = {}
    for name, part in zip(names, parts):
        data.write_annotations(part, out_dir / f"{name}.txt")
        sizes[name] = len(part)
        _log(f"{name}: {len(part)} records -> {out_dir / f'{name}.txt'}")
    _emit_summary(args, {"command": "split", "seed": args.seed, "sizes": sizes})
    return 0


# ---------------------------------------------------------------- serve --


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ----------------------------------------------------------------- main --


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--repr", choices=[r.value for r in Representation],
                        help="limb mask representation")
    parser.add_argument("--scheme", choices=[s.value for s in GroupScheme],
                        help="limb composition scheme")
    parser.add_argument("--sigma-ldm", type=float, dest="sigma_ldm",
                        help="rectangle half-width in map pixels")
    parser.add_argument("--sigma-lpm", type=float, dest="sigma_lpm",
                        help="soft-mask spread in map pixels")
    parser.add_argument("--sigma-kcm", type=float, dest="sigma_kcm",
                        help="keypoint Gaussian spread in map pixels")
    parser.add_argument("--lpm-distance", choices=["linear", "squared"], dest="lpm_distance",
                        help="soft-mask falloff exponent mode")
    parser.add_argument("--grid", help="map geometry WIDTHxHEIGHT:INPUT (default 46x46:368)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handmaps",
        description="Hand-structure ground-truth synthesis and PCK evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize ground-truth map tensors per record")
    p_synth.add_argument("--annotations", required=True, help="annotation file (or directory)")
    p_synth.add_argument("--format", default="canonical",
                         choices=[f.value for f in data.AnnotationFormat])
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--outputs", default="structure,keypoints",
                         help="comma list from {structure, keypoints}")
    _add_config_flags(p_synth)
    p_synth.add_argument("--jobs", type=int, default=1, help="parallel workers across records")
    p_synth.add_argument("--keep-going", action="store_true",
                         help="skip failing records instead of aborting")
    p_synth.add_argument("--server", help="run against a remote service URL")
    p_synth.add_argument("--json-summary", action="store_true")
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="PCK tables, curves and improvement rows")
    p_eval.add_argument("--preds", help="prediction annotations file or tensor directory")
    p_eval.add_argument("--gts", help="ground-truth annotations file")
    p_eval.add_argument("--pred-format", default="canonical", dest="pred_format",
                        choices=[f.value for f in data.AnnotationFormat])
    p_eval.add_argument("--gt-format", default="canonical", dest="gt_format",
                        choices=[f.value for f in data.AnnotationFormat])
    p_eval.add_argument("--values", help="direct curve values (skip pred/gt computation)")
    p_eval.add_argument("--threshold-list", dest="threshold_list",
                        help="comma-separated thresholds in (0, 1]")
    p_eval.add_argument("--preset", default="onehand10k",
                        choices=sorted(evaluation.THRESHOLD_PRESETS))
    p_eval.add_argument("--baseline", help="baseline curve values for the improvement row")
    p_eval.add_argument("--grid", help="decode geometry for tensor predictions")
    p_eval.add_argument("--curve-out", dest="curve_out", help="write threshold/value table")
    p_eval.add_argument("--plot-out", dest="plot_out", help="write curve plot image")
    p_eval.add_argument("--server", help="run against a remote service URL")
    p_eval.add_argument("--json-summary", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_render = sub.add_parser("render", help="rasterize a tensor stack to an image")
    p_render.add_argument("--tensor", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--channel", type=int, help="single channel as grayscale")
    p_render.add_argument("--record", type=int, default=0, help="record index for batch tensors")
    p_render.set_defaults(func=cmd_render)

    p_sched = sub.add_parser("schedule", help="print the decayed loss-weight table")
    p_sched.add_argument("--epochs", type=int, required=True)
    p_sched.add_argument("--lambda1", type=float)
    p_sched.add_argument("--lambda2", type=float)
    p_sched.add_argument("--decay-ratio", type=float, default=0.1, dest="decay_ratio")
    p_sched.add_argument("--decay-period", type=int, default=20, dest="decay_period")
    p_sched.add_argument("--repr", choices=[r.value for r in Representation],
                         help="use published weights for this representation")
    p_sched.add_argument("--scheme", choices=[s.value for s in GroupScheme])
    p_sched.add_argument("--server", help="run against a remote service URL")
    p_sched.add_argument("--json-summary", action="store_true")
    p_sched.set_defaults(func=cmd_schedule)

    p_split = sub.add_parser("split", help="deterministic train/validation/test partition")
    p_split.add_argument("--annotations", required=True)
    p_split.add_argument("--format", default="canonical",
                         choices=[f.value for f in data.AnnotationFormat])
    p_split.add_argument("--out-dir", required=True)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--fractions", default="0.8,0.1,0.1")
    p_split.add_argument("--json-summary", action="store_true")
    p_split.set_defaults(func=cmd_split)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8417)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        _log(f"error: {err}")
        return err.exit_code
    except (data.AnnotationError, data.TensorFormatError, ValueError) as err:
        _log(f"error: {err}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
