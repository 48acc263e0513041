"""Regenerate the 50-record parity fixture and its expected core outputs.

Run from the repository root with the Python package installed:

    python3 client-ts/scripts/generate_fixture.py

Everything is seeded, so the files only change when the core changes.
"""

import json
from pathlib import Path

import numpy as np

from handmaps import (
    AnnotationRecord,
    GroupScheme,
    KeypointSet,
    LossWeights,
    Representation,
    SynthesisConfig,
    decode_keypoints,
    default_weights,
    pck,
    pose_loss,
    structure_loss,
    synthesize_keypoint_maps,
    synthesize_structure,
    total_loss,
    weights_at_epoch,
    write_annotations,
    default_topology,
)

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"
SEED = 777
RECORDS = 50
THRESHOLDS = [0.04, 0.06, 0.08, 0.10, 0.12]


def keypoints_json(kps: KeypointSet) -> dict:
    return {"points": [{"x": x, "y": y, "visible": v} for x, y, v in kps.as_tuples()]}


def main() -> None:
    rng = np.random.default_rng(SEED)
    topo = default_topology()
    cfg = SynthesisConfig()

    gts, preds, records = [], [], []
    for i in range(RECORDS):
        xy = rng.uniform(30.0, 330.0, (21, 2))
        visible = rng.random(21) < 0.92
        if visible.sum() < 2:
            visible[:2] = True
        gt = KeypointSet(xy, visible)
        pred = KeypointSet(xy + rng.normal(0.0, 10.0, (21, 2)), visible)
        gts.append(gt)
        preds.append(pred)
        records.append(AnnotationRecord(f"img{i:03d}", f"img{i:03d}.jpg", 640, 480, gt))

    scheme, representation = GroupScheme.G1AND6, Representation.LPM
    structure = [synthesize_structure(k, topo, scheme, representation, cfg) for k in gts]
    confidence = [synthesize_keypoint_maps(k, cfg) for k in gts]

    curve = pck(preds, gts, THRESHOLDS)
    expected_structure_loss = structure_loss([structure[1].values], structure[0].values)
    expected_pose_loss = pose_loss([confidence[1].values], confidence[0].values)
    weights = default_weights(representation, scheme)
    expected_total = total_loss(
        expected_pose_loss, expected_structure_loss, expected_structure_loss,
        weights, scheme,
    )
    schedule_weights = LossWeights(lambda1=0.1, lambda2=0.02)
    schedule_rows = [
        dict(zip(("epoch", "lambda1", "lambda2"),
                 (epoch, *weights_at_epoch(schedule_weights, epoch))))
        for epoch in range(45)
    ]
    decoded = decode_keypoints(confidence[0])

    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "records50.json").write_text(json.dumps({
        "seed": SEED,
        "config": {"representation": representation.value, "scheme": scheme.value},
        "thresholds": THRESHOLDS,
        "records": [keypoints_json(k) for k in gts],
        "predictions": [keypoints_json(k) for k in preds],
    }, indent=1))
    (FIXTURES / "expected.json").write_text(json.dumps({
        "pck": {
            "thresholds": list(curve.thresholds),
            "values": list(curve.values),
            "average": curve.average,
        },
        "structure_loss": expected_structure_loss,
        "pose_loss": expected_pose_loss,
        "total_loss": expected_total,
        "weights": {
            "lambda1": weights.lambda1, "lambda2": weights.lambda2,
            "decay_ratio": weights.decay_ratio, "decay_period": weights.decay_period,
        },
        "schedule": schedule_rows,
        "decoded_record0": keypoints_json(decoded),
    }, indent=1))
    write_annotations(records, FIXTURES / "records50.txt")
    print(f"wrote fixtures for {RECORDS} records to {FIXTURES}")


if __name__ == "__main__":
    main()
