/**
 * Parity suite: every client result must equal the core's own output,
 * bit for bit for tensors and exactly for JSON-carried numbers.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, inject, it } from "vitest";

import {
  HandmapsClient,
  decodeTensor,
  sliceFirstAxis,
  valueBytes,
  type BatchSynthesisResult,
  type KeypointSet,
  type RunConfig,
} from "../src/index";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(readFileSync(join(here, "fixtures", "records50.json"), "utf8")) as {
  config: RunConfig;
  thresholds: number[];
  records: KeypointSet[];
  predictions: KeypointSet[];
};
const expected = JSON.parse(readFileSync(join(here, "fixtures", "expected.json"), "utf8"));

const client = new HandmapsClient(inject("serverUrl"));

describe("batch synthesis parity", () => {
  let batch: BatchSynthesisResult;
  let cliDir: string;

  beforeAll(async () => {
    batch = await client.batchSynthesize(fixture.records, fixture.config);
    cliDir = mkdtempSync(join(tmpdir(), "handmaps-parity-"));
    execFileSync("python3", [
      "-m", "handmaps.cli", "synth",
      "--annotations", join(here, "fixtures", "records50.txt"),
      "--out-dir", cliDir,
      "--scheme", String(fixture.config.scheme),
      "--repr", String(fixture.config.representation),
    ], { stdio: "ignore" });
  });

  afterAll(() => {
    rmSync(cliDir, { recursive: true, force: true });
  });

  it("returns dense row-major batches of the right shape", () => {
    expect(batch.count).toBe(50);
    expect(batch.structure?.dims).toEqual([50, 7, 46, 46]);
    expect(batch.keypoints?.dims).toEqual([50, 21, 46, 46]);
  });

  it("matches the command-line synthesis output bit for bit", () => {
    for (let i = 0; i < 50; i++) {
      const id = `img${String(i).padStart(3, "0")}`;
      for (const [kind, tensor] of [
        ["structure", batch.structure!],
        ["keypoints", batch.keypoints!],
      ] as const) {
        const fromFile = decodeTensor(readFileSync(join(cliDir, `${id}.${kind}.nsrm`)));
        const slice = sliceFirstAxis(tensor, i);
        expect(fromFile.dims).toEqual(slice.dims);
        expect(
          Buffer.compare(Buffer.from(valueBytes(fromFile)), Buffer.from(valueBytes(slice))),
        ).toBe(0);
      }
    }
  });

  it("decodes keypoints exactly as the core does", async () => {
    const decoded = await client.decodeKeypoints(sliceFirstAxis(batch.keypoints!, 0));
    expect(decoded).toHaveLength(1);
    expect(decoded[0]).toEqual(expected.decoded_record0);
  });

  it("handles an empty batch without error", async () => {
    const empty = await client.batchSynthesize([], fixture.config);
    expect(empty.count).toBe(0);
    expect(empty.structure?.dims).toEqual([0, 7, 46, 46]);
    expect(empty.structure?.data.length).toBe(0);
  });

  it("surfaces validation errors with the core's message", async () => {
    await expect(
      client.batchSynthesize([{ points: [{ x: 1, y: 2, visible: true }] }], fixture.config),
    ).rejects.toThrow(/record 0: expected 21 keypoints/);
  });
});

describe("evaluation and loss parity", () => {
  it("reproduces the core PCK curve exactly", async () => {
    const curve = await client.batchPck(
      fixture.predictions, fixture.records, fixture.thresholds,
    );
    expect(curve.thresholds).toEqual(expected.pck.thresholds);
    expect(curve.values).toEqual(expected.pck.values);
    expect(curve.average).toBe(expected.pck.average);
  });

  it("reproduces the core loss values exactly", async () => {
    const batch = await client.batchSynthesize(
      fixture.records.slice(0, 2), fixture.config,
    );
    const structureTarget = sliceFirstAxis(batch.structure!, 0);
    const structureStage = sliceFirstAxis(batch.structure!, 1);
    const poseTarget = sliceFirstAxis(batch.keypoints!, 0);
    const poseStage = sliceFirstAxis(batch.keypoints!, 1);

    const structureLoss = await client.structureLoss([structureStage], structureTarget);
    const poseLoss = await client.poseLoss([poseStage], poseTarget);
    expect(structureLoss).toBe(expected.structure_loss);
    expect(poseLoss).toBe(expected.pose_loss);

    const weights = await client.defaultWeights("lpm", "g1and6");
    expect(weights).toEqual(expected.weights);

    const total = await client.totalLoss({
      pose: poseLoss,
      structureWhole: structureLoss,
      structureParts: structureLoss,
      scheme: "g1and6",
      lambda1: weights.lambda1,
      lambda2: weights.lambda2,
    });
    expect(total).toBe(expected.total_loss);
  });

  it("reproduces the decayed weight schedule exactly", async () => {
    const rows = await client.schedule({ lambda1: 0.1, lambda2: 0.02 }, 45);
    expect(rows).toEqual(expected.schedule);
  });

  it("reports the canonical topology", async () => {
    const info = await client.topology();
    expect(info.topology.keypoint_count).toBe(21);
    expect(info.topology.limbs).toHaveLength(20);
    expect(info.groups.g1and6).toHaveLength(7);
  });
});
