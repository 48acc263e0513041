/**
 * Typed HTTP client for the handmaps service.
 *
 * A thin veneer: no numeric logic lives here. Batch synthesis results
 * arrive in the binary tensor format and are exposed as Float32Array
 * views (row-major N x C x H x W) so a training framework can wrap them
 * without copying.
 */

import { Buffer } from "node:buffer";

import { decodeTensor, encodeTensor, Tensor } from "./tensor.js";

export type Representation = "ldm" | "lpm";
export type GroupScheme = "g1" | "g6" | "g1and6";
export type DistanceMode = "linear" | "squared";
export type OutputKind = "structure" | "keypoints";

export interface Keypoint {
  x: number;
  y: number;
  visible: boolean;
}

export interface KeypointSet {
  points: Keypoint[];
}

export interface GridSpec {
  width?: number;
  height?: number;
  input_size?: number;
}

export interface RunConfig {
  representation?: Representation;
  scheme?: GroupScheme;
  sigma_ldm?: number;
  sigma_lpm?: number;
  sigma_kcm?: number;
  lpm_distance_mode?: DistanceMode;
  grid?: GridSpec;
  lambda1?: number;
  lambda2?: number;
  decay_ratio?: number;
  decay_period?: number;
}

export interface BatchSynthesisResult {
  count: number;
  structure?: Tensor;
  keypoints?: Tensor;
}

export interface PckCurve {
  thresholds: number[];
  values: number[];
  average: number;
}

export interface LossWeights {
  lambda1: number;
  lambda2: number;
  decay_ratio: number;
  decay_period: number;
}

export interface ScheduleRow {
  epoch: number;
  lambda1: number;
  lambda2: number;
}

function tensorToBase64(tensor: Tensor): string {
  return Buffer.from(encodeTensor(tensor)).toString("base64");
}

export class HandmapsClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async request(path: string, body?: unknown): Promise<Response> {
    const response = await this.fetchImpl(this.url(path), body === undefined ? {} : {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const payload = (await response.json()) as { detail?: unknown };
        if (payload.detail !== undefined) {
          detail = typeof payload.detail === "string"
            ? payload.detail
            : JSON.stringify(payload.detail);
        }
      } catch {
        // no JSON body; keep the status line
      }
      throw new Error(detail);
    }
    return response;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    return (await this.request(path, body)).json() as Promise<T>;
  }

  async health(): Promise<{ status: string; version: string }> {
    return (await this.request("/health")).json() as Promise<{ status: string; version: string }>;
  }

  async topology(): Promise<{
    topology: { keypoint_count: number; limbs: [number, number][]; chains: number[][] };
    groups: Record<string, { name: string; limb_indices: number[] }[]>;
  }> {
    const reply = await this.request("/topology");
    return reply.json() as Promise<{
      topology: { keypoint_count: number; limbs: [number, number][]; chains: number[][] };
      groups: Record<string, { name: string; limb_indices: number[] }[]>;
    }>;
  }

  /**
   * Synthesize ground-truth stacks for a batch of annotated hands.
   *
   * Each requested kind comes back as one dense row-major
   * (records, channels, height, width) float32 tensor.
   */
  async batchSynthesize(
    records: KeypointSet[],
    config: RunConfig = {},
    outputs: OutputKind[] = ["structure", "keypoints"],
  ): Promise<BatchSynthesisResult> {
    const result: BatchSynthesisResult = { count: records.length };
    for (const kind of outputs) {
      const response = await this.request(
        `/synthesize/tensor?kind=${kind}`,
        { records, config, outputs: [kind] },
      );
      result[kind] = decodeTensor(await response.arrayBuffer());
    }
    return result;
  }

  /** Pooled PCK curve over matched prediction / ground-truth sets. */
  async batchPck(
    predictions: KeypointSet[],
    groundTruth: KeypointSet[],
    thresholds: number[],
  ): Promise<PckCurve> {
    return this.postJson("/evaluate/pck", {
      predictions,
      ground_truth: groundTruth,
      thresholds,
    });
  }

  async improvement(baselineAverage: number, newAverage: number): Promise<{
    absolute: number;
    relative: number;
  }> {
    return this.postJson("/evaluate/improvement", {
      baseline_average: baselineAverage,
      new_average: newAverage,
    });
  }

  async structureLoss(stages: Tensor[], target: Tensor): Promise<number> {
    const body = {
      predictions: stages.map((s) => ({ dims: [...s.dims], data_base64: tensorToBase64(s) })),
      target: { dims: [...target.dims], data_base64: tensorToBase64(target) },
    };
    const reply = await this.postJson<{ value: number }>("/loss/structure", body);
    return reply.value;
  }

  async poseLoss(stages: Tensor[], target: Tensor): Promise<number> {
    const body = {
      predictions: stages.map((s) => ({ dims: [...s.dims], data_base64: tensorToBase64(s) })),
      target: { dims: [...target.dims], data_base64: tensorToBase64(target) },
    };
    const reply = await this.postJson<{ value: number }>("/loss/pose", body);
    return reply.value;
  }

  async totalLoss(options: {
    pose: number;
    structureWhole: number;
    structureParts?: number;
    scheme: GroupScheme;
    lambda1: number;
    lambda2?: number;
  }): Promise<number> {
    const reply = await this.postJson<{ value: number }>("/loss/total", {
      pose: options.pose,
      structure_whole: options.structureWhole,
      structure_parts: options.structureParts ?? null,
      scheme: options.scheme,
      lambda1: options.lambda1,
      lambda2: options.lambda2 ?? 0,
    });
    return reply.value;
  }

  async defaultWeights(
    representation: Representation,
    scheme: GroupScheme,
  ): Promise<LossWeights> {
    return this.postJson("/loss/weights", { representation, scheme });
  }

  async schedule(weights: Partial<LossWeights> & { lambda1: number }, epochs: number): Promise<ScheduleRow[]> {
    const reply = await this.postJson<{ rows: ScheduleRow[] }>("/schedule", {
      weights: {
        lambda1: weights.lambda1,
        lambda2: weights.lambda2 ?? 0,
        decay_ratio: weights.decay_ratio ?? 0.1,
        decay_period: weights.decay_period ?? 20,
      },
      epochs,
    });
    return reply.rows;
  }

  /** Decode confidence-map tensors (rank 3 or 4) back into keypoints. */
  async decodeKeypoints(tensor: Tensor, grid: GridSpec = {}): Promise<KeypointSet[]> {
    const reply = await this.postJson<{ records: KeypointSet[] }>("/decode", {
      tensor: { dims: [...tensor.dims], data_base64: tensorToBase64(tensor) },
      grid: { width: 46, height: 46, input_size: 368, ...grid },
    });
    return reply.records;
  }
}
