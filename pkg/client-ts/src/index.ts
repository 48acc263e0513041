export {
  HandmapsClient,
  type BatchSynthesisResult,
  type DistanceMode,
  type GridSpec,
  type GroupScheme,
  type Keypoint,
  type KeypointSet,
  type LossWeights,
  type OutputKind,
  type PckCurve,
  type Representation,
  type RunConfig,
  type ScheduleRow,
} from "./client.js";
export {
  decodeTensor,
  elementCount,
  encodeTensor,
  sliceFirstAxis,
  valueBytes,
  type Tensor,
} from "./tensor.js";
