/**
 * Codec for the service's binary tensor format.
 *
 * Layout (integers little-endian): magic "NSRM" | u32 version=1 |
 * u32 dtype (1 = float32) | u32 rank | u32 dims[rank] | row-major
 * little-endian float32 payload.
 *
 * The payload offset is always 4-byte aligned, so decoding returns a
 * Float32Array view over the incoming buffer without copying, ready to be
 * handed to a training framework.
 */

const MAGIC = [0x4e, 0x53, 0x52, 0x4d]; // "NSRM"
const VERSION = 1;
const DTYPE_FLOAT32 = 1;
const FIXED_HEADER_BYTES = 16;

const LITTLE_ENDIAN_HOST = (() => {
  const probe = new Uint8Array(new Uint32Array([1]).buffer);
  return probe[0] === 1;
})();

export interface Tensor {
  readonly dims: readonly number[];
  /** Row-major values; a view into the decoded buffer when possible. */
  readonly data: Float32Array;
}

export function elementCount(dims: readonly number[]): number {
  return dims.reduce((total, dim) => total * dim, 1);
}

/** Decode a binary tensor blob; zero-copy when the payload is aligned. */
export function decodeTensor(source: ArrayBuffer | Uint8Array): Tensor {
  if (!LITTLE_ENDIAN_HOST) {
    throw new Error("big-endian hosts are not supported by the zero-copy decoder");
  }
  const bytes = source instanceof Uint8Array ? source : new Uint8Array(source);
  if (bytes.byteLength < FIXED_HEADER_BYTES) {
    throw new Error("tensor data is shorter than the fixed header");
  }
  for (let i = 0; i < 4; i++) {
    if (bytes[i] !== MAGIC[i]) {
      throw new Error("bad tensor magic");
    }
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const version = view.getUint32(4, true);
  if (version !== VERSION) {
    throw new Error(`unsupported tensor version ${version}`);
  }
  const dtype = view.getUint32(8, true);
  if (dtype !== DTYPE_FLOAT32) {
    throw new Error(`unsupported tensor dtype code ${dtype}`);
  }
  const rank = view.getUint32(12, true);
  if (bytes.byteLength < FIXED_HEADER_BYTES + 4 * rank) {
    throw new Error("truncated tensor dimension list");
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(view.getUint32(FIXED_HEADER_BYTES + 4 * i, true));
  }
  const offset = FIXED_HEADER_BYTES + 4 * rank;
  const count = elementCount(dims);
  if (bytes.byteLength - offset !== 4 * count) {
    throw new Error(
      `tensor payload is ${bytes.byteLength - offset} bytes, expected ${4 * count}`,
    );
  }
  const byteOffset = bytes.byteOffset + offset;
  const data =
    byteOffset % 4 === 0
      ? new Float32Array(bytes.buffer, byteOffset, count)
      : new Float32Array(bytes.buffer.slice(byteOffset, byteOffset + 4 * count));
  return { dims, data };
}

/** Serialize a tensor into the binary format. */
export function encodeTensor(tensor: Tensor): Uint8Array {
  const { dims, data } = tensor;
  if (elementCount(dims) !== data.length) {
    throw new Error(`dims ${dims.join("x")} do not match ${data.length} values`);
  }
  const out = new Uint8Array(FIXED_HEADER_BYTES + 4 * dims.length + 4 * data.length);
  out.set(MAGIC, 0);
  const view = new DataView(out.buffer);
  view.setUint32(4, VERSION, true);
  view.setUint32(8, DTYPE_FLOAT32, true);
  view.setUint32(12, dims.length, true);
  dims.forEach((dim, i) => view.setUint32(FIXED_HEADER_BYTES + 4 * i, dim, true));
  out.set(new Uint8Array(data.buffer, data.byteOffset, data.byteLength),
          FIXED_HEADER_BYTES + 4 * dims.length);
  return out;
}

/** View of one leading-axis entry (e.g. one record of an N x C x H x W batch). */
export function sliceFirstAxis(tensor: Tensor, index: number): Tensor {
  if (tensor.dims.length === 0) {
    throw new Error("cannot slice a rank-0 tensor");
  }
  const [first, ...rest] = tensor.dims;
  if (index < 0 || index >= first) {
    throw new Error(`index ${index} out of range for leading axis of ${first}`);
  }
  const stride = elementCount(rest);
  return { dims: rest, data: tensor.data.subarray(index * stride, (index + 1) * stride) };
}

/** Raw bytes of a tensor's values (no header). */
export function valueBytes(tensor: Tensor): Uint8Array {
  return new Uint8Array(
    tensor.data.buffer,
    tensor.data.byteOffset,
    tensor.data.byteLength,
  );
}
