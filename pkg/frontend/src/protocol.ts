/**
 * Frame protocol of the integrator worker.
 *
 * Every frame is: u32 opcode (request) or status (response), u32 payload
 * byte length, payload. All integers and doubles are little-endian; array
 * payloads are raw contiguous float64 buffers so values cross the process
 * boundary bit-exactly.
 */

export const OP = {
  CREATE: 1,
  NOMINAL: 2,
  JACOBIAN: 3,
  REVERSE: 4,
  HESSIAN: 5,
  RESET: 6,
  SHUTDOWN: 7,
} as const;

export const HEADER_BYTES = 8;

export function encodeFrame(op: number, payload: Buffer): Buffer {
  const header = Buffer.allocUnsafe(HEADER_BYTES);
  header.writeUInt32LE(op, 0);
  header.writeUInt32LE(payload.length, 4);
  return Buffer.concat([header, payload]);
}

export function doublesToBuffer(...arrays: Float64Array[]): Buffer {
  const total = arrays.reduce((n, a) => n + a.length, 0);
  const out = Buffer.allocUnsafe(total * 8);
  let off = 0;
  for (const a of arrays) {
    for (let i = 0; i < a.length; i++) {
      out.writeDoubleLE(a[i], off);
      off += 8;
    }
  }
  return out;
}

export function bufferToDoubles(buf: Buffer): Float64Array {
  const out = new Float64Array(buf.length / 8);
  for (let i = 0; i < out.length; i++) {
    out[i] = buf.readDoubleLE(i * 8);
  }
  return out;
}

/** Incremental parser: feed chunks, emit complete (status, payload) frames. */
export class FrameReader {
  private pending: Buffer = Buffer.alloc(0);

  push(chunk: Buffer, onFrame: (status: number, payload: Buffer) => void): void {
    this.pending = this.pending.length ? Buffer.concat([this.pending, chunk]) : chunk;
    for (;;) {
      if (this.pending.length < HEADER_BYTES) return;
      const status = this.pending.readUInt32LE(0);
      const length = this.pending.readUInt32LE(4);
      if (this.pending.length < HEADER_BYTES + length) return;
      const payload = this.pending.subarray(HEADER_BYTES, HEADER_BYTES + length);
      this.pending = this.pending.subarray(HEADER_BYTES + length);
      onFrame(status, Buffer.from(payload));
    }
  }
}
