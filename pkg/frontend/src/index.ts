export { IntegratorHandle, BridgeError } from "./handle.js";
export type { SimConfig, NewtonConfig, Matrix } from "./handle.js";
export { OP, FrameReader, encodeFrame, doublesToBuffer, bufferToDoubles } from "./protocol.js";
