export * from "./types.js";
export * from "./codec.js";
export { AlignmentError, averageSpan, tokensInSpan } from "./align.js";
export { MockEncoder, hashFloats } from "./mock.js";
export { extractManifest, parseManifest } from "./extract.js";
export { answer, applyReplacement, serve } from "./server.js";
