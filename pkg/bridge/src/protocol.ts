/**
 * Wire messages, one JSON object per UTF-8 line over the standard streams:
 *
 *   -> {"id": u64, "op": "hello"}
 *   <- {"id": u64, "name": string, "embed_dim": u32|null}
 *   -> {"id": u64, "op": "score", "context": string, "candidates": [string,...]}
 *   <- {"id": u64, "scores": [f64,...]}
 *   -> {"id": u64, "op": "embed", "texts": [string,...]}        (optional capability)
 *   <- {"id": u64, "vectors": [[f64,...],...]}
 *
 * Every response echoes the request id. A line that cannot be parsed far
 * enough to recover an id is answered with {"id": null, "error": string}
 * and the loop continues; the server never dies on bad input.
 */

import { Scorer } from './jaccard';

export interface HelloResponse {
  id: number;
  name: string;
  embed_dim: number | null;
}

export interface ScoreResponse {
  id: number;
  scores: number[];
}

export interface ErrorResponse {
  id: number | null;
  error: string;
}

export type BridgeResponse = HelloResponse | ScoreResponse | ErrorResponse;

function requestId(value: unknown): number | null {
  if (typeof value !== 'object' || value === null || Array.isArray(value)) {
    return null;
  }
  const id = (value as Record<string, unknown>).id;
  return typeof id === 'number' && Number.isInteger(id) && id >= 0 ? id : null;
}

/** Map one request line to one response object; never throws. */
export function handleLine(scorer: Scorer, line: string): BridgeResponse {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch (err) {
    return { id: null, error: `unparseable request line: ${(err as Error).message}` };
  }
  const id = requestId(parsed);
  if (id === null) {
    return { id: null, error: 'request id must be a nonnegative integer' };
  }
  const request = parsed as Record<string, unknown>;
  switch (request.op) {
    case 'hello':
      return { id, name: scorer.name, embed_dim: scorer.embedDim };
    case 'score': {
      const context = request.context;
      if (typeof context !== 'string') {
        return { id, error: 'score request needs a string context' };
      }
      const candidates = request.candidates;
      if (
        !Array.isArray(candidates) ||
        !candidates.every((c): c is string => typeof c === 'string')
      ) {
        return { id, error: 'score request needs an array of candidate strings' };
      }
      return { id, scores: candidates.map((c) => scorer.score(context, c)) };
    }
    case 'embed':
      return { id, error: `${scorer.name} does not implement the embed capability` };
    default:
      return { id, error: `unknown op ${JSON.stringify(request.op)}` };
  }
}
