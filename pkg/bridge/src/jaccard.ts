/**
 * Dependency-free token-overlap scorer used as the reference adapter.
 *
 * Tokenization mirrors the host's rule (lowercase, split on runs of
 * anything that is not a letter or digit, underscore splits too) so the
 * scores are comparable with the built-in ranker. That mirroring is a
 * protocol recommendation, not a requirement: external scorers are free
 * to tokenize however they like.
 */

export interface Scorer {
  name: string;
  embedDim: number | null;
  score(context: string, candidate: string): number;
}

const TOKEN_RE = /[\p{L}\p{N}]+/gu;

export function tokenize(text: string): string[] {
  return text.toLowerCase().match(TOKEN_RE) ?? [];
}

/** |tokens(a) ∩ tokens(b)| / |tokens(a) ∪ tokens(b)|; empty union scores 0. */
export function jaccardScore(context: string, candidate: string): number {
  const a = new Set(tokenize(context));
  const b = new Set(tokenize(candidate));
  let shared = 0;
  for (const token of a) {
    if (b.has(token)) {
      shared += 1;
    }
  }
  const union = a.size + b.size - shared;
  return union === 0 ? 0 : shared / union;
}

export const jaccardScorer: Scorer = {
  name: 'jaccard-ref',
  embedDim: null,
  score: jaccardScore,
};
