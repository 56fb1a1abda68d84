import { describe, expect, it } from 'vitest';

import { jaccardScorer } from '../src/jaccard';
import { handleLine } from '../src/protocol';

const handle = (line: string) => handleLine(jaccardScorer, line);

describe('hello', () => {
  it('echoes the id and reports the scorer', () => {
    expect(handle('{"op": "hello", "id": 0}')).toEqual({
      id: 0,
      name: 'jaccard-ref',
      embed_dim: null,
    });
  });
});

describe('score', () => {
  it('returns one score per candidate, in order', () => {
    expect(handle(JSON.stringify({
      op: 'score',
      id: 3,
      context: 'a b',
      candidates: ['a b', 'c', 'b c'],
    }))).toEqual({ id: 3, scores: [1, 0, 1 / 3] });
  });

  it('accepts an empty candidate list', () => {
    expect(handle(JSON.stringify({
      op: 'score',
      id: 4,
      context: 'a',
      candidates: [],
    }))).toEqual({ id: 4, scores: [] });
  });

  it('rejects a non-array candidates field with the id echoed', () => {
    const reply = handle('{"op": "score", "id": 5, "context": "a", "candidates": "a"}');
    expect(reply.id).toBe(5);
    expect(reply).toHaveProperty('error');
  });

  it('rejects non-string candidate elements', () => {
    const reply = handle('{"op": "score", "id": 6, "context": "a", "candidates": [1]}');
    expect(reply.id).toBe(6);
    expect(reply).toHaveProperty('error');
  });

  it('rejects a missing context', () => {
    const reply = handle('{"op": "score", "id": 7, "candidates": ["a"]}');
    expect(reply.id).toBe(7);
    expect(reply).toHaveProperty('error');
  });
});

describe('malformed input', () => {
  it('answers unparseable lines with a null id', () => {
    const reply = handle('this is not json');
    expect(reply.id).toBeNull();
    expect(reply).toHaveProperty('error');
  });

  it('answers non-object json with a null id', () => {
    expect(handle('42').id).toBeNull();
    expect(handle('[1, 2]').id).toBeNull();
    expect(handle('""').id).toBeNull();
  });

  it('answers a blank line with a null id', () => {
    expect(handle('').id).toBeNull();
  });

  it('rejects missing or malformed ids', () => {
    expect(handle('{"op": "hello"}').id).toBeNull();
    expect(handle('{"op": "hello", "id": -1}').id).toBeNull();
    expect(handle('{"op": "hello", "id": 1.5}').id).toBeNull();
    expect(handle('{"op": "hello", "id": "zero"}').id).toBeNull();
  });
});

describe('unsupported operations', () => {
  it('declines embed but keeps the id', () => {
    const reply = handle('{"op": "embed", "id": 8, "texts": ["a"]}');
    expect(reply.id).toBe(8);
    expect(reply).toHaveProperty('error');
  });

  it('declines unknown ops but keeps the id', () => {
    const reply = handle('{"op": "rerank", "id": 9}');
    expect(reply.id).toBe(9);
    expect(reply).toHaveProperty('error');
  });

  it('never throws on arbitrary field soup', () => {
    const reply = handle('{"id": 10, "op": {"nested": true}, "candidates": null}');
    expect(reply.id).toBe(10);
    expect(reply).toHaveProperty('error');
  });
});
