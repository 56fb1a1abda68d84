import { createInterface } from 'readline';

import { Scorer } from './jaccard';
import { handleLine } from './protocol';

/**
 * Serve the line protocol until stdin closes, then exit 0.
 *
 * Strictly sequential: each request is answered (and the response line
 * written) before the next line is looked at, so responses can never be
 * reordered relative to requests. Parallelism is the client's business;
 * it can spawn several bridge processes.
 */
export function serveStdio(scorer: Scorer): void {
  const rl = createInterface({ input: process.stdin, terminal: false });
  rl.on('line', (line) => {
    process.stdout.write(JSON.stringify(handleLine(scorer, line)) + '\n');
  });
  rl.on('close', () => {
    // let stdout drain naturally; no other handles keep the loop alive
    process.exitCode = 0;
  });
}
