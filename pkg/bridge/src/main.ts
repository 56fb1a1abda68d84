import { jaccardScorer } from './jaccard';
import { serveStdio } from './server';

serveStdio(jaccardScorer);
