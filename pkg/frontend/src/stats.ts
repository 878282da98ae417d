/**
 * Statistics recomputed client-side from raw repetition rows.
 *
 * The UI performs no simulation arithmetic: every displayed number is
 * either fetched from the service or derived from fetched rows by the
 * formulas here. Quartiles use linear interpolation on (n - 1) * p
 * positions ("inclusive" method), as stated in the UI footer.
 */

export interface BoxStats {
  min: number;
  q1: number;
  median: number;
  q3: number;
  max: number;
}

/** Quantile of an ASCENDING-sorted array, inclusive linear interpolation. */
export function quantileSorted(sorted: number[], p: number): number {
  if (sorted.length === 0) throw new Error("quantile of empty list");
  if (p < 0 || p > 1) throw new Error(`p must be in [0, 1], got ${p}`);
  const pos = (sorted.length - 1) * p;
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  if (lo === hi) return sorted[lo];
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

export function median(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  return quantileSorted(sorted, 0.5);
}

export function boxStats(values: number[]): BoxStats {
  const sorted = [...values].sort((a, b) => a - b);
  return {
    min: sorted[0],
    q1: quantileSorted(sorted, 0.25),
    median: quantileSorted(sorted, 0.5),
    q3: quantileSorted(sorted, 0.75),
    max: sorted[sorted.length - 1],
  };
}

/** Display formatting: 6 significant digits, trailing zeros stripped. */
export function formatMetric(value: number): string {
  if (!Number.isFinite(value)) return String(value);
  if (value === 0) return "0";
  return String(Number(value.toPrecision(6)));
}
