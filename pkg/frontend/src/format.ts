export function fmt(x: number | null | undefined, digits = 4): string {
  if (x === null || x === undefined) return "n/a";
  if (!Number.isFinite(x)) return String(x);
  return x.toFixed(digits);
}

export function fmtShort(x: number | null | undefined): string {
  return fmt(x, 3);
}

export function labelName(label: 0 | 1): string {
  return label === 0 ? "normal" : "abnormal";
}
