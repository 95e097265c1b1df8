// Pure geometry for the SVG trace charts. Values map into a padded
// plot box; nulls (missing AUC) break the polyline into segments.

export interface PlotBox {
  width: number;
  height: number;
  pad: number;
}

export interface Domain {
  min: number;
  max: number;
}

export function dataDomain(
  values: (number | null)[],
  fallback: Domain = { min: 0, max: 1 }
): Domain {
  const present = values.filter((v): v is number => v !== null);
  if (present.length === 0) return fallback;
  let min = Math.min(...present);
  let max = Math.max(...present);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const margin = (max - min) * 0.08;
  return { min: min - margin, max: max + margin };
}

export function xPosition(i: number, count: number, box: PlotBox): number {
  const inner = box.width - 2 * box.pad;
  if (count <= 1) return box.pad + inner / 2;
  return box.pad + (inner * i) / (count - 1);
}

export function yPosition(v: number, domain: Domain, box: PlotBox): number {
  const inner = box.height - 2 * box.pad;
  const t = (v - domain.min) / (domain.max - domain.min);
  return box.height - box.pad - t * inner;
}

// One "x,y x,y ..." string per run of consecutive non-null values.
export function polylineSegments(
  values: (number | null)[],
  domain: Domain,
  box: PlotBox
): string[] {
  const segments: string[] = [];
  let current: string[] = [];
  values.forEach((v, i) => {
    if (v === null) {
      if (current.length > 0) segments.push(current.join(" "));
      current = [];
      return;
    }
    const x = xPosition(i, values.length, box);
    const y = yPosition(v, domain, box);
    current.push(`${round2(x)},${round2(y)}`);
  });
  if (current.length > 0) segments.push(current.join(" "));
  return segments;
}

export function axisTicks(domain: Domain, count = 4): number[] {
  const ticks: number[] = [];
  for (let i = 0; i <= count; i += 1) {
    ticks.push(domain.min + ((domain.max - domain.min) * i) / count);
  }
  return ticks;
}

function round2(x: number): number {
  return Math.round(x * 100) / 100;
}
