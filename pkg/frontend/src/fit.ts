/** Log-log least squares, mirroring the lab's order fit for annotation. */

export interface Fit {
  slope: number;
  intercept: number;
  r2: number;
}

export function loglogFit(x: number[], y: number[], floor = 1e-13): Fit {
  const lx: number[] = [];
  const ly: number[] = [];
  for (let i = 0; i < x.length; i++) {
    if (y[i] > floor) {
      lx.push(Math.log(x[i]));
      ly.push(Math.log(y[i]));
    }
  }
  const n = lx.length;
  if (n < 2) throw new Error("not enough samples above the floor to fit");
  const mx = lx.reduce((a, b) => a + b, 0) / n;
  const my = ly.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (lx[i] - mx) ** 2;
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) ** 2;
  }
  const slope = sxy / sxx;
  const intercept = my - slope * mx;
  let ssRes = 0;
  for (let i = 0; i < n; i++) {
    ssRes += (ly[i] - (slope * lx[i] + intercept)) ** 2;
  }
  const r2 = syy > 0 ? 1 - ssRes / syy : 0;
  return { slope, intercept, r2 };
}
