export function mean(values: number[]): number {
  if (values.length === 0) throw new Error("mean of an empty sample");
  return values.reduce((s, v) => s + v, 0) / values.length;
}

export function sampleStd(values: number[]): number {
  if (values.length < 2) throw new Error("need at least two values");
  const m = mean(values);
  const ss = values.reduce((s, v) => s + (v - m) * (v - m), 0);
  return Math.sqrt(ss / (values.length - 1));
}

export function standardError(values: number[]): number {
  return sampleStd(values) / Math.sqrt(values.length);
}

// Lanczos approximation, good to ~15 significant digits for x > 0.
const LANCZOS = [
  676.5203681218851, -1259.1392167224028, 771.32342877765313,
  -176.61502916214059, 12.507343278686905, -0.13857109526572012,
  9.9843695780195716e-6, 1.5056327351493116e-7,
];

export function logGamma(x: number): number {
  if (x < 0.5) {
    return Math.log(Math.PI / Math.sin(Math.PI * x)) - logGamma(1 - x);
  }
  x -= 1;
  let acc = 0.99999999999980993;
  for (let i = 0; i < LANCZOS.length; i++) {
    acc += LANCZOS[i] / (x + i + 1);
  }
  const t = x + LANCZOS.length - 0.5;
  return 0.5 * Math.log(2 * Math.PI) + (x + 0.5) * Math.log(t) - t + Math.log(acc);
}

// Continued fraction for the incomplete beta (modified Lentz scheme).
function betaContinuedFraction(x: number, a: number, b: number): number {
  const tiny = 1e-30;
  const qab = a + b;
  const qap = a + 1;
  const qam = a - 1;
  let c = 1;
  let d = 1 - (qab * x) / qap;
  if (Math.abs(d) < tiny) d = tiny;
  d = 1 / d;
  let h = d;
  for (let m = 1; m <= 300; m++) {
    const m2 = 2 * m;
    let aa = (m * (b - m) * x) / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (Math.abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (Math.abs(c) < tiny) c = tiny;
    d = 1 / d;
    h *= d * c;
    aa = (-(a + m) * (qab + m) * x) / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (Math.abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (Math.abs(c) < tiny) c = tiny;
    d = 1 / d;
    const del = d * c;
    h *= del;
    if (Math.abs(del - 1) < 3e-16) break;
  }
  return h;
}

export function regularizedIncompleteBeta(x: number, a: number, b: number): number {
  if (x < 0 || x > 1) throw new Error(`x must lie in [0, 1], got ${x}`);
  if (x === 0) return 0;
  if (x === 1) return 1;
  const front = Math.exp(
    logGamma(a + b) - logGamma(a) - logGamma(b) + a * Math.log(x) + b * Math.log(1 - x)
  );
  // Use the symmetry relation where the continued fraction converges fastest.
  if (x < (a + 1) / (a + b + 2)) {
    return (front * betaContinuedFraction(x, a, b)) / a;
  }
  return 1 - (front * betaContinuedFraction(1 - x, b, a)) / b;
}

export function tCdf(t: number, df: number): number {
  if (df <= 0) throw new Error("degrees of freedom must be positive");
  if (t === 0) return 0.5;
  const x = df / (df + t * t);
  const tail = 0.5 * regularizedIncompleteBeta(x, df / 2, 0.5);
  return t > 0 ? 1 - tail : tail;
}

/** One-sided paired t-test p-value for mean(differences) > 0. */
export function pairedOneSidedPValue(differences: number[]): number {
  if (differences.length < 2) throw new Error("need at least two paired differences");
  const m = mean(differences);
  const sd = sampleStd(differences);
  if (sd === 0) return m > 0 ? 0 : 1;
  const tstat = m / (sd / Math.sqrt(differences.length));
  return tCdf(-tstat, differences.length - 1);
}
