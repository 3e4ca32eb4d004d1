/**
 * Counter-based SplitMix64, bit-compatible with the engine's generator:
 *
 *   u64(seed, i) = mix64(seed + i * 0x9E3779B97F4A7C15)   for i = 1, 2, ...
 *
 * with the standard finalizer (xor-shift 30/27/31, multipliers
 * 0xBF58476D1CE4E5B9 and 0x94D4ECE84EB0B95D), all in wrapping 64-bit
 * arithmetic. Floats take the top 24 bits: (u >> 40) * 2^-24, exact in
 * float32. Deterministic mode of the stub backend rides on this stream.
 */

const MASK = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d4ece84eb0b95dn;

export function mix64(x: bigint): bigint {
  let z = x & MASK;
  z = ((z ^ (z >> 30n)) * MIX1) & MASK;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK;
  return z ^ (z >> 31n);
}

export function deriveSeed(seed: bigint, ...tags: bigint[]): bigint {
  let z = mix64((seed + GOLDEN) & MASK);
  for (const t of tags) {
    z = mix64((z ^ (t & MASK)) & MASK);
  }
  return z;
}

/** Fold a UTF-8 string into a 64-bit tag (FNV-1a), for keying streams. */
export function stringTag(s: string): bigint {
  let h = 0xcbf29ce484222325n;
  for (const byte of Buffer.from(s, "utf-8")) {
    h = ((h ^ BigInt(byte)) * 0x100000001b3n) & MASK;
  }
  return h;
}

export class CounterRng {
  readonly seed: bigint;
  private i = 0n;

  constructor(seed: bigint | number) {
    this.seed = BigInt(seed) & MASK;
  }

  nextU64(): bigint {
    this.i += 1n;
    return mix64((this.seed + this.i * GOLDEN) & MASK);
  }

  /** Uniform in [0, 1), exactly representable in float32. */
  nextF32(): number {
    return Math.fround(Number(this.nextU64() >> 40n) * 2 ** -24);
  }

  /** Uniform integer in the closed range [lo, hi]. */
  nextInt(lo: number, hi: number): number {
    if (hi < lo) throw new RangeError(`empty range [${lo}, ${hi}]`);
    return lo + Number(this.nextU64() % BigInt(hi - lo + 1));
  }

  fillF32(count: number): Float32Array {
    const out = new Float32Array(count);
    for (let k = 0; k < count; k++) out[k] = this.nextF32();
    return out;
  }

  fork(...tags: bigint[]): CounterRng {
    return new CounterRng(deriveSeed(this.seed, ...tags));
  }
}
