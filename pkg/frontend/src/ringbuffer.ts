/** Time-windowed sample buffer: keeps the trailing `windowSeconds` only. */

export interface Sample {
  t: number;
  value: number;
}

export class TimeSeriesBuffer {
  private samples: Sample[] = [];

  constructor(readonly windowSeconds: number) {
    if (!(windowSeconds > 0)) throw new Error("window must be > 0");
  }

  push(t: number, value: number): void {
    const last = this.samples[this.samples.length - 1];
    if (last !== undefined && t < last.t) {
      // time went backwards (service restart): start a fresh window
      this.samples = [];
    }
    this.samples.push({ t, value });
    const cutoff = t - this.windowSeconds;
    let drop = 0;
    while (drop < this.samples.length && this.samples[drop].t < cutoff) drop += 1;
    if (drop > 0) this.samples.splice(0, drop);
  }

  values(): readonly Sample[] {
    return this.samples;
  }

  latest(): Sample | undefined {
    return this.samples[this.samples.length - 1];
  }

  get length(): number {
    return this.samples.length;
  }
}
