/**
 * Fixed-capacity circular buffer for streaming series; appending past
 * capacity overwrites the oldest entry.
 */
export class RingBuffer<T> {
  private buf: (T | undefined)[];
  private head = 0;
  private count = 0;

  constructor(readonly capacity: number) {
    if (capacity <= 0) throw new Error("capacity must be positive");
    this.buf = new Array(capacity);
  }

  push(item: T): void {
    this.buf[this.head] = item;
    this.head = (this.head + 1) % this.capacity;
    if (this.count < this.capacity) this.count++;
  }

  get size(): number {
    return this.count;
  }

  get(i: number): T | undefined {
    if (i < 0 || i >= this.count) return undefined;
    return this.buf[(this.head - this.count + i + 2 * this.capacity) % this.capacity];
  }

  last(): T | undefined {
    return this.count ? this.get(this.count - 1) : undefined;
  }

  toArray(): T[] {
    const out: T[] = new Array(this.count);
    for (let i = 0; i < this.count; i++) out[i] = this.get(i) as T;
    return out;
  }

  clear(): void {
    this.head = 0;
    this.count = 0;
  }
}
