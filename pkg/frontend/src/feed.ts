// Live event feed over the service's server-sent event stream.
//
// One fetch-streaming code path runs in both the browser and node. The
// feed tracks the last delivered sequence number, drops duplicates after a
// reconnect, resubscribes from the last seq on gaps or connection loss
// (exponential backoff), and falls back to bounded polling reads when the
// streaming connection cannot be held open.

import type { CampaignEvent } from './types.js';

export type FetchLike = typeof fetch;

export interface FeedOptions {
  baseUrl: string;
  fetchImpl?: FetchLike;
  onEvent: (event: CampaignEvent) => void;
  onStatus?: (status: FeedStatus) => void;
  backoffMs?: number[];
  pollIntervalMs?: number;
  /** consecutive failed stream connections before falling back to polling */
  streamFailureLimit?: number;
}

export type FeedStatus = 'connecting' | 'live' | 'polling' | 'reconnecting' | 'stopped';

// ---------------------------------------------------------------------------
// SSE wire parsing
// ---------------------------------------------------------------------------

/** Incremental parser for text/event-stream bodies: feed chunks, get data lines. */
export class SseParser {
  private buffer = '';

  push(chunk: string): string[] {
    this.buffer += chunk;
    const out: string[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf('\n\n')) >= 0) {
      const block = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 2);
      for (const line of block.split('\n')) {
        if (line.startsWith('data: ')) out.push(line.slice('data: '.length));
      }
    }
    return out;
  }
}

export async function* readSse(
  body: ReadableStream<Uint8Array>,
  signal?: AbortSignal,
): AsyncGenerator<string> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    while (true) {
      if (signal?.aborted) return;
      const { done, value } = await reader.read();
      if (done) return;
      for (const data of parser.push(decoder.decode(value, { stream: true }))) {
        yield data;
      }
    }
  } finally {
    reader.releaseLock();
  }
}

// ---------------------------------------------------------------------------
// Feed
// ---------------------------------------------------------------------------

export class EventFeed {
  lastSeq = 0;
  status: FeedStatus = 'stopped';

  private readonly opts: Required<Pick<FeedOptions, 'baseUrl' | 'onEvent'>> & FeedOptions;
  private readonly fetchImpl: FetchLike;
  private controller: AbortController | null = null;
  private stopped = true;
  private attempt = 0;
  private loop: Promise<void> | null = null;

  constructor(opts: FeedOptions) {
    this.opts = opts;
    this.fetchImpl = opts.fetchImpl ?? fetch;
  }

  start(fromSeq = 0): void {
    this.lastSeq = fromSeq;
    this.stopped = false;
    this.loop = this.run();
  }

  async stop(): Promise<void> {
    this.stopped = true;
    this.controller?.abort();
    this.setStatus('stopped');
    try {
      await this.loop;
    } catch {
      // the aborted stream may reject; that is the expected shutdown path
    }
  }

  /** Drop the current connection; the run loop resubscribes from lastSeq. */
  forceReconnect(): void {
    this.controller?.abort();
  }

  private setStatus(status: FeedStatus): void {
    this.status = status;
    this.opts.onStatus?.(status);
  }

  private deliver(raw: string): void {
    const event = JSON.parse(raw) as CampaignEvent;
    if (event.seq <= this.lastSeq) return; // duplicate after reconnect
    if (event.seq > this.lastSeq + 1) {
      // gap: abort and let the loop resubscribe from lastSeq
      throw new FeedGapError(this.lastSeq, event.seq);
    }
    this.lastSeq = event.seq;
    this.opts.onEvent(event);
  }

  private async run(): Promise<void> {
    const failureLimit = this.opts.streamFailureLimit ?? 3;
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        this.setStatus(this.attempt === 0 ? 'connecting' : 'reconnecting');
        const url = `${this.opts.baseUrl}/api/v1/events?since=${this.lastSeq}`;
        const res = await this.fetchImpl(url, { signal: this.controller.signal });
        if (!res.ok || !res.body) throw new Error(`event stream HTTP ${res.status}`);
        this.setStatus('live');
        this.attempt = 0;
        for await (const data of readSse(res.body, this.controller.signal)) {
          this.deliver(data);
        }
      } catch (err) {
        if (this.stopped) return;
        if (!(err instanceof FeedGapError)) {
          this.attempt += 1;
        }
      }
      if (this.stopped) return;
      if (this.attempt >= failureLimit) {
        await this.pollLoop();
        // one more failed stream attempt drops straight back to polling
        this.attempt = Math.max(failureLimit - 1, 0);
      }
      await this.backoff();
    }
  }

  /** Bounded polling reads while the streaming connection cannot be held. */
  private async pollLoop(cycles = 10): Promise<void> {
    const interval = this.opts.pollIntervalMs ?? 1000;
    for (let i = 0; i < cycles && !this.stopped; i += 1) {
      try {
        const res = await this.fetchImpl(`${this.opts.baseUrl}/api/v1/state`);
        if (res.ok) {
          const doc = (await res.json()) as { seq: number };
          await this.pollOnce(doc.seq);
          this.setStatus('polling');
        }
      } catch {
        // service still unreachable; keep polling until the cycle budget
        // runs out, then the caller retries the stream
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  private async backoff(): Promise<void> {
    const schedule = this.opts.backoffMs ?? [100, 300, 1000, 3000];
    const wait = schedule[Math.min(this.attempt, schedule.length - 1)] ?? 1000;
    // always yield a macrotask: a stream that ends immediately must not
    // turn the reconnect loop into a microtask spin that starves timers
    await new Promise((resolve) => setTimeout(resolve, wait));
  }

  /**
   * Polling fallback: one bounded read that returns as soon as the backlog
   * up to `targetSeq` has been served. Usable when a held-open stream is
   * not (proxies, test harnesses).
   */
  async pollOnce(targetSeq: number): Promise<void> {
    if (targetSeq <= this.lastSeq) return;
    const limit = targetSeq - this.lastSeq;
    const url = `${this.opts.baseUrl}/api/v1/events?since=${this.lastSeq}&limit=${limit}`;
    const res = await this.fetchImpl(url);
    if (!res.ok || !res.body) throw new Error(`event poll HTTP ${res.status}`);
    this.setStatus('polling');
    for await (const data of readSse(res.body)) {
      this.deliver(data);
    }
  }
}

export class FeedGapError extends Error {
  constructor(
    readonly lastSeq: number,
    readonly gotSeq: number,
  ) {
    super(`event gap: have ${lastSeq}, received ${gotSeq}`);
  }
}
