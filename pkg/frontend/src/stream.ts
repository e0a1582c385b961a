/**
 * NDJSON subscription to the host's /stream endpoint with automatic
 * retry backoff. Works in browsers and in node >= 18 (fetch streams).
 */

import { UiState } from "./state.js";

export interface StreamHandle {
  stop(): void;
  done: Promise<void>;
}

export interface StreamOptions {
  /** called after each applied record (UI refresh hook) */
  onRecord?: () => void;
  onStateChange?: (state: string) => void;
  /** initial retry delay; doubles up to 10x */
  retryMs?: number;
  signal?: AbortSignal;
}

export function connectStream(
  endpoint: string,
  state: UiState,
  opts: StreamOptions = {},
): StreamHandle {
  const controller = new AbortController();
  let stopped = false;
  const retryBase = opts.retryMs ?? 500;

  const setConn = (c: "disconnected" | "connected" | "lagging") => {
    state.connection = c;
    opts.onStateChange?.(c);
  };

  const done = (async () => {
    let retry = retryBase;
    while (!stopped) {
      try {
        const resp = await fetch(endpoint, { signal: controller.signal });
        if (!resp.ok || !resp.body) throw new Error(`HTTP ${resp.status}`);
        setConn("connected");
        retry = retryBase;
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let tail = "";
        for (;;) {
          const { value, done: eof } = await reader.read();
          if (eof) break;
          tail += decoder.decode(value, { stream: true });
          let nl;
          while ((nl = tail.indexOf("\n")) >= 0) {
            const line = tail.slice(0, nl);
            tail = tail.slice(nl + 1);
            if (state.ingestLine(line) !== null) opts.onRecord?.();
          }
        }
      } catch (err) {
        if (stopped) break;
      }
      setConn("disconnected");
      if (stopped) break;
      await new Promise((r) => setTimeout(r, retry));
      retry = Math.min(retry * 2, retryBase * 10);
    }
  })();

  return {
    stop() {
      stopped = true;
      controller.abort();
    },
    done,
  };
}
