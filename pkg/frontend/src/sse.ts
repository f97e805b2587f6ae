// Minimal server-sent-events reader over fetch, with resume-by-event-id.
// EventSource would work in browsers, but a hand-rolled reader lets tests
// feed scripted streams and lets us pass the Last-Event-ID header on
// reconnect without query-string hacks.

export interface RawSSEEvent {
  id: number;
  event: string;
  data: string;
}

/** Incremental SSE frame parser; call push() per chunk, flush() at EOF. */
export class SSEParser {
  private buffer = "";

  push(chunk: string): RawSSEEvent[] {
    this.buffer += chunk;
    const events: RawSSEEvent[] = [];
    let sep: number;
    while ((sep = this.buffer.indexOf("\n\n")) >= 0) {
      const frame = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      const parsed = parseFrame(frame);
      if (parsed) events.push(parsed);
    }
    return events;
  }

  flush(): RawSSEEvent[] {
    const parsed = parseFrame(this.buffer);
    this.buffer = "";
    return parsed ? [parsed] : [];
  }
}

function parseFrame(frame: string): RawSSEEvent | null {
  let id = 0;
  let event = "message";
  const dataLines: string[] = [];
  for (const line of frame.split("\n")) {
    if (line.startsWith("id: ")) id = Number(line.slice(4));
    else if (line.startsWith("event: ")) event = line.slice(7);
    else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
  }
  if (dataLines.length === 0 && event === "message") return null;
  return { id, event, data: dataLines.join("\n") };
}

export interface StreamHandle {
  cancel(): void;
  done: Promise<void>;
}

export interface StreamCallbacks {
  onEvent(event: RawSSEEvent): void;
  /** Connection dropped before a terminal event; resume is automatic. */
  onReconnect?(lastEventId: number): void;
  onEnd?(): void;
}

const TERMINAL_EVENTS = new Set(["done", "failed"]);

/**
 * Stream a session's events; on connection loss, reconnects with the last
 * seen event id so no event is lost or duplicated.
 */
export function streamEvents(
  url: string,
  callbacks: StreamCallbacks,
  fetchImpl: typeof fetch = fetch,
  maxReconnects = 20,
): StreamHandle {
  let cancelled = false;
  let lastEventId = 0;

  const done = (async () => {
    let attempts = 0;
    while (!cancelled && attempts <= maxReconnects) {
      let sawTerminal = false;
      try {
        const headers: Record<string, string> =
          lastEventId > 0 ? { "Last-Event-ID": String(lastEventId) } : {};
        const response = await fetchImpl(url, { headers });
        if (!response.ok || !response.body) throw new Error(`SSE HTTP ${response.status}`);
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SSEParser();
        for (;;) {
          const { value, done: eof } = await reader.read();
          if (cancelled) {
            await reader.cancel();
            return;
          }
          const events = eof
            ? parser.flush()
            : parser.push(decoder.decode(value, { stream: true }));
          for (const event of events) {
            if (event.id > lastEventId) lastEventId = event.id;
            callbacks.onEvent(event);
            if (TERMINAL_EVENTS.has(event.event)) sawTerminal = true;
          }
          if (eof) break;
        }
      } catch {
        // fall through to reconnect
      }
      if (sawTerminal) break;
      attempts += 1;
      if (!cancelled && attempts <= maxReconnects) callbacks.onReconnect?.(lastEventId);
    }
    callbacks.onEnd?.();
  })();

  return {
    cancel() {
      cancelled = true;
    },
    done,
  };
}
