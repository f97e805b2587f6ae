import { describe, expect, it } from "vitest";

import { RawSSEEvent, SSEParser, streamEvents } from "../src/sse.js";

function frame(id: number, event: string, data: unknown): string {
  return `id: ${id}\nevent: ${event}\ndata: ${JSON.stringify(data)}\n\n`;
}

describe("SSE parser", () => {
  it("parses complete frames", () => {
    const parser = new SSEParser();
    const events = parser.push(frame(1, "ask_user", { question: "q" }));
    expect(events).toEqual([{ id: 1, event: "ask_user", data: '{"question":"q"}' }]);
  });

  it("handles frames split across chunks", () => {
    const parser = new SSEParser();
    const whole = frame(1, "done", { yaml: "x" });
    const cut = 10;
    expect(parser.push(whole.slice(0, cut))).toEqual([]);
    const events = parser.push(whole.slice(cut));
    expect(events).toHaveLength(1);
    expect(events[0].event).toBe("done");
  });

  it("handles several frames in one chunk", () => {
    const parser = new SSEParser();
    const events = parser.push(frame(1, "a", {}) + frame(2, "b", {}));
    expect(events.map((e) => e.id)).toEqual([1, 2]);
  });
});

function streamResponse(body: string): Response {
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      controller.enqueue(new TextEncoder().encode(body));
      controller.close();
    },
  });
  return new Response(stream, { status: 200 });
}

describe("streamEvents", () => {
  it("delivers events in order and stops at the terminal event", async () => {
    const body = frame(1, "ask_user", { question: "q" }) + frame(2, "done", { yaml: "y" });
    const seen: RawSSEEvent[] = [];
    const handle = streamEvents("http://svc/events", { onEvent: (e) => seen.push(e) }, async () =>
      streamResponse(body),
    );
    await handle.done;
    expect(seen.map((e) => e.event)).toEqual(["ask_user", "done"]);
  });

  it("reconnects with Last-Event-ID after a drop, losing nothing", async () => {
    const requests: Array<string | undefined> = [];
    let call = 0;
    const fetchImpl = async (_url: string | URL | Request, init?: RequestInit) => {
      const headers = init?.headers as Record<string, string> | undefined;
      requests.push(headers?.["Last-Event-ID"]);
      call += 1;
      if (call === 1) {
        // first connection dies after event 1 (no terminal event)
        return streamResponse(frame(1, "tool_event", { name: "t", phase: "call" }));
      }
      return streamResponse(frame(2, "done", { yaml: "y" }));
    };
    const seen: RawSSEEvent[] = [];
    const reconnects: number[] = [];
    const handle = streamEvents(
      "http://svc/events",
      { onEvent: (e) => seen.push(e), onReconnect: (id) => reconnects.push(id) },
      fetchImpl as typeof fetch,
    );
    await handle.done;
    expect(seen.map((e) => e.id)).toEqual([1, 2]);
    expect(reconnects).toEqual([1]);
    expect(requests).toEqual([undefined, "1"]);
  });
});
