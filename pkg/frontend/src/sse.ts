/** Incremental server-sent-events parser.
 *
 * Feed it raw text chunks in arrival order; it yields complete frames and
 * buffers partial ones across chunk boundaries.  Only the three fields the
 * service emits (id, event, data) are understood.
 */

export interface SseFrame {
  id: number | null;
  event: string;
  data: string;
}

export class SseParser {
  private buffer = "";

  /** Consume a chunk, returning every frame completed by it. */
  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const cut = this.buffer.indexOf("\n\n");
      if (cut < 0) break;
      const block = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      const frame = parseBlock(block);
      if (frame) frames.push(frame);
    }
    return frames;
  }
}

function parseBlock(block: string): SseFrame | null {
  let id: number | null = null;
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    const sep = line.indexOf(":");
    if (sep < 0) continue;
    const field = line.slice(0, sep);
    let value = line.slice(sep + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "id") {
      const parsed = Number.parseInt(value, 10);
      if (!Number.isNaN(parsed)) id = parsed;
    } else if (field === "event") {
      event = value;
    } else if (field === "data") {
      data.push(value);
    }
  }
  if (data.length === 0) return null;
  return { id, event, data: data.join("\n") };
}
