/** The single reducer every UI update flows through.
 *
 * Applying the same event twice is a no-op (keyed by seq), so a resumed
 * stream that replays part of the backlog converges to the same view as an
 * uninterrupted one.
 */

import type { AgentEvent, Citation, NodeKind, NodeState, SessionView } from "./types.js";

export function emptyView(sessionId: string): SessionView {
  return {
    sessionId,
    question: null,
    nodes: {},
    edges: [],
    messages: [],
    streamingAnswer: "",
    finalAnswer: null,
    finalCitations: [],
    status: "idle",
    warnings: [],
    errors: [],
    lastSeq: 0,
    appliedSeqs: [],
  };
}

function asCitations(raw: unknown): Citation[] {
  if (!Array.isArray(raw)) return [];
  const out: Citation[] = [];
  for (const item of raw) {
    if (Array.isArray(item) && typeof item[0] === "string") {
      out.push([item[0], typeof item[1] === "string" ? item[1] : item[0]]);
    }
  }
  return out;
}

export function applyEvent(view: SessionView, event: AgentEvent): SessionView {
  if (view.appliedSeqs.includes(event.seq)) return view;
  const next: SessionView = {
    ...view,
    nodes: { ...view.nodes },
    edges: [...view.edges],
    messages: [...view.messages],
    warnings: [...view.warnings],
    errors: [...view.errors],
    finalCitations: [...view.finalCitations],
    appliedSeqs: [...view.appliedSeqs, event.seq],
    lastSeq: Math.max(view.lastSeq, event.seq),
  };
  const p = event.payload;
  switch (event.kind) {
    case "session_started": {
      next.question = String(p.question ?? "");
      next.status = "streaming";
      next.messages.push({ role: "user", text: next.question });
      break;
    }
    case "node_added": {
      const name = String(p.name ?? "");
      if (name && !(name in next.nodes)) {
        next.nodes[name] = {
          name,
          kind: (p.node_kind as NodeKind) ?? "search",
          state: (p.state as NodeState) ?? "pending",
          seq: Number(p.node_seq ?? 0),
          digest: String(p.digest ?? ""),
          answer: null,
          citations: [],
          error: null,
        };
      }
      break;
    }
    case "edge_added": {
      const from = String(p.from ?? "");
      const to = String(p.to ?? "");
      if (from && to && !next.edges.some(([a, b]) => a === from && b === to)) {
        next.edges.push([from, to]);
      }
      break;
    }
    case "node_state_changed": {
      const node = next.nodes[String(p.name ?? "")];
      if (node) {
        next.nodes[node.name] = {
          ...node,
          state: (p.state as NodeState) ?? node.state,
          error: typeof p.error === "string" ? p.error : node.error,
        };
      }
      break;
    }
    case "node_response": {
      const node = next.nodes[String(p.name ?? "")];
      if (node) {
        next.nodes[node.name] = {
          ...node,
          answer: String(p.answer ?? ""),
          citations: asCitations(p.citations),
        };
      }
      break;
    }
    case "final_answer_delta": {
      next.streamingAnswer = view.streamingAnswer + String(p.text ?? "");
      break;
    }
    case "final_answer_done": {
      next.finalAnswer = String(p.answer ?? "");
      next.finalCitations = asCitations(p.citations);
      next.messages.push({ role: "agent", text: next.finalAnswer });
      break;
    }
    case "warning": {
      next.warnings.push(String(p.message ?? ""));
      break;
    }
    case "error": {
      next.errors.push(String(p.message ?? ""));
      break;
    }
    case "session_done": {
      next.status = p.status === "done" ? "done" : "aborted";
      break;
    }
    case "planner_thought":
    case "code_parsed":
      break;
  }
  return next;
}

export function applyEvents(view: SessionView, events: AgentEvent[]): SessionView {
  let current = view;
  for (const event of events) current = applyEvent(current, event);
  return current;
}
