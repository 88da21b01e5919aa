/** Wire and view-model types shared by the fold, layout, and renderer. */

export type EventKind =
  | "session_started"
  | "planner_thought"
  | "code_parsed"
  | "node_added"
  | "edge_added"
  | "node_state_changed"
  | "node_response"
  | "final_answer_delta"
  | "final_answer_done"
  | "warning"
  | "error"
  | "session_done";

export interface AgentEvent {
  seq: number;
  session_id: string;
  kind: EventKind;
  payload: Record<string, unknown>;
  ts: number;
}

export type NodeState = "pending" | "running" | "done" | "failed";
export type NodeKind = "start" | "search" | "end";

/** One citation as sent by the service: [url, title]. */
export type Citation = [string, string];

export interface NodeView {
  name: string;
  kind: NodeKind;
  state: NodeState;
  seq: number;
  digest: string;
  answer: string | null;
  citations: Citation[];
  error: string | null;
}

export interface ChatEntry {
  role: "user" | "agent" | "notice";
  text: string;
}

/** Pure view model: a fold over the received events, idempotent by seq. */
export interface SessionView {
  sessionId: string;
  question: string | null;
  nodes: Record<string, NodeView>;
  edges: Array<[string, string]>;
  messages: ChatEntry[];
  streamingAnswer: string;
  finalAnswer: string | null;
  finalCitations: Citation[];
  status: "idle" | "streaming" | "done" | "aborted";
  warnings: string[];
  errors: string[];
  lastSeq: number;
  appliedSeqs: number[];
}
