/** Pure HTML rendering of a session view.
 *
 * Every function returns a string, so tests can assert on markup without a
 * DOM.  State classes are part of the contract: .node.state-pending (gray),
 * .state-running (pulsing blue), .state-done (green), .state-failed (red).
 */

import { CELL_H, CELL_W, layout } from "./layout.js";
import type { Citation, NodeView, SessionView } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function escapeAttr(text: string): string {
  return escapeHtml(text);
}

export function renderCitations(citations: Citation[]): string {
  if (citations.length === 0) return "";
  const items = citations
    .map(
      ([url, title]) =>
        `<li><a class="citation" href="${escapeAttr(url)}" target="_blank" rel="noreferrer">${escapeHtml(title || url)}</a></li>`,
    )
    .join("");
  return `<ul class="citations">${items}</ul>`;
}

export function renderGraph(view: SessionView, selected: string | null = null): string {
  const placed = layout(view);
  const lines = view.edges
    .map(([from, to]) => {
      const a = placed.nodes[from];
      const b = placed.nodes[to];
      if (!a || !b) return "";
      return `<line class="edge" x1="${a.x + CELL_W / 4}" y1="${a.y}" x2="${b.x - CELL_W / 4}" y2="${b.y}" />`;
    })
    .join("");
  const boxes = Object.values(view.nodes)
    .sort((a, b) => a.seq - b.seq)
    .map((node) => {
      const pos = placed.nodes[node.name];
      if (!pos) return "";
      const cls = `node state-${node.state}${node.name === selected ? " selected" : ""}`;
      return (
        `<g class="${cls}" data-node="${escapeAttr(node.name)}" transform="translate(${pos.x},${pos.y})">` +
        `<rect x="${-CELL_W / 4}" y="-18" width="${CELL_W / 2}" height="36" rx="8" />` +
        `<text text-anchor="middle" dy="5">${escapeHtml(node.name)}</text>` +
        `</g>`
      );
    })
    .join("");
  return (
    `<svg class="graph" viewBox="0 0 ${placed.width} ${placed.height}" ` +
    `width="${placed.width}" height="${placed.height}">${lines}${boxes}</svg>`
  );
}

export function renderInspector(node: NodeView | null): string {
  if (node === null) {
    return `<div class="inspector empty">Select a node to inspect it.</div>`;
  }
  const parts = [
    `<h3>${escapeHtml(node.name)} <span class="badge state-${node.state}">${node.state}</span></h3>`,
  ];
  if (node.answer !== null) {
    parts.push(`<p class="answer">${escapeHtml(node.answer)}</p>`);
  }
  if (node.error !== null) {
    parts.push(`<p class="node-error">${escapeHtml(node.error)}</p>`);
  }
  parts.push(renderCitations(node.citations));
  return `<div class="inspector" data-node="${escapeAttr(node.name)}">${parts.join("")}</div>`;
}

export function renderChat(view: SessionView): string {
  const entries = view.messages
    .map((entry) => `<div class="message ${entry.role}">${escapeHtml(entry.text)}</div>`)
    .join("");
  const streaming =
    view.finalAnswer === null && view.streamingAnswer
      ? `<div class="message agent streaming">${escapeHtml(view.streamingAnswer)}</div>`
      : "";
  const finalCites = view.finalAnswer !== null ? renderCitations(view.finalCitations) : "";
  return `<div class="chat">${entries}${streaming}${finalCites}</div>`;
}

export function renderStatus(view: SessionView, reconnecting = false): string {
  const label = reconnecting ? "reconnecting" : view.status;
  const errors = view.errors
    .map((message) => `<div class="error">${escapeHtml(message)}</div>`)
    .join("");
  return `<div class="status status-${escapeAttr(label)}">${escapeHtml(label)}</div>${errors}`;
}

export function renderSession(
  view: SessionView,
  selected: string | null = null,
  reconnecting = false,
): string {
  const node = selected !== null ? (view.nodes[selected] ?? null) : null;
  return (
    `<div class="session" data-session="${escapeAttr(view.sessionId)}">` +
    renderStatus(view, reconnecting) +
    renderChat(view) +
    renderGraph(view, selected) +
    renderInspector(node) +
    `</div>`
  );
}
