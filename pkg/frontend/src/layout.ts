/** Layered left-to-right layout for the thought graph.
 *
 * Ranks are longest-path depths from the start node, so a node always sits
 * to the right of everything it depends on; rows within a rank follow node
 * creation order.  Suits the shallow DAGs sessions produce better than a
 * force-directed layout would.
 */

import type { SessionView } from "./types.js";

export interface PlacedNode {
  name: string;
  rank: number;
  row: number;
  x: number;
  y: number;
}

export interface Layout {
  nodes: Record<string, PlacedNode>;
  width: number;
  height: number;
}

export const CELL_W = 170;
export const CELL_H = 70;

export function ranks(view: SessionView): Record<string, number> {
  const names = Object.keys(view.nodes);
  const preds: Record<string, string[]> = {};
  for (const name of names) preds[name] = [];
  for (const [from, to] of view.edges) {
    if (preds[to] && names.includes(from)) preds[to].push(from);
  }
  const memo: Record<string, number> = {};
  const visiting = new Set<string>();
  const depth = (name: string): number => {
    const known = memo[name];
    if (known !== undefined) return known;
    if (visiting.has(name)) return 0; // defensive: the service never sends cycles
    visiting.add(name);
    const parents = preds[name] ?? [];
    const value = parents.length === 0 ? 0 : 1 + Math.max(...parents.map(depth));
    visiting.delete(name);
    memo[name] = value;
    return value;
  };
  for (const name of names) depth(name);
  return memo;
}

export function layout(view: SessionView): Layout {
  const rankOf = ranks(view);
  const ordered = Object.values(view.nodes).sort((a, b) => a.seq - b.seq);
  const rowCounters: Record<number, number> = {};
  const placed: Record<string, PlacedNode> = {};
  let maxRank = 0;
  let maxRow = 0;
  for (const node of ordered) {
    const rank = rankOf[node.name] ?? 0;
    const row = rowCounters[rank] ?? 0;
    rowCounters[rank] = row + 1;
    placed[node.name] = {
      name: node.name,
      rank,
      row,
      x: rank * CELL_W + CELL_W / 2,
      y: row * CELL_H + CELL_H / 2,
    };
    maxRank = Math.max(maxRank, rank);
    maxRow = Math.max(maxRow, row);
  }
  return {
    nodes: placed,
    width: (maxRank + 1) * CELL_W,
    height: (maxRow + 1) * CELL_H,
  };
}
