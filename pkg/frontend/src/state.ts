import type { Label, LabelAck, QueryCard, QueryPayload } from "./types";

// Labeling view state. Marks move through two tiers: `optimistic` while a
// POST is in flight, `confirmed` once the server acked (or reported the
// label back in a query payload). Rollback on rejection only drops the
// optimistic tier, so an earlier confirmed label survives a failed relabel.

export interface LabelingState {
  cards: QueryCard[];
  confirmed: Record<number, Label>;
  optimistic: Record<number, Label>;
  labelsReceived: number;
  readyToAdvance: boolean;
  focus: number | null;
}

export function emptyState(): LabelingState {
  return {
    cards: [],
    confirmed: {},
    optimistic: {},
    labelsReceived: 0,
    readyToAdvance: false,
    focus: null,
  };
}

// Server payload is split into pending/completed; the view wants one list.
// Index order keeps cards stable across relabels and reloads.
export function fromQueryPayload(payload: QueryPayload): LabelingState {
  const cards = [...payload.pending, ...payload.completed].sort(
    (a, b) => a.index - b.index
  );
  const confirmed: Record<number, Label> = {};
  for (const card of payload.completed) {
    if (card.label !== undefined) confirmed[card.index] = card.label;
  }
  return {
    cards,
    confirmed,
    optimistic: {},
    labelsReceived: Object.keys(confirmed).length,
    readyToAdvance: payload.ready_to_advance,
    focus: cards.length > 0 ? cards[0]!.index : null,
  };
}

export function effectiveLabel(
  state: LabelingState,
  index: number
): Label | undefined {
  return state.optimistic[index] ?? state.confirmed[index];
}

export function unlabeledCount(state: LabelingState): number {
  return state.cards.filter((c) => effectiveLabel(state, c.index) === undefined)
    .length;
}

export type Action =
  | { kind: "loaded"; payload: QueryPayload }
  | { kind: "mark"; index: number; label: Label }
  | { kind: "acked"; ack: LabelAck }
  | { kind: "rejected"; index: number }
  | { kind: "focus"; index: number | null }
  | { kind: "focus-move"; step: 1 | -1 };

export function reduce(state: LabelingState, action: Action): LabelingState {
  switch (action.kind) {
    case "loaded":
      return fromQueryPayload(action.payload);
    case "mark": {
      if (!state.cards.some((c) => c.index === action.index)) return state;
      return {
        ...state,
        optimistic: { ...state.optimistic, [action.index]: action.label },
        focus: nextUnlabeled(state, action.index),
      };
    }
    case "acked": {
      const optimistic = { ...state.optimistic };
      delete optimistic[action.ack.index];
      return {
        ...state,
        optimistic,
        confirmed: { ...state.confirmed, [action.ack.index]: action.ack.label },
        labelsReceived: action.ack.labels_received,
        readyToAdvance: action.ack.ready_to_advance,
      };
    }
    case "rejected": {
      const optimistic = { ...state.optimistic };
      delete optimistic[action.index];
      return { ...state, optimistic };
    }
    case "focus":
      return { ...state, focus: action.index };
    case "focus-move": {
      if (state.cards.length === 0) return state;
      const order = state.cards.map((c) => c.index);
      const at = state.focus === null ? -1 : order.indexOf(state.focus);
      const next =
        order[(at + action.step + order.length) % order.length] ?? null;
      return { ...state, focus: next };
    }
  }
}

// After labeling a card, focus jumps to the next card still missing a
// label (wrapping), or stays put when everything is marked.
function nextUnlabeled(state: LabelingState, justLabeled: number): number {
  const order = state.cards.map((c) => c.index);
  const at = order.indexOf(justLabeled);
  for (let step = 1; step <= order.length; step += 1) {
    const idx = order[(at + step) % order.length]!;
    if (idx !== justLabeled && effectiveLabel(state, idx) === undefined) {
      return idx;
    }
  }
  return justLabeled;
}
