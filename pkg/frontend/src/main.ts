/** Browser bootstrap: wires the form, the event subscription, and the
 * renderer together.  All state lives in one SessionView and every update
 * goes through the fold, so the page is a function of the event stream. */

import { ServiceClient } from "./api.js";
import { applyEvent, emptyView } from "./fold.js";
import type { SessionView } from "./types.js";
import { renderSession } from "./view.js";

interface PageState {
  view: SessionView | null;
  selected: string | null;
  reconnecting: boolean;
  lastSessionId: string | null;
  chatHistory: SessionView["messages"];
}

function getElement<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el as T;
}

export function startApp(): void {
  const client = new ServiceClient(
    (window as { DEEPSEARCH_URL?: string }).DEEPSEARCH_URL ?? window.location.origin,
  );
  const form = getElement<HTMLFormElement>("ask-form");
  const input = getElement<HTMLInputElement>("question");
  const submit = getElement<HTMLButtonElement>("submit");
  const followUp = getElement<HTMLInputElement>("follow-up");
  const formError = getElement<HTMLDivElement>("form-error");
  const root = getElement<HTMLDivElement>("session-root");

  const state: PageState = {
    view: null,
    selected: null,
    reconnecting: false,
    lastSessionId: null,
    chatHistory: [],
  };

  const redraw = () => {
    if (state.view === null) return;
    const shown: SessionView = {
      ...state.view,
      messages: [...state.chatHistory, ...state.view.messages],
    };
    root.innerHTML = renderSession(shown, state.selected, state.reconnecting);
  };

  const syncSubmit = () => {
    submit.disabled = input.value.trim() === "";
  };
  input.addEventListener("input", syncSubmit);
  syncSubmit();

  root.addEventListener("click", (raw) => {
    const target = (raw.target as HTMLElement).closest("[data-node]");
    if (target instanceof HTMLElement && target.dataset.node) {
      state.selected = target.dataset.node;
      redraw();
    }
  });

  form.addEventListener("submit", (raw) => {
    raw.preventDefault();
    const question = input.value.trim();
    if (question === "") return;
    formError.textContent = "";
    const priorId = followUp.checked ? state.lastSessionId : null;
    void (async () => {
      try {
        const sessionId = await client.ask(question, priorId ?? undefined);
        if (state.view !== null) {
          state.chatHistory = [...state.chatHistory, ...state.view.messages];
        }
        state.view = emptyView(sessionId);
        state.selected = null;
        state.lastSessionId = sessionId;
        input.value = "";
        syncSubmit();
        redraw();
        await client.subscribe(sessionId, {
          onEvent: (event) => {
            if (state.view !== null && state.view.sessionId === sessionId) {
              state.view = applyEvent(state.view, event);
              redraw();
            }
          },
          onReconnect: () => {
            state.reconnecting = true;
            redraw();
          },
          onEnd: () => {
            state.reconnecting = false;
            redraw();
          },
        });
      } catch (error) {
        formError.textContent = error instanceof Error ? error.message : String(error);
        input.value = question; // keep the text so the user can retry
        syncSubmit();
      }
    })();
  });
}

if (typeof document !== "undefined" && document.getElementById("ask-form") !== null) {
  startApp();
}
