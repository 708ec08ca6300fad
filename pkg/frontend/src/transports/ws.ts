/** Browser WebSocket line transport (talks to the bridge). */

import type { LineTransport } from "../client.js";

export function wsTransport(url: string): LineTransport {
  const ws = new WebSocket(url);
  let lineCb: (line: string) => void = () => {};
  let closeCb: () => void = () => {};
  let openCb: () => void = () => {};

  ws.onopen = () => openCb();
  ws.onmessage = (ev) => {
    const text = typeof ev.data === "string" ? ev.data : "";
    for (const line of text.split("\n")) {
      if (line.trim().length > 0) lineCb(line);
    }
  };
  ws.onclose = () => closeCb();
  ws.onerror = () => {
    try {
      ws.close();
    } catch {
      /* already closed */
    }
  };

  return {
    send: (line) => ws.send(line),
    close: () => ws.close(),
    onLine: (cb) => {
      lineCb = cb;
    },
    onClose: (cb) => {
      closeCb = cb;
    },
    onOpen: (cb) => {
      openCb = cb;
    },
  };
}
