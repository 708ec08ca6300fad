/** Raw TCP line transport for Node (tests and the bridge). */

import net from "node:net";
import type { LineTransport } from "../client.js";

export function tcpTransport(host: string, port: number): LineTransport {
  const socket = net.createConnection({ host, port });
  socket.setNoDelay(true);
  let buf = "";
  let lineCb: (line: string) => void = () => {};
  let closeCb: () => void = () => {};
  let openCb: () => void = () => {};
  let closed = false;

  socket.on("connect", () => openCb());
  socket.on("data", (chunk) => {
    buf += chunk.toString("utf8");
    let idx;
    while ((idx = buf.indexOf("\n")) >= 0) {
      const line = buf.slice(0, idx);
      buf = buf.slice(idx + 1);
      if (line.trim().length > 0) lineCb(line);
    }
  });
  const emitClose = () => {
    if (!closed) {
      closed = true;
      closeCb();
    }
  };
  socket.on("close", emitClose);
  socket.on("error", emitClose);

  return {
    send: (line) => {
      socket.write(line);
    },
    close: () => {
      socket.destroy();
    },
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
