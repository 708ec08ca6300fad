/**
 * Static file server plus WebSocket <-> TCP bridge.
 *
 * Browsers cannot open raw TCP sockets, so each WebSocket client gets
 * its own TCP connection to the simulation service; lines are relayed
 * verbatim in both directions.
 *
 * Usage: node dist/bridge/bridge.js [--http 8080] [--service-host 127.0.0.1]
 *        [--service-port 8765]
 */

import fs from "node:fs";
import http from "node:http";
import net from "node:net";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { WebSocketServer, WebSocket } from "ws";

const argv = process.argv.slice(2);
function argOf(name: string, fallback: string): string {
  const i = argv.indexOf(name);
  return i >= 0 && i + 1 < argv.length ? argv[i + 1] : fallback;
}

const HTTP_PORT = parseInt(argOf("--http", "8080"), 10);
const SERVICE_HOST = argOf("--service-host", "127.0.0.1");
const SERVICE_PORT = parseInt(argOf("--service-port", "8765"), 10);

const rootDir = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..", "..");

const MIME: Record<string, string> = {
  ".html": "text/html",
  ".js": "text/javascript",
  ".css": "text/css",
  ".map": "application/json",
};

const server = http.createServer((req, res) => {
  const urlPath = (req.url ?? "/").split("?")[0];
  const rel = urlPath === "/" ? "index.html" : urlPath.replace(/^\/+/, "");
  const file = path.resolve(rootDir, rel);
  if (!file.startsWith(rootDir) || !fs.existsSync(file) || !fs.statSync(file).isFile()) {
    res.writeHead(404);
    res.end("not found");
    return;
  }
  res.writeHead(200, { "content-type": MIME[path.extname(file)] ?? "application/octet-stream" });
  fs.createReadStream(file).pipe(res);
});

const wss = new WebSocketServer({ server, path: "/sock" });

wss.on("connection", (ws: WebSocket) => {
  const tcp = net.createConnection({ host: SERVICE_HOST, port: SERVICE_PORT });
  tcp.setNoDelay(true);
  let buf = "";
  tcp.on("data", (chunk) => {
    buf += chunk.toString("utf8");
    let idx;
    while ((idx = buf.indexOf("\n")) >= 0) {
      const line = buf.slice(0, idx);
      buf = buf.slice(idx + 1);
      if (line.trim() && ws.readyState === WebSocket.OPEN) ws.send(line);
    }
  });
  tcp.on("close", () => ws.close());
  tcp.on("error", () => ws.close());
  ws.on("message", (data) => {
    const text = data.toString();
    tcp.write(text.endsWith("\n") ? text : text + "\n");
  });
  ws.on("close", () => tcp.destroy());
});

server.listen(HTTP_PORT, () => {
  console.log(
    `ui at http://127.0.0.1:${HTTP_PORT}/ bridging /sock -> ${SERVICE_HOST}:${SERVICE_PORT}`,
  );
});
