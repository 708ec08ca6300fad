/**
 * Latest-message slots for rendering. Each kind replaces its slot
 * atomically, so a half-parsed or stale frame can never be observed;
 * ingestion never blocks on drawing.
 */

import type { MapMsg, ServerMsg, StateMsg, StatusMsg, TrajectoryMsg } from "./protocol.js";

export interface PVArrow {
  p: [number, number, number];
  v: [number, number, number];
  owner: [number, number, number];
}

export class SceneState {
  state: StateMsg | null = null;
  trajectory: TrajectoryMsg | null = null;
  map: MapMsg | null = null;
  status: StatusMsg | null = null;
  pairs: PVArrow[] = [];
  connected = false;
  statesSeen = 0;

  ingest(msg: ServerMsg): void {
    switch (msg.type) {
      case "state":
        this.state = msg;
        this.statesSeen += 1;
        break;
      case "trajectory":
        this.trajectory = msg;
        break;
      case "map":
        this.map = msg;
        break;
      case "status":
        this.status = msg;
        break;
    }
  }
}
