// Browser wiring: one WebSocket session per tab.

import { drawView, hudText, progressText } from "./render.js";
import { SessionController } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function main(): void {
  const canvas = el<HTMLCanvasElement>("field");
  const hud = el<HTMLDivElement>("hud");
  const banner = el<HTMLDivElement>("banner");
  const targetsBox = el<HTMLDivElement>("targets");
  const progressBox = el<HTMLPreElement>("progress");
  const saveBtn = el<HTMLButtonElement>("save");
  const discardBtn = el<HTMLButtonElement>("discard");

  const addr = `ws://${location.host}/ws`;
  const ws = new WebSocket(addr);

  const controller = new SessionController(
    { send: (d) => ws.send(d), close: () => ws.close() },
    {
      onChange: (view) => {
        drawView(canvas, view);
        hud.textContent = hudText(view);
        progressBox.textContent = progressText(view);
        banner.textContent =
          view.phase === "busy"
            ? "Another session is active (read-only)."
            : view.phase === "version_mismatch"
              ? `Protocol mismatch: ${view.lastError}`
              : view.phase === "closed"
                ? "Disconnected."
                : "";
        banner.style.display = banner.textContent ? "block" : "none";
        const dialog = view.phase === "episode_done";
        saveBtn.style.display = dialog && view.canSave ? "inline" : "none";
        discardBtn.style.display = dialog ? "inline" : "none";
        if (view.phase === "choosing" && targetsBox.childElementCount === 0) {
          for (const t of view.targets) {
            const b = document.createElement("button");
            b.textContent = t;
            b.onclick = () => controller.startEpisode(t);
            targetsBox.appendChild(b);
          }
        }
      },
    },
  );

  ws.onopen = () => controller.hello();
  ws.onmessage = (ev) => controller.handleMessage(String(ev.data));
  ws.onclose = () => controller.handleClose();

  window.addEventListener("keydown", (ev) => {
    if (controller.keyCommand(ev.key)) ev.preventDefault();
  });
  saveBtn.onclick = () => controller.save();
  discardBtn.onclick = () => controller.discard();
}

main();
