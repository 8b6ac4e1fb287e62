import type { SessionView } from "./session.js";

/** Grayscale bytes -> RGBA pixel buffer (canvas ImageData layout). */
export function grayToRgba(bytes: Uint8Array): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(bytes.length * 4));
  for (let i = 0; i < bytes.length; i++) {
    const v = bytes[i];
    const j = i * 4;
    out[j] = v;
    out[j + 1] = v;
    out[j + 2] = v;
    out[j + 3] = 255;
  }
  return out;
}

export function drawView(canvas: HTMLCanvasElement, view: SessionView): void {
  if (!view.frame) return;
  const { bytes, width, height } = view.frame;
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(new ImageData(grayToRgba(bytes), width, height), 0, 0);
  if (view.focus) {
    const [x, y, w, h] = view.focus;
    ctx.strokeStyle = "#2a9d4a";
    ctx.lineWidth = 1;
    ctx.strokeRect(x + 0.5, y + 0.5, w - 1, h - 1);
  }
}

export function hudText(view: SessionView): string {
  const parts = [
    `target: ${view.target ?? "-"}`,
    `step: ${view.step}`,
    `reward: ${view.totalReward.toFixed(3)}`,
    `status: ${view.phase === "episode_done" ? view.outcome : view.phase}`,
  ];
  return parts.join("   ");
}

export function progressText(view: SessionView): string {
  return view.targets
    .map((t) => {
      const n = view.progress[t] ?? 0;
      const mark = n >= view.perTarget ? " done" : "";
      return `${t}: ${n}/${view.perTarget}${mark}`;
    })
    .join("\n");
}
