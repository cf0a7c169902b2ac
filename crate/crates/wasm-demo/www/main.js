import init, { sicer_comparison, cost_landscape, track } from "./pkg/wasm_demo.js";

const $ = (id) => document.getElementById(id);

function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 28;
  ctx.clearRect(0, 0, w, h);
  const xs = opts.x ?? series[0].data.map((_, i) => i);
  const all = series.flatMap((s) => Array.from(s.data));
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi === lo) { hi += 1; lo -= 1; }
  const x0 = xs[0], x1 = xs[xs.length - 1];
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - lo) / (hi - lo)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toPrecision(4), 2, pad);
  ctx.fillText(lo.toPrecision(4), 2, h - pad);
  ctx.fillText(String(x0), pad, h - 8);
  ctx.fillText(String(x1), w - pad - 30, h - 8);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    s.data.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  }
  if (opts.mark !== undefined) {
    const [mx, my] = opts.mark;
    ctx.fillStyle = "red";
    ctx.fillRect(px(mx) - 3, py(my) - 3, 6, 6);
  }
}

function drawSicer() {
  const c = parseFloat($("sicer-c").value);
  $("sicer-c-val").textContent = c.toFixed(1);
  const out = sicer_comparison(c);
  const half = (out.length - 1) / 2;
  $("sicer-err").textContent = `relative error ${(100 * out[0]).toFixed(1)} %`;
  plot($("sicer"), [
    { data: out.subarray(1, 1 + half), color: "#aaa", width: 3 },
    { data: out.subarray(1 + half), color: "#1f5fbf" },
  ]);
}

function drawCost() {
  const c = parseFloat($("cost-c").value);
  $("cost-c-val").textContent = c.toFixed(2);
  const out = cost_landscape(c, parseInt($("cost-seed").value, 10) >>> 0);
  const n = out.length / 2;
  const cands = Array.from(out.subarray(0, n));
  const logc = Array.from(out.subarray(n), (v) => Math.log10(v + 1e-30));
  let best = 0;
  logc.forEach((v, i) => { if (v < logc[best]) best = i; });
  plot($("cost"), [{ data: logc, color: "#1f5fbf" }], { x: cands, mark: [cands[best], logc[best]] });
}

function runTrack() {
  $("trk-status").textContent = "running...";
  setTimeout(() => {
    try {
      const out = track(
        parseFloat($("trk-start").value),
        parseFloat($("trk-step").value),
        parseInt($("trk-period").value, 10),
        parseInt($("trk-frames").value, 10),
      );
      const n = out.length / 2;
      const truth = out.subarray(0, n), est = out.subarray(n);
      let worst = 0;
      for (let i = 0; i < n; i++) worst = Math.max(worst, Math.abs(truth[i] - est[i]));
      $("trk-status").textContent = `worst error ${worst.toFixed(2)} m/s`;
      const frames = Array.from({ length: n }, (_, i) => i + 1);
      plot($("track"), [
        { data: truth, color: "#aaa", width: 3 },
        { data: est, color: "#1f5fbf" },
      ], { x: frames });
    } catch (e) {
      $("trk-status").textContent = String(e);
    }
  }, 0);
}

await init();
$("sicer-c").addEventListener("input", drawSicer);
$("cost-c").addEventListener("input", drawCost);
$("cost-seed").addEventListener("change", drawCost);
$("trk-run").addEventListener("click", runTrack);
drawSicer();
drawCost();
runTrack();
