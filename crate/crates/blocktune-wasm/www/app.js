// Static demo page driver. Expects the wasm-pack output in ../pkg
// (`wasm-pack build --target web crates/blocktune-wasm`).

import init, { mask_preview, landscape, tune_demo } from "../pkg/blocktune_wasm.js";

const $ = (id) => document.getElementById(id);

function knobs() {
  return {
    seed: BigInt($("seed").value || 0),
    bandwidth: Number($("bandwidth").value),
    sinks: Number($("sinks").value),
    rank: Number($("rank").value),
    noise: Number($("noise").value),
  };
}

const STATE_COLORS = ["#e8e8e8", "#cfe3ff", "#ffd9a8", "#2b6cb0"];

function drawMask() {
  const k = knobs();
  const s = Number($("s").value);
  $("s-out").textContent = s.toFixed(2);
  const data = JSON.parse(mask_preview(k.seed, k.bandwidth, k.sinks, k.rank, k.noise, s));
  if (data.error && typeof data.error === "string") return;
  const canvas = $("mask");
  const ctx = canvas.getContext("2d");
  const n = data.n_blocks;
  const cell = Math.floor(canvas.width / n);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      ctx.fillStyle = STATE_COLORS[data.states[i * n + j]];
      ctx.fillRect(j * cell, i * cell, cell - 1, cell - 1);
    }
  }
  $("mask-params").textContent =
    `τ=${data.tau_keep.toFixed(4)}  θ=${data.theta.toFixed(4)}  λ=${data.lambda.toFixed(2)}`;
  $("mask-metrics").textContent =
    `relative-L1 error ${data.error.toFixed(4)} · block sparsity ${(100 * data.sparsity).toFixed(1)}%`;
}

function axes(ctx, w, h, pad) {
  ctx.strokeStyle = "#bbb";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
}

function drawLandscape() {
  const k = knobs();
  const data = JSON.parse(landscape(k.seed, k.bandwidth, k.sinks, k.rank, k.noise, 41));
  if (data.error && typeof data.error === "string") return;
  const canvas = $("landscape");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  axes(ctx, w, h, pad);
  const errMax = Math.max(0.2, ...data.error_high) * 1.05;
  const x = (s) => pad + s * (w - 2 * pad);
  const yErr = (e) => h - pad - Math.min(e / errMax, 1) * (h - 2 * pad);
  const ySp = (sp) => h - pad - sp * (h - 2 * pad);
  const line = (xs, ys, color) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.8;
    ctx.beginPath();
    xs.forEach((v, i) => (i === 0 ? ctx.moveTo(x(v), ys[i]) : ctx.lineTo(x(v), ys[i])));
    ctx.stroke();
  };
  line(data.s, data.error_low.map(yErr), "#999");
  line(data.s, data.error_high.map(yErr), "#c53030");
  line(data.s, data.sparsity_high.map(ySp), "#2f855a");
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.fillText("s →", w - pad - 18, h - pad + 14);
  ctx.fillText(`error (0…${errMax.toFixed(2)})`, pad, pad - 8);
}

function drawTune() {
  const k = knobs();
  const epsLow = Number($("eps-low").value);
  const epsHigh = Number($("eps-high").value);
  const data = JSON.parse(
    tune_demo(k.seed, k.bandwidth, k.sinks, k.rank, k.noise, epsLow, epsHigh)
  );
  if (data.error && typeof data.error === "string") {
    $("tune-result").textContent = `error: ${data.error}`;
    return;
  }
  const canvas = $("gp");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const yMaxData = Math.max(epsHigh * 2, ...data.observations.map((o) => o[1]));
  const yMax = Math.min(Math.max(yMaxData * 1.1, 0.1), 1.5);
  const x = (s) => pad + s * (w - 2 * pad);
  const y = (e) => h - pad - Math.min(Math.max(e, 0) / yMax, 1) * (h - 2 * pad);

  // Probably-feasible regions.
  ctx.fillStyle = "rgba(47,133,90,0.12)";
  for (const [lo, hi] of data.regions) {
    ctx.fillRect(x(lo), pad, x(hi) - x(lo), h - 2 * pad);
  }
  axes(ctx, w, h, pad);

  // GP mean ± sigma.
  ctx.fillStyle = "rgba(43,108,176,0.18)";
  ctx.beginPath();
  data.gp_s.forEach((s, i) => {
    const yy = y(data.gp_mu[i] + data.gp_sigma[i]);
    i === 0 ? ctx.moveTo(x(s), yy) : ctx.lineTo(x(s), yy);
  });
  for (let i = data.gp_s.length - 1; i >= 0; i--) {
    ctx.lineTo(x(data.gp_s[i]), y(data.gp_mu[i] - data.gp_sigma[i]));
  }
  ctx.closePath();
  ctx.fill();
  ctx.strokeStyle = "#2b6cb0";
  ctx.lineWidth = 1.8;
  ctx.beginPath();
  data.gp_s.forEach((s, i) =>
    i === 0 ? ctx.moveTo(x(s), y(data.gp_mu[i])) : ctx.lineTo(x(s), y(data.gp_mu[i]))
  );
  ctx.stroke();

  // Error band.
  for (const e of [epsLow, epsHigh]) {
    ctx.strokeStyle = "#c53030";
    ctx.setLineDash([5, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, y(e));
    ctx.lineTo(w - pad, y(e));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  // Stage-1 observations.
  ctx.fillStyle = "#1a202c";
  for (const [s, e] of data.observations) {
    ctx.beginPath();
    ctx.arc(x(s), y(e), 3.5, 0, Math.PI * 2);
    ctx.fill();
  }

  // Stage-2 bisections.
  for (const st of data.steps) {
    ctx.strokeStyle = "#b7791f";
    ctx.fillStyle = st.recorded ? "#b7791f" : "#fff";
    const px = x(st.s);
    const py = y(st.error);
    ctx.beginPath();
    ctx.moveTo(px, py - 5);
    ctx.lineTo(px - 4.5, py + 4);
    ctx.lineTo(px + 4.5, py + 4);
    ctx.closePath();
    ctx.fill();
    ctx.stroke();
  }

  // Accepted configuration.
  ctx.fillStyle = "#c53030";
  ctx.font = "16px system-ui";
  ctx.fillText("★", x(data.s_best) - 6, y(data.error) + 5);

  const spPct = (100 * data.sparsity).toFixed(1);
  $("tune-result").textContent =
    `accepted s=${data.s_best.toFixed(4)} → τ=${data.tau_keep.toFixed(4)}, θ=${data.theta.toFixed(4)}, ` +
    `λ=${data.lambda.toFixed(2)} · error ${data.error.toFixed(4)} · sparsity ${spPct}% · ` +
    `${data.evals_low} low + ${data.evals_high} high evaluations` +
    (data.fallback_applied ? " · validation fallback applied" : "");
}

function refreshAll() {
  for (const id of ["bandwidth", "sinks", "rank", "noise"]) {
    $(`${id}-out`).textContent = $(id).value;
  }
  drawMask();
  drawLandscape();
}

await init();
refreshAll();
drawTune();

$("s").addEventListener("input", drawMask);
for (const id of ["seed", "bandwidth", "sinks", "rank", "noise"]) {
  $(id).addEventListener("change", refreshAll);
}
$("tune").addEventListener("click", drawTune);
