import init, { se_crossings, hgg_covariance, hgg_tf } from "./pkg/leegp_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function timed(statusId, fn) {
  const el = $(statusId);
  el.className = "status";
  el.textContent = "computing…";
  // let the browser paint the status before blocking
  setTimeout(() => {
    const t0 = performance.now();
    try {
      const msg = fn();
      el.textContent = `${msg} (${((performance.now() - t0) / 1000).toFixed(2)} s)`;
    } catch (e) {
      el.className = "status err";
      el.textContent = String(e.message ?? e);
    }
  }, 10);
}

// Minimal line/point plot on a canvas; series: {xs, ys, err?, color, dashed?, points?}
function plot(canvas, series, { logY = false, xLabel = "", yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, m = { l: 60, r: 15, t: 10, b: 40 };
  ctx.clearRect(0, 0, W, H);
  const tr = (y) => (logY ? Math.log10(y) : y);
  const pts = series.flatMap((s) => s.xs.map((x, i) => [x, s.ys[i]])).filter(([, y]) => Number.isFinite(y) && (!logY || y > 0));
  if (!pts.length) return;
  const x0 = Math.min(...pts.map((p) => p[0])), x1 = Math.max(...pts.map((p) => p[0]));
  let y0 = Math.min(...pts.map((p) => tr(p[1]))), y1 = Math.max(...pts.map((p) => tr(p[1])));
  if (!logY) y0 = Math.min(0, y0);
  if (y1 === y0) y1 = y0 + 1;
  const X = (x) => m.l + ((x - x0) / (x1 - x0 || 1)) * (W - m.l - m.r);
  const Y = (y) => H - m.b - ((tr(y) - y0) / (y1 - y0)) * (H - m.t - m.b);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.beginPath();
  ctx.moveTo(m.l, m.t);
  ctx.lineTo(m.l, H - m.b);
  ctx.lineTo(W - m.r, H - m.b);
  ctx.stroke();
  for (let k = 0; k <= 5; k++) {
    const x = x0 + ((x1 - x0) * k) / 5;
    ctx.fillText(x.toFixed(1), X(x) - 10, H - m.b + 14);
    const ty = y0 + ((y1 - y0) * k) / 5;
    ctx.fillText(logY ? (10 ** ty).toPrecision(2) : ty.toPrecision(3), 5, Y(logY ? 10 ** ty : ty) + 4);
  }
  ctx.fillText(xLabel, W / 2, H - 8);
  ctx.save();
  ctx.translate(14, H / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(yLabel, 0, 0);
  ctx.restore();

  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    ctx.setLineDash(s.dashed ? [6, 4] : []);
    const ok = (i) => Number.isFinite(s.ys[i]) && (!logY || s.ys[i] > 0);
    if (s.points) {
      s.xs.forEach((x, i) => {
        if (!ok(i)) return;
        ctx.fillRect(X(x) - 2, Y(s.ys[i]) - 2, 4, 4);
        if (s.err) {
          const lo = Math.max(s.ys[i] - s.err[i], logY ? s.ys[i] / 10 : -Infinity);
          ctx.beginPath();
          ctx.moveTo(X(x), Y(lo));
          ctx.lineTo(X(x), Y(s.ys[i] + s.err[i]));
          ctx.stroke();
        }
      });
    } else {
      ctx.beginPath();
      let pen = false;
      s.xs.forEach((x, i) => {
        if (!ok(i)) { pen = false; return; }
        pen ? ctx.lineTo(X(x), Y(s.ys[i])) : ctx.moveTo(X(x), Y(s.ys[i]));
        pen = true;
      });
      ctx.stroke();
    }
  }
  ctx.setLineDash([]);
  series.forEach((s, i) => {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label ?? "", W - m.r - 200, m.t + 14 + 14 * i);
  });
}

function heatmap(canvas, n, values) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const v = values[i * n + j];
      const k = 4 * ((n - 1 - i) * n + j);
      // blue (−1) → white (0) → red (+1)
      img.data[k] = v > 0 ? 255 : Math.round(255 * (1 + v));
      img.data[k + 1] = Math.round(255 * (1 - Math.abs(v)));
      img.data[k + 2] = v < 0 ? 255 : Math.round(255 * (1 - v));
      img.data[k + 3] = 255;
    }
  }
  const off = new OffscreenCanvas(n, n);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function runRice() {
  timed("rice-status", () => {
    const rows = JSON.parse(se_crossings(num("rice-alpha2"), num("rice-length"), num("rice-spacing"), num("rice-n"), num("rice-seed")));
    const xs = rows.map((r) => r.u);
    plot($("rice-plot"), [
      { xs, ys: rows.map((r) => r.analytic), color: "#c33", label: "Rice formula" },
      { xs, ys: rows.map((r) => r.empirical), err: rows.map((r) => r.std_error), color: "#236", points: true, label: "sampled curves" },
    ], { xLabel: "level u", yLabel: "mean up-crossings" });
    const r0 = rows[0];
    return `u = 0: analytic ${r0.analytic.toFixed(3)}, sampled ${r0.empirical.toFixed(3)} ± ${r0.std_error.toFixed(3)}`;
  });
}

function runCov() {
  const s = num("cov-sigma");
  $("cov-sigma-value").textContent = s;
  timed("cov-status", () => {
    const h = JSON.parse(hgg_covariance(s));
    heatmap($("cov-plot"), h.n, h.values);
    return `${h.n}×${h.n}, M = ${h.mass[0]}–${h.mass[h.n - 1]} GeV`;
  });
}

function runTf() {
  timed("tf-status", () => {
    const t = JSON.parse(hgg_tf(num("tf-sigma"), num("tf-n"), num("tf-seed")));
    plot($("tf-plot"), [
      { xs: t.levels, ys: t.tf, err: t.tf_err, color: "#236", points: true, label: "GP toys" },
      { xs: t.levels, ys: t.gv_bound.map((v) => v ?? NaN), color: "#c33", dashed: true, label: "extrapolated bound" },
    ], { logY: true, xLabel: "local significance Z", yLabel: "trials factor" });
    return `${t.n_samples} samples, anchor count N(√0.5) = ${t.anchor_count.toFixed(4)}`;
  });
}

await init();
$("rice-run").onclick = runRice;
$("cov-sigma").oninput = runCov;
$("tf-run").onclick = runTf;
runCov();
runRice();
