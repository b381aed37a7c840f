// Built with: wasm-pack build crates/wasm-demo --target web --out-dir www/pkg
import init, { parse_demo, metrics_demo, sweep_demo } from "./pkg/annorater_wasm.js";

const $ = (id) => document.getElementById(id);

function pct(x, digits = 1) {
  return (100 * x).toFixed(digits) + "%";
}

function showError(el, err) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err.message ?? err);
  el.appendChild(p);
}

function updateParse() {
  const out = $("parse-out");
  try {
    const v = JSON.parse(parse_demo($("parse-response").value, $("parse-labels").value));
    const verdict = v.status === "parsed" ? `parsed: ${v.label}` : `unparsable: ${v.reason}`;
    out.textContent = `${verdict}\nnormalized: "${v.normalized}"`;
    out.className = "";
  } catch (err) {
    out.textContent = String(err.message ?? err);
    out.className = "error";
  }
}

function cell(row, text, tag = "td") {
  const c = document.createElement(tag);
  c.textContent = text;
  row.appendChild(c);
}

function updateMetrics() {
  const out = $("metrics-out");
  let v;
  try {
    v = JSON.parse(metrics_demo($("metrics-labels").value, $("metrics-pairs").value));
  } catch (err) {
    showError(out, err);
    return;
  }
  const m = v.metrics;
  out.innerHTML = "";
  const summary = document.createElement("p");
  summary.textContent =
    `${m.n_pairs} pairs, parse rate ${pct(m.parse_rate)}, accuracy ${pct(m.accuracy, 2)}, ` +
    `strict accuracy ${pct(m.strict_accuracy, 2)}, weighted F1 ${pct(m.w_f1, 2)}`;
  out.appendChild(summary);

  const table = document.createElement("table");
  const head = document.createElement("tr");
  cell(head, "human \\ model", "th");
  v.confusion.labels.forEach((l) => cell(head, l, "th"));
  table.appendChild(head);
  v.confusion.row_normalized.forEach((row, i) => {
    const tr = document.createElement("tr");
    cell(tr, v.confusion.labels[i], "th");
    row.forEach((x, j) => cell(tr, `${pct(x)} (${v.confusion.counts[i][j]})`));
    table.appendChild(tr);
  });
  out.appendChild(table);
}

function drawCurve(sweep) {
  const canvas = $("sw-canvas");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = { left: 50, right: 20, top: 20, bottom: 40 };
  ctx.clearRect(0, 0, w, h);

  const stats = sweep.stats;
  const lo = Math.max(0, Math.min(...stats.map((s) => s.f1_quartiles[0])) - 0.05);
  const x = (p) => pad.left + (p - 0.05) / 1.0 * (w - pad.left - pad.right);
  const y = (f) => h - pad.bottom - ((f - lo) / (1 - lo)) * (h - pad.top - pad.bottom);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.beginPath();
  ctx.moveTo(pad.left, pad.top);
  ctx.lineTo(pad.left, h - pad.bottom);
  ctx.lineTo(w - pad.right, h - pad.bottom);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const f = lo + ((1 - lo) * i) / 4;
    ctx.fillText(pct(f, 0), 8, y(f) + 4);
  }
  stats.forEach((s) => ctx.fillText(s.proportion.toFixed(1), x(s.proportion) - 8, h - pad.bottom + 16));
  ctx.fillText("training proportion", w / 2 - 50, h - 6);

  // quartile boxes
  const half = 10;
  stats.forEach((s) => {
    const [q1, med, q3] = s.f1_quartiles;
    ctx.fillStyle = s.proportion === sweep.min_sufficient ? "#f2c14e" : "#cfe0f3";
    ctx.fillRect(x(s.proportion) - half, y(q3), 2 * half, Math.max(1, y(q1) - y(q3)));
    ctx.strokeStyle = "#345";
    ctx.strokeRect(x(s.proportion) - half, y(q3), 2 * half, Math.max(1, y(q1) - y(q3)));
    ctx.beginPath();
    ctx.moveTo(x(s.proportion) - half, y(med));
    ctx.lineTo(x(s.proportion) + half, y(med));
    ctx.stroke();
  });

  // mean line
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  stats.forEach((s, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, x(s.proportion), y(s.f1_mean)));
  ctx.stroke();
}

function runSweep() {
  const status = $("sw-status");
  status.textContent = "running...";
  status.className = "";
  // let the status repaint before the synchronous computation
  setTimeout(() => {
    try {
      const started = performance.now();
      const sweep = JSON.parse(
        sweep_demo(
          Number.parseInt($("sw-n").value, 10),
          Number.parseFloat($("sw-margin").value),
          Number.parseFloat($("sw-noise").value),
          Number.parseInt($("sw-repeats").value, 10),
          Number.parseInt($("sw-seed").value, 10),
        ),
      );
      drawCurve(sweep);
      const ms = Math.round(performance.now() - started);
      const min = sweep.min_sufficient === null ? "none" : sweep.min_sufficient.toFixed(1);
      status.textContent = `full-data F1 ${pct(sweep.full_f1, 2)}; minimum sufficient proportion ${min} (highlighted); ${ms} ms`;
    } catch (err) {
      status.textContent = String(err.message ?? err);
      status.className = "error";
    }
  }, 10);
}

await init();
["parse-labels", "parse-response"].forEach((id) => $(id).addEventListener("input", updateParse));
["metrics-labels", "metrics-pairs"].forEach((id) => $(id).addEventListener("input", updateMetrics));
$("sw-run").addEventListener("click", runSweep);
updateParse();
updateMetrics();
runSweep();
