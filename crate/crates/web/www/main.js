import init, { prior_draws, prior_scale, Demo } from "./pkg/elicit_web.js";

const $ = (id) => document.getElementById(id);

function histogram(canvas, series) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const all = series.flatMap((s) => s.values);
  if (!all.length) return;
  const lo = Math.min(...all), hi = Math.max(...all);
  const bins = 60, width = (hi - lo) / bins || 1;
  const counts = series.map((s) => {
    const c = new Array(bins).fill(0);
    for (const v of s.values) c[Math.min(bins - 1, Math.floor((v - lo) / width))] += 1 / s.values.length;
    return c;
  });
  const top = Math.max(...counts.flat());
  const bw = canvas.width / bins;
  series.forEach((s, i) => {
    ctx.fillStyle = s.color;
    counts[i].forEach((c, b) => {
      const h = (c / top) * (canvas.height - 20);
      ctx.fillRect(b * bw, canvas.height - 15 - h, bw - 1, h);
    });
  });
  ctx.fillStyle = "#333";
  ctx.fillText(lo.toPrecision(3), 2, canvas.height - 2);
  ctx.fillText(hi.toPrecision(3), canvas.width - 40, canvas.height - 2);
  const zero = ((0 - lo) / (hi - lo)) * canvas.width;
  ctx.fillRect(zero, 0, 1, canvas.height - 15);
  series.forEach((s, i) => {
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, 10, 14 + 14 * i);
  });
}

function drawPrior() {
  const k = Number($("pk").value), r = Math.min(Number($("pr").value), k);
  try {
    const body = JSON.parse(prior_draws(k, r, 4000, Number($("ps").value)));
    const s0 = prior_scale(body.mean_xi, body.mean_a, k - r, r);
    $("prior-info").textContent =
      `mean a ${body.mean_a.toFixed(2)}, mean xi ${body.mean_xi.toFixed(3)}, ` +
      `not-relevant prior variance at those means ${s0.toExponential(3)}`;
    const series = [];
    if (body.not_relevant) series.push({ label: "not relevant", color: "rgba(60,110,200,.6)", values: body.not_relevant });
    if (body.relevant) series.push({ label: "relevant", color: "rgba(220,120,30,.6)", values: body.relevant });
    histogram($("prior-hist"), series);
  } catch (e) {
    $("prior-info").innerHTML = `<span class="error">${e.message ?? e}</span>`;
  }
}

let demo = null;
let pending = [];
const answers = new Map();

function drawHeatmap(canvas, h) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!h) return;
  const left = 110, top = 18;
  const cw = (canvas.width - left) / h.cols.length, ch = (canvas.height - top) / h.rows.length;
  const means = h.cell_mean.flat().filter((v) => v !== null);
  const span = Math.max(1e-9, ...means.map(Math.abs));
  ctx.font = "11px system-ui";
  h.rows.forEach((row, i) => {
    ctx.fillStyle = "#333";
    ctx.fillText(row, 2, top + ch * i + ch / 2 + 4);
    h.cols.forEach((_, j) => {
      const v = h.cell_mean[i][j];
      const x = left + cw * j, y = top + ch * i;
      if (v === null) {
        // No supporting samples: hatched grey, never confused with a zero mean.
        ctx.fillStyle = "#eee";
        ctx.fillRect(x, y, cw - 2, ch - 2);
        ctx.strokeStyle = "#bbb";
        ctx.beginPath();
        ctx.moveTo(x, y + ch - 2);
        ctx.lineTo(x + cw - 2, y);
        ctx.stroke();
      } else {
        const t = v / span;
        ctx.fillStyle = t >= 0 ? `rgba(200,60,40,${0.15 + 0.85 * t})` : `rgba(40,90,200,${0.15 - 0.85 * t})`;
        ctx.fillRect(x, y, cw - 2, ch - 2);
        ctx.fillStyle = "#000";
        ctx.fillText(`${v.toFixed(2)} (${h.cell_count[i][j]})`, x + 4, y + ch / 2 + 4);
      }
    });
  });
  ctx.fillStyle = "#333";
  h.cols.forEach((c, j) => ctx.fillText(`${c} [${h.total_count[j]}]`, left + cw * j + 4, 12));
}

function drawCurve(canvas, history, max) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!history.length) return;
  const lo = Math.min(...history) * 0.98, hi = Math.max(...history) * 1.02;
  const x = (t) => 40 + (t / max) * (canvas.width - 60);
  const y = (v) => canvas.height - 20 - ((v - lo) / (hi - lo || 1)) * (canvas.height - 40);
  ctx.strokeStyle = "#2a7";
  ctx.lineWidth = 2;
  ctx.beginPath();
  history.forEach((v, t) => (t ? ctx.lineTo(x(t), y(v)) : ctx.moveTo(x(t), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.fillText("test MSE", 4, 12);
  ctx.fillText(hi.toFixed(3), 2, 24);
  ctx.fillText(lo.toFixed(3), 2, canvas.height - 22);
  history.forEach((v, t) => ctx.fillRect(x(t) - 2, y(v) - 2, 4, 4));
}

function renderQuery() {
  const hints = $("hints").checked;
  const rows = pending.map((f) => {
    const on = answers.get(f.id);
    return `<tr><td>${f.name}</td><td>${f.r_hat.toFixed(3)}</td><td>${f.width.toFixed(2)}</td>` +
      `<td>${f.ucb.toFixed(2)}</td><td>${hints ? (f.hint ? "relevant" : "-") : ""}</td>` +
      `<td><button data-id="${f.id}" class="${on ? "on" : ""}">${on ? "relevant" : "not relevant"}</button></td></tr>`;
  });
  $("query").innerHTML = pending.length
    ? `<tr><th>keyword</th><th>estimated relevance</th><th>width</th><th>UCB</th><th>hint</th><th>answer</th></tr>${rows.join("")}`
    : "";
  $("query").querySelectorAll("button").forEach((b) =>
    b.addEventListener("click", () => {
      const id = Number(b.dataset.id);
      answers.set(id, !answers.get(id));
      renderQuery();
    }),
  );
}

function renderState(state) {
  $("demo-status").textContent =
    `iteration ${state.iteration}/${state.max_iterations}, ${state.n_relevant} marked relevant` +
    (state.terminal ? ", session finished" : "");
  $("demo-query").disabled = state.terminal || state.awaiting_feedback;
  $("demo-submit").disabled = !state.awaiting_feedback;
  drawCurve($("mse"), state.mse_history, state.max_iterations);
}

function guard(f) {
  return () => {
    try {
      f();
    } catch (e) {
      $("demo-status").innerHTML = `<span class="error">${e.message ?? e}</span>`;
    }
  };
}

await init();
$("prior-run").addEventListener("click", drawPrior);
$("hints").addEventListener("change", renderQuery);
$("demo-start").addEventListener("click", guard(() => {
  demo?.free();
  demo = new Demo(Number($("ds").value));
  pending = [];
  renderQuery();
  drawHeatmap($("heatmap"), null);
  renderState(JSON.parse(demo.state()));
}));
$("demo-query").addEventListener("click", guard(() => {
  const q = JSON.parse(demo.query());
  pending = q.features;
  answers.clear();
  pending.forEach((f) => answers.set(f.id, false));
  renderQuery();
  drawHeatmap($("heatmap"), q.heatmap);
  renderState(JSON.parse(demo.state()));
}));
$("demo-submit").addEventListener("click", guard(() => {
  const state = JSON.parse(demo.answer(JSON.stringify(Object.fromEntries(answers))));
  pending = [];
  renderQuery();
  renderState(state);
}));
drawPrior();
