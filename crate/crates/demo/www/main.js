import init, { recovery, nullSampler, binarize } from "./pkg/homophily_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(el, err) {
  el.className = "error";
  el.textContent = String(err);
}

function ok(el, text) {
  el.className = "";
  el.textContent = text;
}

// Diverging blue-white-red scale clipped at ±limit.
function color(v, limit) {
  const t = Math.max(-1, Math.min(1, v / limit));
  const a = Math.round(255 * (1 - Math.abs(t)));
  return t >= 0 ? `rgb(255,${a},${a})` : `rgb(${a},${a},255)`;
}

function drawHeatmap(res) {
  const c = $("rec-canvas");
  const g = c.getContext("2d");
  const names = res.features;
  const n = names.length;
  const pad = 70;
  const cell = (c.width - pad) / n;
  const limit = Math.max(0.5, ...res.estimate.flat().map(Math.abs));
  g.clearRect(0, 0, c.width, c.height);
  g.font = "12px system-ui";
  g.textAlign = "right";
  g.textBaseline = "middle";
  for (let h = 0; h < n; h++) {
    g.fillStyle = "#222";
    g.fillText(names[h], pad - 6, pad + (h + 0.5) * cell);
    g.save();
    g.translate(pad + (h + 0.5) * cell, pad - 6);
    g.rotate(-Math.PI / 3);
    g.textAlign = "left";
    g.fillText(names[h], 0, 0);
    g.restore();
    for (let k = 0; k < n; k++) {
      const x = pad + k * cell;
      const y = pad + h * cell;
      g.fillStyle = color(res.estimate[h][k], limit);
      g.fillRect(x, y, cell - 1, cell - 1);
      if (res.p[h][k] < 0.05) {
        g.strokeStyle = "#000";
        g.lineWidth = 2;
        g.strokeRect(x + 1, y + 1, cell - 3, cell - 3);
      }
      g.fillStyle = "#000";
      g.textAlign = "center";
      g.fillText(res.estimate[h][k].toFixed(2), x + cell / 2, y + cell / 2);
      g.font = "9px system-ui";
      g.textAlign = "left";
      g.fillStyle = "#555";
      g.fillText(res.planted[h][k].toString(), x + 3, y + 9);
      g.font = "12px system-ui";
      g.textAlign = "right";
    }
  }
}

function runRecovery() {
  const info = $("rec-info");
  ok(info, "running...");
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const res = JSON.parse(recovery(num("rec-users"), num("rec-cands"), num("rec-strength"), num("rec-seed")));
      const ms = performance.now() - t0;
      let recovered = 0;
      let planted = 0;
      res.planted.forEach((row, h) => row.forEach((w, k) => {
        if (w !== 0) {
          planted++;
          if (res.p[h][k] < 0.05 && Math.sign(res.estimate[h][k]) === Math.sign(w)) recovered++;
        }
      }));
      ok(info, `${res.n_examples} examples, ${res.n_iter} Newton iterations, ` +
        `${recovered}/${planted} planted entries recovered with p < 0.05 (${ms.toFixed(0)} ms)`);
      drawHeatmap(res);
    } catch (e) {
      fail(info, e);
    }
  }, 10);
}

function runSampler() {
  const info = $("ns-info");
  try {
    const res = JSON.parse(nullSampler($("ns-arcs").value, num("ns-draws"), num("ns-seed")));
    ok(info, `acceptance probability ${res.acceptance.toFixed(4)}; ${res.pairs.length} non-links with positive mass`);
    const rows = res.pairs.map((p) =>
      `<tr><td>${p.u} → ${p.v}</td><td>${p.exact.toFixed(4)}</td><td>${p.empirical.toFixed(4)}</td></tr>`);
    $("ns-table").innerHTML = "<tr><th>pair</th><th>exact</th><th>sampled</th></tr>" + rows.join("");
    const c = $("ns-canvas");
    const g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const max = Math.max(...res.pairs.flatMap((p) => [p.exact, p.empirical]), 1e-9);
    const bw = c.width / Math.max(res.pairs.length, 1);
    const h = c.height - 20;
    res.pairs.forEach((p, i) => {
      g.fillStyle = "#9bb7d4";
      g.fillRect(i * bw + 2, h - (p.exact / max) * h, bw / 2 - 2, (p.exact / max) * h);
      g.fillStyle = "#d4869b";
      g.fillRect(i * bw + bw / 2, h - (p.empirical / max) * h, bw / 2 - 2, (p.empirical / max) * h);
    });
    g.fillStyle = "#222";
    g.font = "12px system-ui";
    g.fillText("blue: exact, red: sampled", 4, c.height - 4);
  } catch (e) {
    fail(info, e);
    $("ns-table").innerHTML = "";
  }
}

function runBinarize() {
  const info = $("bin-info");
  try {
    const res = JSON.parse(binarize($("bin-scores").value, num("bin-q")));
    ok(info, `${res.per_pole} users per pole`);
    const rows = res.users.map((u) =>
      `<tr><td>${u.user}</td><td>${u.score}</td><td>${u.quantile.toFixed(3)}</td><td>${u.pole}</td></tr>`);
    $("bin-table").innerHTML = "<tr><th>user</th><th>score</th><th>quantile</th><th>pole</th></tr>" + rows.join("");
  } catch (e) {
    fail(info, e);
    $("bin-table").innerHTML = "";
  }
}

await init();
$("rec-run").addEventListener("click", runRecovery);
$("ns-run").addEventListener("click", runSampler);
$("bin-run").addEventListener("click", runBinarize);
runSampler();
runBinarize();
