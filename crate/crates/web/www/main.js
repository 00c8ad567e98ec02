import init, { alpha_curve, discovery, compare } from "./pkg/aomr_web.js";

const CLASS_COLOR = { low: "#c33", average: "#d90", high: "#393" };
const SERIES_COLOR = ["#36c", "#c63"];

const $ = (id) => document.getElementById(id);

function parseTNet(s) {
  s = s.trim();
  if (s.startsWith("2^")) return Math.pow(2, Number(s.slice(2)));
  return Number(s);
}

function guarded(errId, f) {
  return () => {
    $(errId).textContent = "";
    try {
      f();
    } catch (e) {
      $(errId).textContent = String(e);
    }
  };
}

// series: [{name, pts: [[x, y], ...]}]
function lineChart(canvas, series, xLabel, yLabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 45;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.pts);
  if (all.length === 0) return;
  const xs = all.map((p) => p[0]), ys = all.map((p) => p[1]);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = Math.min(0, ...ys), y1 = Math.max(...ys) || 1;
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(xLabel, w / 2, h - 10);
  ctx.fillText(yLabel, 4, 14);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 20, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad / 2 + 10);

  series.forEach((s, i) => {
    ctx.strokeStyle = SERIES_COLOR[i % SERIES_COLOR.length];
    ctx.beginPath();
    s.pts.forEach(([x, y], j) => (j ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.name, w - 140, 20 + 16 * i);
  });
}

function drawAlpha() {
  const pts = JSON.parse(alpha_curve(parseTNet($("tnet").value), Number($("maxk").value)));
  lineChart($("alpha"), [{ name: "alpha_min", pts: pts.map((p) => [p.k, p.alpha]) }], "K", "alpha");
}

function drawDiscovery() {
  const snap = JSON.parse(discovery(Number($("d-seed").value), Number($("d-nodes").value), $("d-proto").value));
  const canvas = $("disc");
  const ctx = canvas.getContext("2d");
  const s = canvas.width / Math.max(snap.width, snap.height);
  ctx.clearRect(0, 0, canvas.width, canvas.height);

  ctx.lineWidth = 2;
  for (const hop of snap.hops) {
    const a = snap.nodes[hop.from], b = snap.nodes[hop.to];
    ctx.strokeStyle = CLASS_COLOR[hop.class];
    ctx.beginPath();
    ctx.moveTo(a.x * s, a.y * s);
    ctx.lineTo(b.x * s, b.y * s);
    ctx.stroke();
  }
  ctx.lineWidth = 1;
  snap.nodes.forEach((n, i) => {
    ctx.fillStyle = CLASS_COLOR[n.class];
    const r = 3 + n.residual / 12;
    if (i === snap.source || i === snap.destination) {
      ctx.fillRect(n.x * s - r, n.y * s - r, 2 * r, 2 * r);
    } else {
      ctx.beginPath();
      ctx.arc(n.x * s, n.y * s, r, 0, 2 * Math.PI);
      ctx.fill();
    }
  });

  const replies = new Set(snap.hops.map((h) => h.reply));
  $("disc-info").textContent =
    `${snap.protocol}: source ${snap.source} -> destination ${snap.destination}, ` +
    `${replies.size} reply path(s), ${snap.hops.length} RREP hop(s)`;
}

function drawCompare() {
  const arms = JSON.parse(compare(Number($("c-seed").value), Number($("c-nodes").value), Number($("c-dur").value)));
  lineChart(
    $("cmp"),
    arms.map((a) => ({ name: a.protocol, pts: a.samples.map((p) => [p.t, p.consumed]) })),
    "time (s)",
    "consumed (J)",
  );
  const fmt = (v, k = 1) => (v == null ? "-" : (v * k).toFixed(4));
  $("cmp-info").textContent = arms
    .map(
      (a) =>
        `${a.protocol.padEnd(8)} mean energy ${fmt(a.mean_energy)} J  ` +
        `mean delay ${fmt(a.mean_delay, 1e3)} ms  delivery ${fmt(a.delivery_ratio)}  exhausted ${a.exhausted}`,
    )
    .join("\n");
}

await init();
$("alpha-go").onclick = guarded("alpha-err", drawAlpha);
$("disc-go").onclick = guarded("disc-err", drawDiscovery);
$("cmp-go").onclick = guarded("cmp-err", drawCompare);
guarded("alpha-err", drawAlpha)();
