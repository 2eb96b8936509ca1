import init, { generate_network, bias_map, simulate } from "./pkg/vsink_web.js";

const $ = (id) => document.getElementById(id);
const status = $("status");
const graph = $("graph").getContext("2d");
const backlog = $("backlog").getContext("2d");
const SCHEME_COLORS = { joint_spbp: "#1b7837", spbp_spbp: "#2166ac", bp_spbp: "#b2182b" };

let net = null;
let positions = [];
const runs = [];

function report(message, isError = false) {
  status.textContent = message;
  status.className = isError ? "error" : "";
}

function request() {
  return { seed: Number($("seed").value), nodes: Number($("nodes").value) };
}

function call(fn, ...args) {
  try {
    return JSON.parse(fn(...args));
  } catch (e) {
    report(String(e), true);
    return null;
  }
}

// One ring per tier: core, then edge servers and relays, then clients.
function layout(nodes) {
  const w = graph.canvas.width;
  const c = w / 2;
  const radius = { 1: 0.14 * w, 2: 0.29 * w };
  const rings = {};
  for (const n of nodes) (rings[Math.min(n.tier, 3)] ??= []).push(n.id);
  const pos = [];
  for (const [tier, ids] of Object.entries(rings)) {
    const r = radius[tier] ?? 0.45 * w;
    ids.forEach((id, k) => {
      const a = (2 * Math.PI * k) / ids.length + Number(tier) * 0.3;
      pos[id] = [c + r * Math.cos(a), c + r * Math.sin(a)];
    });
  }
  return pos;
}

function shade(t) {
  // low bias is dark green, high bias is pale yellow
  const lerp = (a, b) => Math.round(a + (b - a) * t);
  return `rgb(${lerp(0, 255)},${lerp(104, 247)},${lerp(55, 188)})`;
}

function drawGraph(fill = () => "#888", size = () => 5) {
  const ctx = graph;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  const { nodes, links } = net.topology;
  const maxRate = Math.max(...links.map((l) => l.rate));
  ctx.strokeStyle = "#bbb";
  for (const l of links) {
    ctx.lineWidth = 0.5 + (2 * l.rate) / maxRate;
    ctx.beginPath();
    ctx.moveTo(...positions[l.a]);
    ctx.lineTo(...positions[l.b]);
    ctx.stroke();
  }
  for (const n of nodes) {
    ctx.fillStyle = fill(n);
    ctx.beginPath();
    const [x, y] = positions[n.id];
    if (n.role === "relay") ctx.rect(x - 4, y - 4, 8, 8);
    else ctx.arc(x, y, size(n), 0, 2 * Math.PI);
    ctx.fill();
  }
}

const ROLE_COLORS = { server: "#5e3c99", client: "#e66101", relay: "#999" };

function onGenerate() {
  const result = call(generate_network, JSON.stringify(request()));
  if (!result) return;
  net = result;
  positions = layout(net.topology.nodes);
  runs.length = 0;
  $("results").tBodies[0].replaceChildren();
  drawBacklog();
  drawGraph((n) => ROLE_COLORS[n.role]);
  const count = (role) => net.topology.nodes.filter((n) => n.role === role).length;
  report(`${count("server")} servers, ${count("client")} clients, ${count("relay")} relays, ${net.topology.links.length} links`);
}

function onBias() {
  if (!net) onGenerate();
  const type = Number($("type").value);
  const map = call(bias_map, JSON.stringify(request()), type);
  if (!map) return;
  const lo = Math.min(...map.bias);
  const hi = Math.max(...map.bias);
  drawGraph((n) => shade((map.bias[n.id] - lo) / (hi - lo || 1)));
  report(`type ${type}: bias ranges ${lo.toFixed(2)} to ${hi.toFixed(2)} (darker is closer to the sink)`);
}

function drawBacklog() {
  const ctx = backlog;
  const { width: w, height: h } = ctx.canvas;
  ctx.clearRect(0, 0, w, h);
  if (!runs.length) return;
  const tMax = Math.max(...runs.map((r) => r.backlog.length));
  const yMax = Math.max(1, ...runs.flatMap((r) => r.backlog));
  ctx.fillStyle = "#333";
  ctx.fillText(`jobs in system (max ${yMax})`, 6, 12);
  ctx.fillText(`slot ${tMax}`, w - 60, h - 4);
  runs.forEach((r, i) => {
    ctx.strokeStyle = SCHEME_COLORS[r.scheme];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    r.backlog.forEach((b, t) => {
      const x = (t / Math.max(1, tMax - 1)) * (w - 10) + 5;
      const y = h - 16 - (b / yMax) * (h - 36);
      t ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = SCHEME_COLORS[r.scheme];
    ctx.fillText(`${r.scheme} @ ${r.load}`, w - 130, 14 + 13 * i);
  });
}

function onSimulate() {
  if (!net) onGenerate();
  const req = {
    ...request(),
    scheme: $("scheme").value,
    load: Number($("load").value),
    horizon: Number($("horizon").value),
  };
  const run = call(simulate, JSON.stringify(req));
  if (!run) return;
  runs.push(run);
  if (runs.length > 6) runs.shift();
  drawBacklog();
  const most = Math.max(1, ...run.processed);
  drawGraph((n) => (run.processed[n.id] ? SCHEME_COLORS[run.scheme] : "#ccc"), (n) => 3 + 9 * Math.sqrt(run.processed[n.id] / most));
  const fmt = (v) => (v == null ? "-" : v.toFixed(2));
  const row = $("results").tBodies[0].insertRow();
  for (const v of [run.scheme, run.load, run.jobs, run.completed, fmt(run.median_makespan), fmt(run.median_hops)]) {
    row.insertCell().textContent = v;
  }
  report(`${run.scheme}: ${run.completed} of ${run.jobs} jobs completed; node size shows where jobs were processed`);
}

await init();
$("generate").onclick = onGenerate;
$("bias").onclick = onBias;
$("simulate").onclick = onSimulate;
onGenerate();
