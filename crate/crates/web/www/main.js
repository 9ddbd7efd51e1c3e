import init, { graph, refine, Trainer } from "./pkg/get_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(el, err) {
  el.innerHTML = `<span class="err">${String(err.message ?? err)}</span>`;
}

function circleLayout(n, w, h) {
  const r = Math.min(w, h) / 2 - 40;
  return Array.from({ length: n }, (_, i) => {
    const a = (2 * Math.PI * i) / Math.max(n, 1) - Math.PI / 2;
    return [w / 2 + r * Math.cos(a), h / 2 + r * Math.sin(a)];
  });
}

function drawGraph(ctx, ox, oy, w, h, words, edges, live) {
  const pos = circleLayout(words.length, w, h).map(([x, y]) => [x + ox, y + oy]);
  ctx.strokeStyle = "#9ab";
  for (const [a, b] of edges) {
    if (live && (!live[a] || !live[b])) continue;
    ctx.beginPath();
    ctx.moveTo(...pos[a]);
    ctx.lineTo(...pos[b]);
    ctx.stroke();
  }
  ctx.font = "12px system-ui";
  ctx.textAlign = "center";
  words.forEach((word, i) => {
    const on = !live || live[i];
    ctx.fillStyle = on ? "#2a6" : "#ccc";
    ctx.beginPath();
    ctx.arc(pos[i][0], pos[i][1], 5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = on ? "#222" : "#bbb";
    ctx.fillText(word, pos[i][0], pos[i][1] - 9);
  });
}

function runGraph() {
  const ctx = $("g-canvas").getContext("2d");
  ctx.clearRect(0, 0, 460, 380);
  try {
    const g = JSON.parse(graph($("g-text").value, num("g-window")));
    drawGraph(ctx, 0, 0, 460, 380, g.node_words, g.edges, null);
    const rows = g.adj_norm.map((r, i) => `${g.node_words[i].padEnd(8)} ${r.map((v) => v.toFixed(2)).join(" ")}`);
    $("g-info").textContent = `${g.node_words.length} nodes, ${g.edges.length} edges\n\n${rows.join("\n")}`;
  } catch (e) {
    show($("g-info"), e);
  }
}

function runRefine() {
  const canvas = $("r-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  try {
    const out = JSON.parse(refine($("g-text").value, num("g-window"), num("r-rate"), num("r-layers"), num("r-seed")));
    const panels = [null, ...out.layers.map((l) => l.live)];
    const w = canvas.width / panels.length;
    panels.forEach((live, i) => {
      drawGraph(ctx, i * w, 20, w, canvas.height - 20, out.words, out.edges, live);
      ctx.fillStyle = "#555";
      ctx.textAlign = "left";
      const dropped = i === 0 ? "" : ` (-${out.layers[i - 1].discarded.length})`;
      ctx.fillText(i === 0 ? "input" : `after layer ${i}${dropped}`, i * w + 8, 14);
    });
  } catch (e) {
    ctx.fillStyle = "#b00";
    ctx.fillText(String(e.message ?? e), 10, 20);
  }
}

let trainer = null;
let history = [];

function newRun() {
  try {
    trainer = new Trainer(num("t-seed"), num("t-red"), num("t-rate"));
    history = [];
    plot();
    $("t-info").textContent = "";
  } catch (e) {
    show($("t-info"), e);
  }
}

function plot() {
  const canvas = $("t-canvas");
  const ctx = canvas.getContext("2d");
  const [w, h, pad] = [canvas.width, canvas.height, 30];
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(pad, 10, w - pad - 10, h - pad - 10);
  ctx.fillStyle = "#555";
  ctx.fillText("1", 8, 16);
  ctx.fillText("0", 8, h - pad);
  ctx.fillText(`epoch ${history.length}`, w - 80, h - 8);
  const maxLoss = Math.max(1, ...history.map((p) => p.loss));
  const series = [
    ["loss", "#c33", (p) => p.loss / maxLoss],
    ["train F1", "#36c", (p) => p.train_f1],
    ["test F1", "#2a6", (p) => p.test_f1],
  ];
  const n = Math.max(history.length, 2);
  series.forEach(([name, color, f], k) => {
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.fillText(name, pad + 10 + k * 80, h - 8);
    ctx.beginPath();
    history.forEach((p, i) => {
      const x = pad + ((w - pad - 10) * i) / (n - 1);
      const y = 10 + (h - pad - 10) * (1 - f(p));
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
  });
}

function step(times) {
  if (!trainer) newRun();
  try {
    for (let i = 0; i < times; i++) history.push(JSON.parse(trainer.step()));
    plot();
    const last = history[history.length - 1];
    $("status").textContent = `epoch ${last.epoch}: loss ${last.loss.toFixed(4)}, test F1 ${last.test_f1.toFixed(3)}, test acc ${last.test_acc.toFixed(3)}`;
  } catch (e) {
    show($("t-info"), e);
  }
}

function inspect() {
  if (!trainer) newRun();
  try {
    const r = JSON.parse(trainer.inspect(num("t-idx")));
    const evs = r.evidences
      .map((e) => {
        const words = e.words.map((w, i) => (e.kept && !e.kept[i] ? `<span class="gone">${w}</span>` : w)).join(" ");
        return `<li>attention ${e.attention.toFixed(3)}: ${words}</li>`;
      })
      .join("");
    $("t-info").innerHTML = `<p><b>${r.claim.join(" ")}</b><br>gold ${r.gold}, P(true) = ${r.p_true.toFixed(3)}</p><ol>${evs}</ol>`;
  } catch (e) {
    show($("t-info"), e);
  }
}

await init();
$("status").textContent = "Ready.";
$("g-run").onclick = runGraph;
$("r-run").onclick = runRefine;
$("t-new").onclick = newRun;
$("t-step").onclick = () => step(1);
$("t-ten").onclick = () => step(10);
$("t-inspect").onclick = inspect;
runGraph();
runRefine();
