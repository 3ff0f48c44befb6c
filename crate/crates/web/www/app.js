import init, { explore, certify_pair, chi2_curve } from "./pkg/bosoncert_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, 4);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - 4, h - pad);
  ctx.stroke();
}

// Side-by-side bars for several series of equal length.
function bars(canvas, series, colors) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 24;
  axes(ctx, w, h, pad);
  const len = series[0].length;
  const top = Math.max(...series.flat(), 1e-12);
  const slot = (w - pad - 8) / len;
  const bw = Math.max(1, (slot * 0.8) / series.length);
  series.forEach((s, k) => {
    ctx.fillStyle = colors[k];
    s.forEach((v, i) => {
      const bh = ((h - pad - 8) * v) / top;
      ctx.fillRect(pad + 2 + i * slot + k * bw, h - pad - bh, bw, bh);
    });
  });
}

function show(id, text, failed = false) {
  $(id).textContent = text;
  $(id).className = failed ? "out err" : "out";
}

function runExplorer() {
  try {
    const r = JSON.parse(explore(num("ex-m"), num("ex-n"), BigInt(num("ex-seed")), 40));
    bars($("ex-plot"), [r.top.map((o) => o.boson), r.top.map((o) => o.distinguishable)], ["#2a6fdb", "#e08a1e"]);
    const lines = r.top.slice(0, 8).map(
      (o) => `[${o.state.join(",")}]  boson ${o.boson.toFixed(5)}  distinguishable ${o.distinguishable.toFixed(5)}`
    );
    show("ex-out", `D = ${r.dim}, fidelity(boson, distinguishable) = ${r.fidelity.toFixed(5)}\n` +
      `blue: bosons, orange: distinguishable particles (40 likeliest boson outcomes)\n` + lines.join("\n"));
  } catch (e) {
    show("ex-out", String(e.message ?? e), true);
  }
}

function runCertify() {
  try {
    const r = JSON.parse(certify_pair(
      num("ce-m"), num("ce-n"), BigInt(num("ce-seed")), $("ce-kind").value,
      BigInt(num("ce-nm")), num("ce-nb"), 0.01, BigInt(num("ce-run"))
    ));
    bars($("ce-plot"), [r.reference, r.candidate], ["#2a6fdb", "#d33"]);
    show("ce-out",
      `${r.bins} bins, chi2 = ${r.chi2.toFixed(2)} on ${r.df} df, p = ${r.p_value.toExponential(3)}: ` +
      (r.pass ? "PASS (consistent with the boson reference)" : "FAIL (rejected at 1%)"));
  } catch (e) {
    show("ce-out", String(e.message ?? e), true);
  }
}

function runCurve() {
  try {
    const r = JSON.parse(chi2_curve(num("cu-df"), num("cu-alpha"), 300));
    const canvas = $("cu-plot");
    const ctx = canvas.getContext("2d");
    const { width: w, height: h } = canvas;
    const pad = 24;
    axes(ctx, w, h, pad);
    const xmax = r.x[r.x.length - 1];
    const ymax = Math.max(...r.density.filter(Number.isFinite), 1e-12);
    const px = (x) => pad + ((w - pad - 8) * x) / xmax;
    const py = (y) => h - pad - ((h - pad - 8) * Math.min(y, ymax)) / ymax;
    ctx.strokeStyle = "#2a6fdb";
    ctx.beginPath();
    r.x.forEach((x, i) => (i ? ctx.lineTo(px(x), py(r.density[i])) : ctx.moveTo(px(x), py(r.density[i]))));
    ctx.stroke();
    ctx.strokeStyle = "#d33";
    ctx.setLineDash([5, 4]);
    ctx.beginPath();
    ctx.moveTo(px(r.cutoff), 4);
    ctx.lineTo(px(r.cutoff), h - pad);
    ctx.stroke();
    ctx.setLineDash([]);
    show("cu-out", `reject when chi2 > ${r.cutoff.toFixed(3)}`);
  } catch (e) {
    show("cu-out", String(e.message ?? e), true);
  }
}

await init();
$("ex-go").onclick = runExplorer;
$("ce-go").onclick = runCertify;
$("cu-go").onclick = runCurve;
runExplorer();
runCertify();
runCurve();
