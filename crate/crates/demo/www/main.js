import init, { werner_ppt, learn_run, bound_curve } from "./pkg/ekl_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(el, text, error = false) {
  el.textContent = text;
  el.classList.toggle("err", error);
}

function plot(canvas, series, colors) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 30;
  ctx.clearRect(0, 0, width, height);
  const all = series.flat().filter(Number.isFinite);
  if (all.length === 0) return;
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi === lo) { hi += 1; lo -= 1; }
  const len = Math.max(...series.map((s) => s.length));
  const x = (i) => pad + (i / Math.max(len - 1, 1)) * (width - 2 * pad);
  const y = (v) => height - pad - ((v - lo) / (hi - lo)) * (height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, width - 2 * pad, height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(hi.toPrecision(4), 2, pad - 4);
  ctx.fillText(lo.toPrecision(4), 2, height - pad + 14);
  series.forEach((s, k) => {
    ctx.strokeStyle = colors[k];
    ctx.beginPath();
    s.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
    ctx.stroke();
  });
}

function updatePpt() {
  const w = num("w"), theta = num("theta");
  $("w-val").textContent = w.toFixed(3);
  $("theta-val").textContent = theta.toFixed(2);
  try {
    const r = werner_ppt(w, theta);
    const eig = Array.from(r.slice(2)).map((v) => v.toFixed(4)).join("  ");
    show($("ppt-out"), `${r[0] ? "entangled" : "ppt holds"}\nmin eigenvalue ${r[1].toFixed(6)}\npartial transpose spectrum  ${eig}`);
  } catch (e) {
    show($("ppt-out"), String(e), true);
  }
}

function runLearn() {
  const out = $("learn-out");
  show(out, "running...");
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const r = learn_run(num("n"), num("p"), num("d"), num("gamma"), num("rank"), num("lambda"), num("iters"), num("seed"));
      const ms = performance.now() - t0;
      const trace = Array.from(r.slice(5));
      plot($("trace"), [trace], ["#1f6feb"]);
      show(out, [
        `rank r = ${r[0]}, ${trace.length - 1} accepted steps, ${ms.toFixed(0)} ms`,
        `alignment objective ${trace[0].toFixed(4)} -> ${trace[trace.length - 1].toFixed(4)}`,
        `test nMSE: entangled ${r[1].toFixed(4)}, kernel ridge ${r[2].toFixed(4)}`,
        `learned operator: ${r[4] ? "entangled" : "ppt holds"} (min eigenvalue ${r[3].toExponential(3)})`,
      ].join("\n"));
    } catch (e) {
      show(out, String(e), true);
    }
  }, 10);
}

function updateBound() {
  try {
    const nmax = num("nmax");
    const v = bound_curve(num("beta"), num("kappa"), num("bp"), num("m"), num("delta"), num("emp"), nmax);
    const rad = Array.from(v.slice(0, nmax));
    const gen = Array.from(v.slice(nmax));
    plot($("bound"), [rad, gen], ["#1f6feb", "#d1242f"]);
    show($("bound-out"), `blue: Rademacher complexity, red: generalization bound\nat n = ${nmax}: ${rad[nmax - 1].toFixed(4)}, ${gen[nmax - 1].toFixed(4)}`);
  } catch (e) {
    show($("bound-out"), String(e), true);
  }
}

await init();
for (const id of ["w", "theta"]) $(id).addEventListener("input", updatePpt);
for (const id of ["beta", "kappa", "bp", "m", "delta", "emp", "nmax"]) $(id).addEventListener("input", updateBound);
$("learn").addEventListener("click", runLearn);
updatePpt();
updateBound();
runLearn();
