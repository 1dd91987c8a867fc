import init, { magnetic_phases, solenoid_field_lines, electric_phases } from "./pkg/abphase_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function rows(table, head, data) {
  table.innerHTML = "<tr>" + head.map((h) => `<th>${h}</th>`).join("") + "</tr>" +
    data.map((r) => "<tr>" + r.map((c) => `<td>${c}</td>`).join("") + "</tr>").join("");
}

function fail(el, e) {
  el.innerHTML = `<tr><td class="err">${e}</td></tr>`;
}

function magnetic() {
  const out = $("m-out");
  try {
    const p = magnetic_phases(num("m-a"), num("m-r"), num("m-x"), 1e-6);
    const names = ["wilson loop", "enclosed flux", "field overlap"];
    rows(out, ["method", "phase"], names.map((n, i) => [n, isNaN(p[i]) ? "n/a" : p[i].toFixed(8)]));
  } catch (e) {
    fail(out, e);
  }
}

function lines() {
  const c = $("l-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  let data;
  try {
    data = solenoid_field_lines(num("l-len"), Math.round(num("l-n")), Math.round(num("l-k")));
  } catch (e) {
    g.fillStyle = "#b00";
    g.fillText(String(e), 10, 20);
    return;
  }
  const half = num("l-len") / 2;
  const zmax = half * 1.6 + 1;
  const xmax = zmax * c.height / c.width;
  const sx = (z) => (z / zmax + 1) * c.width / 2;
  const sy = (x) => c.height - (x / xmax) * c.height;
  g.strokeStyle = "#999";
  g.strokeRect(sx(-half), sy(1) - 2, sx(half) - sx(-half), 4);
  g.strokeStyle = "#1f5fbf";
  let i = 0;
  while (i < data.length) {
    const n = data[i];
    g.beginPath();
    for (let k = 0; k < n; k++) {
      const x = data[i + 1 + 2 * k], z = data[i + 2 + 2 * k];
      k === 0 ? g.moveTo(sx(z), sy(x)) : g.lineTo(sx(z), sy(x));
    }
    g.stroke();
    i += 1 + 2 * n;
  }
}

function electric() {
  const out = $("e-out");
  const lo = num("e-lo"), hi = num("e-hi"), n = Math.round(num("e-n"));
  const data = [];
  try {
    for (let k = 0; k < n; k++) {
      const r = lo + (hi - lo) * k / (n - 1);
      const [pot, ovl, err] = electric_phases(r, 1e-4);
      data.push([r.toFixed(3), pot.toExponential(6), ovl.toExponential(6), err.toExponential(1), ((ovl - pot) / pot).toExponential(2)]);
    }
    rows(out, ["r", "potential", "overlap", "error est", "rel diff"], data);
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("m-go").onclick = magnetic;
$("l-go").onclick = lines;
$("e-go").onclick = electric;
magnetic();
lines();
