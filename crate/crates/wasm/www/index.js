import init, { Demo } from './pkg/cgraar_wasm.js';

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let demo = null;
let running = false;

function status(text) {
  $('status').textContent = text;
}

function drawImage(canvas, rgba, width) {
  if (!rgba.length) return;
  const tile = new OffscreenCanvas(width, width);
  tile.getContext('2d').putImageData(new ImageData(new Uint8ClampedArray(rgba), width, width), 0, 0);
  const ctx = canvas.getContext('2d');
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tile, 0, 0, canvas.width, canvas.height);
}

function plot(canvas, series, { xmax, ymin, ymax, guide }) {
  const ctx = canvas.getContext('2d');
  const { width: w, height: h } = canvas;
  const pad = 30;
  const x = (v) => pad + (v / xmax) * (w - pad - 8);
  const y = (v) => h - pad - ((v - ymin) / (ymax - ymin)) * (h - pad - 8);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = '#999';
  ctx.strokeRect(pad, 8, w - pad - 8, h - pad - 8);
  ctx.fillStyle = '#555';
  ctx.font = '11px sans-serif';
  ctx.fillText(ymax.toFixed(2), 2, 14);
  ctx.fillText(ymin.toFixed(2), 2, h - pad);
  ctx.fillText(String(+xmax.toFixed(3)), w - 40, h - 12);
  if (guide !== undefined) {
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(x(0), y(guide));
    ctx.lineTo(x(xmax), y(guide));
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const { points, color } of series) {
    ctx.strokeStyle = color;
    ctx.beginPath();
    let pen = false;
    for (const [px, py] of points) {
      if (py === null || !Number.isFinite(py)) { pen = false; continue; }
      const cy = y(Math.min(Math.max(py, ymin), ymax));
      pen ? ctx.lineTo(x(px), cy) : ctx.moveTo(x(px), cy);
      pen = true;
    }
    ctx.stroke();
  }
}

function drawTrace() {
  const t = demo.trace();
  const rows = t.length / 5;
  if (!rows) return;
  const total = [], inside = [], outside = [];
  for (let i = 0; i < rows; i++) {
    const [it, zeta, zeta0, zin, zout] = t.subarray(5 * i, 5 * i + 5);
    total.push([it, zeta / zeta0]);
    inside.push([it, zin / zeta0]);
    outside.push([it, zout / zeta0]);
  }
  const ymax = Math.max(1.2, ...total.map((p) => p[1]).filter(Number.isFinite));
  plot($('zetaPlot'), [
    { points: total, color: '#000' },
    { points: inside, color: '#1f5fbf' },
    { points: outside, color: '#e07b00' },
  ], { xmax: Math.max(rows, 1), ymin: 0, ymax: Math.min(ymax, 5), guide: 1 });
}

function simulate() {
  running = false;
  try {
    demo = new Demo($('phantom').value, num('window'), num('support'), num('photons'), num('beamstop'), BigInt(num('dataSeed')));
  } catch (e) {
    status(`simulate failed: ${e.message ?? e}`);
    return;
  }
  const w = demo.width();
  drawImage($('diffraction'), demo.diffractionImage(), w);
  drawImage($('phantomView'), demo.phantomImage(), w);
  $('iterate').getContext('2d').clearRect(0, 0, 256, 256);
  const s = JSON.parse(demo.summary());
  status(`${s.window}×${s.window} frame, ${s.support}×${s.support} support\n` +
    `${(100 * s.zero_count_fraction).toFixed(1)}% zero-count pixels, ${(100 * s.unmeasured_fraction).toFixed(1)}% unmeasured`);
  $('run').disabled = false;
  $('evaluate').disabled = true;
}

function run() {
  try {
    demo.start($('algo').value, num('beta'), num('main'), num('guided'), BigInt(num('runSeed')));
  } catch (e) {
    status(`start failed: ${e.message ?? e}`);
    return;
  }
  running = true;
  $('stop').disabled = false;
  $('evaluate').disabled = false;
  const w = demo.width();
  const tick = () => {
    if (!running) return;
    let s;
    try {
      s = JSON.parse(demo.step(w > 64 ? 5 : 20));
    } catch (e) {
      status(`stopped: ${e.message ?? e}`);
      running = false;
      return;
    }
    drawImage($('iterate'), demo.iterateImage(), w);
    drawTrace();
    status(`${s.phase} ${s.completed}/${s.total}   ζ/ζ₀ = ${(s.zeta / s.zeta0).toFixed(4)}   E_F = ${s.e_fourier.toExponential(3)}`);
    if (s.completed < s.total) requestAnimationFrame(tick);
    else { running = false; $('stop').disabled = true; }
  };
  requestAnimationFrame(tick);
}

function evaluate() {
  let e;
  try {
    e = JSON.parse(demo.evaluate());
  } catch (err) {
    status(`evaluate failed: ${err.message ?? err}`);
    return;
  }
  const points = e.prtf.bins.map((f, i) => [f, e.prtf.values[i]]);
  plot($('prtfPlot'), [{ points, color: '#1f5fbf' }],
    { xmax: e.prtf.bins[e.prtf.bins.length - 1], ymin: 0, ymax: 1.05, guide: Math.exp(-1) });
  const r = e.resolution;
  const res = r ? `${r.pixels.toFixed(2)} px${r.no_crossing ? ' (PRTF stays above 1/e)' : ''}` : 'undefined';
  status(`E_F = ${e.e_fourier.toExponential(3)}   E_R = ${e.e_real.toExponential(3)}   1/e resolution ${res}`);
}

await init();
$('simulate').onclick = simulate;
$('run').onclick = run;
$('stop').onclick = () => { running = false; $('stop').disabled = true; };
$('evaluate').onclick = evaluate;
simulate();
