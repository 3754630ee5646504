import init, { generateScene, simulateCurves, overlapHistogram } from './pkg/annobudget_demo.js';

const $ = (id) => document.getElementById(id);
const SVG = 'http://www.w3.org/2000/svg';
const COLORS = ['#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf', '#393b79', '#637939'];
const SCALE = 3;

function el(tag, attrs = {}, text) {
  const e = document.createElementNS(SVG, tag);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  if (text !== undefined) e.textContent = text;
  return e;
}

// Row-major RLE, first run is background.
function paintRle(data, width, counts, rgb, alpha) {
  let pos = 0;
  counts.forEach((run, k) => {
    if (k % 2 === 1) {
      for (let p = pos; p < pos + run; p++) {
        const i = 4 * p;
        data[i] = data[i] * (1 - alpha) + rgb[0] * alpha;
        data[i + 1] = data[i + 1] * (1 - alpha) + rgb[1] * alpha;
        data[i + 2] = data[i + 2] * (1 - alpha) + rgb[2] * alpha;
      }
    }
    pos += run;
  });
}

const hex = (c) => [1, 3, 5].map((i) => parseInt(c.slice(i, i + 2), 16));

function drawScene() {
  const config = JSON.stringify({
    seed: Number($('scene-seed').value),
    overlap_pressure: Number($('scene-pressure').value),
    max_instances: Number($('scene-max').value),
  });
  let scene;
  try {
    scene = JSON.parse(generateScene(config, Number($('scene-frame').value)));
  } catch (e) {
    $('scene-table').innerHTML = `<tr><td class="bad">${e.message}</td></tr>`;
    return;
  }
  const { width, height, instances } = scene;
  const layer = $('show-approx').checked ? 'approx' : 'gt';

  const img = new ImageData(width, height);
  img.data.fill(255);
  instances.forEach((inst, k) => paintRle(img.data, width, inst[layer], hex(COLORS[k % COLORS.length]), 0.55));
  const small = new OffscreenCanvas(width, height);
  small.getContext('2d').putImageData(img, 0, 0);

  const canvas = $('scene-canvas');
  canvas.width = width * SCALE;
  canvas.height = height * SCALE;
  const ctx = canvas.getContext('2d');
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(small, 0, 0, canvas.width, canvas.height);

  if ($('show-boxes').checked) {
    instances.forEach((inst, k) => {
      const [x0, y0, x1, y1] = inst.bbox;
      ctx.strokeStyle = COLORS[k % COLORS.length];
      ctx.lineWidth = 1.5;
      ctx.strokeRect(x0 * SCALE, y0 * SCALE, (x1 - x0 + 1) * SCALE, (y1 - y0 + 1) * SCALE);
      ctx.fillStyle = '#000';
      for (const [r, c] of inst.news) {
        ctx.beginPath();
        ctx.arc((c + 0.5) * SCALE, (r + 0.5) * SCALE, 3, 0, 2 * Math.PI);
        ctx.fill();
      }
    });
  }

  const rows = instances.map((inst, k) => {
    const cls = inst.approx_iou > 0.6 ? '' : ' class="bad"';
    return `<tr><td style="color:${COLORS[k % COLORS.length]}">&#9632; ${inst.id}</td>` +
      `<td>${inst.iou_b.toFixed(3)}</td><td${cls}>${inst.approx_iou.toFixed(3)}</td></tr>`;
  });
  $('scene-table').innerHTML = '<tr><th>instance</th><th>box overlap</th><th>automatic-mask IoU</th></tr>' + rows.join('');
}

function axes(svg, m, w, h, xmax, xlabel, ylabel) {
  const g = el('g');
  g.append(el('line', { x1: m.l, y1: m.t + h, x2: m.l + w, y2: m.t + h, stroke: '#444' }));
  g.append(el('line', { x1: m.l, y1: m.t, x2: m.l, y2: m.t + h, stroke: '#444' }));
  for (let i = 0; i <= 5; i++) {
    const y = m.t + h - (h * i) / 5;
    g.append(el('line', { x1: m.l, y1: y, x2: m.l + w, y2: y, stroke: '#eee' }));
    g.append(el('text', { x: m.l - 6, y: y + 4, 'text-anchor': 'end' }, (i / 5).toFixed(1)));
  }
  for (let i = 0; i <= 8; i++) {
    const x = m.l + (w * i) / 8;
    g.append(el('text', { x, y: m.t + h + 16, 'text-anchor': 'middle' }, ((xmax * i) / 8).toFixed(xmax < 2 ? 2 : 1)));
  }
  g.append(el('text', { x: m.l + w / 2, y: m.t + h + 34, 'text-anchor': 'middle' }, xlabel));
  g.append(el('text', { x: 14, y: m.t + h / 2, transform: `rotate(-90 14 ${m.t + h / 2})`, 'text-anchor': 'middle' }, ylabel));
  svg.append(g);
}

function drawCurves() {
  $('curves-status').textContent = 'simulating…';
  // Let the status text paint before the blocking call.
  setTimeout(() => {
    const config = JSON.stringify({
      frames: Number($('curves-frames').value),
      seed: Number($('curves-seed').value),
      alpha: Number($('curves-alpha').value),
    });
    let data;
    try {
      data = JSON.parse(simulateCurves(config));
    } catch (e) {
      $('curves-status').textContent = e.message;
      return;
    }
    const metric = Number($('curves-metric').value);
    const svg = $('curves-svg');
    svg.replaceChildren();
    const m = { l: 50, r: 200, t: 10, b: 44 };
    const w = svg.width.baseVal.value - m.l - m.r;
    const h = svg.height.baseVal.value - m.t - m.b;
    const xmax = Math.max(...data.curves.flatMap((c) => c.points.map((p) => p[0])));
    const X = (v) => m.l + (w * v) / xmax;
    const Y = (v) => m.t + h - h * v;
    axes(svg, m, w, h, xmax, 'annotation time (h)', metric === 1 ? 'mean label IoU' : 'label PQ');

    const kx = X(data.keypoints_end_h);
    svg.append(el('line', { x1: kx, y1: m.t, x2: kx, y2: m.t + h, stroke: '#999', 'stroke-dasharray': '4 3' }));
    svg.append(el('text', { x: kx + 4, y: m.t + 12 }, 'all extreme points done'));

    data.curves.forEach((c, k) => {
      const pts = c.points.map((p) => `${X(p[0]).toFixed(1)},${Y(p[metric]).toFixed(1)}`).join(' ');
      svg.append(el('polyline', { points: pts, fill: 'none', stroke: COLORS[k], 'stroke-width': 2 }));
      const ly = m.t + 14 + 18 * k;
      svg.append(el('line', { x1: m.l + w + 16, y1: ly - 4, x2: m.l + w + 36, y2: ly - 4, stroke: COLORS[k], 'stroke-width': 3 }));
      svg.append(el('text', { x: m.l + w + 42, y: ly }, c.strategy));
    });
    $('curves-status').textContent = `${data.instances} instances`;
  }, 10);
}

function drawHistogram() {
  $('hist-status').textContent = 'computing…';
  setTimeout(() => {
    const config = JSON.stringify({ frames: Number($('hist-frames').value) });
    let hist;
    try {
      hist = JSON.parse(overlapHistogram(config, Number($('hist-width').value)));
    } catch (e) {
      $('hist-status').textContent = e.message;
      return;
    }
    const svg = $('hist-svg');
    svg.replaceChildren();
    const m = { l: 50, r: 20, t: 10, b: 44 };
    const w = svg.width.baseVal.value - m.l - m.r;
    const h = svg.height.baseVal.value - m.t - m.b;
    axes(svg, m, w, h, 1, 'box overlap with nearest other instance', 'share with IoU > 0.6');
    const bw = w / hist.bins.length;
    hist.bins.forEach((b, k) => {
      const x = m.l + k * bw;
      if (b.fraction === null) return;
      const bh = h * b.fraction;
      svg.append(el('rect', { x: x + 2, y: m.t + h - bh, width: bw - 4, height: bh, fill: COLORS[0], opacity: 0.8 }));
      svg.append(el('text', { x: x + bw / 2, y: m.t + h - bh - 4, 'text-anchor': 'middle' }, `n=${b.count}`));
    });
    $('hist-status').textContent = `${hist.bins.reduce((s, b) => s + b.count, 0)} instances`;
  }, 10);
}

await init();
for (const id of ['scene-seed', 'scene-frame', 'scene-pressure', 'scene-max', 'show-gt', 'show-approx', 'show-boxes']) {
  $(id).addEventListener('input', () => {
    $('scene-pressure-v').textContent = $('scene-pressure').value;
    drawScene();
  });
}
$('curves-run').addEventListener('click', drawCurves);
$('curves-metric').addEventListener('change', drawCurves);
$('hist-run').addEventListener('click', drawHistogram);
drawScene();
drawCurves();
drawHistogram();
