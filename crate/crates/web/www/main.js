// Built with:
//   cargo build -p invisible-eit-web --target wasm32-unknown-unknown --release
//   wasm-bindgen --target web --out-dir crates/web/www/pkg \
//     target/wasm32-unknown-unknown/release/invisible_eit_web.wasm
import init, { potentialRaster, construct, dualBasisRaster } from "./pkg/invisible_eit_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function degrees() {
  const l = num("count");
  const offset = num("offset");
  return Array.from({ length: l }, (_, j) => offset + (j * 360) / l);
}

function omega() {
  const cx = num("cx");
  const radius = num("radius");
  return cx === 0
    ? { shape: "concentric_disk", radius }
    : { shape: "offset_disk", center: [cx, 0], radius };
}

function request(extra) {
  return JSON.stringify({
    degrees: degrees(),
    omega: omega(),
    target_h: num("h"),
    size: num("size"),
    ...extra,
  });
}

// Diverging blue–white–red map centred on `mid`.
function colour(v, lo, mid, hi) {
  if (v === null || Number.isNaN(v)) return [255, 255, 255];
  const t = v >= mid ? (hi > mid ? (v - mid) / (hi - mid) : 0) : lo < mid ? -(mid - v) / (mid - lo) : 0;
  const a = Math.min(1, Math.abs(t));
  return t >= 0
    ? [255, Math.round(255 * (1 - a)), Math.round(255 * (1 - a))]
    : [Math.round(255 * (1 - a)), Math.round(255 * (1 - a)), 255];
}

function draw(values, size, mid) {
  const finite = values.filter((v) => v !== null && Number.isFinite(v));
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (mid === undefined) {
    // robust range for fields with logarithmic singularities
    const sorted = [...finite].sort((a, b) => a - b);
    lo = sorted[Math.floor(0.02 * (sorted.length - 1))];
    hi = sorted[Math.floor(0.98 * (sorted.length - 1))];
    const m = Math.max(Math.abs(lo), Math.abs(hi));
    [lo, hi, mid] = [-m, m, 0];
  }
  const canvas = $("canvas");
  canvas.width = canvas.height = size;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(size, size);
  values.forEach((v, i) => {
    const [r, g, b] = colour(v, lo, mid, hi);
    img.data.set([r, g, b, 255], 4 * i);
  });
  ctx.putImageData(img, 0, 0);
  $("range").textContent = `range [${lo.toPrecision(4)}, ${hi.toPrecision(4)}]`;
}

function report(text, error) {
  $("log").textContent = text;
  $("log").className = error ? "error" : "";
}

function guarded(f) {
  return () => {
    report("working…");
    // yield so the status line paints before the synchronous computation
    setTimeout(() => {
      try {
        f();
      } catch (e) {
        report(String(e), true);
      }
    }, 10);
  };
}

async function main() {
  await init();
  $("run-potential").onclick = guarded(() => {
    const psi = document.querySelector("input[name=kind]:checked").value === "psi";
    const values = potentialRaster(new Float64Array(degrees()), num("index"), psi, num("size"));
    draw(Array.from(values), num("size"));
    report(psi ? `ψ_${num("index")}` : `u_${num("index")}`);
  });
  $("run-dual").onclick = guarded(() => {
    const values = dualBasisRaster(request({ k: num("k") }));
    draw(Array.from(values), num("size"));
    report(`dual function κ̃_${num("k")}`);
  });
  $("run-construct").onclick = guarded(() => {
    const out = JSON.parse(construct(request({ epsilon: num("epsilon"), seed: $("seed").value })));
    const values = out.sigma.values;
    const finite = values.filter((v) => v !== null);
    draw(values, out.sigma.size, 1);
    const lines = [
      `${out.converged ? "converged" : "not converged"} after ${out.iterations} iterations`,
      `ε used ${out.epsilon_used}${out.backoffs.length ? ` (${out.backoffs.length} backoffs)` : ""}`,
      `max |M(σ^ε)| = ${out.measurement_max.toExponential(3)}`,
      `max |M(1+εκ₀)| = ${out.unbalanced_max.toExponential(3)}`,
      `σ range [${Math.min(...finite).toFixed(4)}, ${Math.max(...finite).toFixed(4)}]`,
      `${out.elements} elements`,
      "",
      "iteration  discrepancy",
      ...out.history.map((r) => `${String(r.iteration).padStart(9)}  ${r.discrepancy.toExponential(3)}`),
    ];
    report(lines.join("\n"));
  });
  report("ready");
}

main().catch((e) => report(String(e), true));
