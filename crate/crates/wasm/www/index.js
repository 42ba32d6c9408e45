import init, { rewrite_sql, sample_plan, check_frozen } from "./pkg/schemaloc_wasm.js";

const $ = (id) => document.getElementById(id);

function show(id, fn) {
  const out = $(id);
  try {
    const r = fn();
    out.className = r.ok === false ? "error" : "";
    out.textContent = r.text;
  } catch (e) {
    out.className = "error";
    out.textContent = e.message ?? String(e);
  }
}

function rewrite() {
  show("rewrite-out", () => ({ text: rewrite_sql($("mapping").value, $("sql").value, $("invert").checked) }));
}

function sample() {
  show("sample-out", () => {
    const correct = $("correct").value === "" ? undefined : Number($("correct").value);
    const plan = JSON.parse(sample_plan(
      Number($("population").value),
      Number($("confidence").value),
      Number($("margin").value),
      Number($("seed").value),
      correct,
    ));
    const lines = [
      `z = ${plan.z.toFixed(4)}`,
      `n0 = ${plan.n0}`,
      `n = ${plan.n} (of ${plan.population})`,
      `first ids: ${plan.sample_ids.slice(0, 12).join(", ")}${plan.n > 12 ? ", ..." : ""}`,
    ];
    if (plan.estimate) {
      const pct = (x) => (100 * x).toFixed(2) + "%";
      const est = plan.estimate;
      lines.push(`accuracy = ${pct(est.point)}  [${pct(est.lower)}, ${pct(est.upper)}]`);
    }
    return { text: lines.join("\n") };
  });
}

function frozen() {
  show("frozen-out", () => {
    const v = JSON.parse(check_frozen($("q").value, $("e").value, $("q-tr").value, $("e-tr").value));
    if (v.passed) {
      return { text: "kept" + (v.warnings.length ? `\nwarnings: ${v.warnings.join(", ")}` : "") };
    }
    const rows = v.violations.map((x) => `${x.kind} ${JSON.stringify(x.token)}: expected ${x.expected}, found ${x.found}`);
    return { ok: false, text: rows.join("\n") };
  });
}

await init();
$("mapping").value = await (await fetch("mapping.json")).text();
$("rewrite").onclick = rewrite;
$("sample").onclick = sample;
$("frozen").onclick = frozen;
rewrite();
sample();
frozen();
