import init, { analyze, phases, f1, sample_list, sample_bytes } from "./pkg/sysscope_web.js";

const $ = (id) => document.getElementById(id);
let current = { name: "", bytes: null };

function escape(s) {
  return String(s).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function resolution(r) {
  if (r.status === "numbers") return r.numbers.join(", ") || "(none)";
  return "unresolved: " + r.reason.reason;
}

function showAnalysis() {
  if (!current.bytes) return;
  const r = JSON.parse(analyze(current.name, current.bytes, $("wrappers").checked));
  if (r.error) {
    $("analysis").innerHTML = `<p class="error">${escape(r.error)}</p>`;
    return;
  }
  const calls = r.syscalls.map((s) => `${escape(s.name)} (${s.nr})`).join(", ") || "none";
  const rows = r.sites
    .map((s) => `<tr><td>${s.address}</td><td>${escape(s.function)}</td><td>${s.in_wrapper ? "yes" : ""}</td><td>${escape(resolution(s.resolution))}</td></tr>`)
    .join("");
  const wrappers = r.wrappers.map((w) => `${escape(w.function)} (number in ${escape(w.parameter)})`).join(", ");
  const libs = r.needed_libraries.length
    ? `<p>Needs ${r.needed_libraries.map(escape).join(", ")}; their syscalls are not included here.</p>`
    : "";
  $("analysis").innerHTML = `
    <p><b>${r.complete ? "Complete" : "Incomplete"}</b>: ${calls}</p>
    ${wrappers ? `<p>Wrappers: ${wrappers}</p>` : ""}
    ${libs}
    <table><tr><th>site</th><th>function</th><th>wrapper</th><th>numbers</th></tr>${rows}</table>`;
}

function showPhases() {
  if (!current.bytes) return;
  const tau = Number($("tau").value);
  $("tau-value").textContent = tau.toFixed(2);
  const r = JSON.parse(phases(current.name, current.bytes, tau, $("backprop").checked));
  $("phase-report").textContent = r.error ? r.error : r.text;
}

function showScore() {
  const r = JSON.parse(f1($("reported").value, $("observed").value));
  if (r.error) {
    $("f1-report").textContent = r.error;
    return;
  }
  $("f1-report").textContent = [
    `precision ${r.precision.exact} (${r.precision.value.toFixed(4)})`,
    `recall    ${r.recall.exact} (${r.recall.value.toFixed(4)})`,
    `F1        ${r.f1.exact} (${r.f1.value.toFixed(4)})`,
    `missed:   ${r.false_negatives.join(" ") || "-"}`,
    `extra:    ${r.false_positives.join(" ") || "-"}`,
  ].join("\n");
}

function refresh() {
  showAnalysis();
  showPhases();
}

function pickSample(samples) {
  const s = samples.find((x) => x.name === $("sample").value);
  current = { name: s.name, bytes: sample_bytes(s.name) };
  $("about").textContent = s.about;
  refresh();
}

await init();
const samples = JSON.parse(sample_list());
for (const s of samples) $("sample").add(new Option(s.name, s.name));
$("sample").addEventListener("change", () => pickSample(samples));
$("upload").addEventListener("change", async (e) => {
  const file = e.target.files[0];
  if (!file) return;
  current = { name: file.name, bytes: new Uint8Array(await file.arrayBuffer()) };
  $("about").textContent = `uploaded ${file.name}, ${file.size} bytes`;
  refresh();
});
$("wrappers").addEventListener("change", showAnalysis);
$("tau").addEventListener("input", showPhases);
$("backprop").addEventListener("change", showPhases);
$("reported").addEventListener("input", showScore);
$("observed").addEventListener("input", showScore);
pickSample(samples);
showScore();
