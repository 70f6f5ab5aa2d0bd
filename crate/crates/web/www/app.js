import init, { authorize, turtle_roundtrip, compare_modes, sample_scenario } from "./pkg/kbauthz_web.js";

const $ = (id) => document.getElementById(id);

function show(id, fn) {
  const out = $(id);
  try {
    out.textContent = fn();
    out.classList.remove("error");
  } catch (e) {
    out.textContent = String(e);
    out.classList.add("error");
  }
}

await init();

$("run-authorize").addEventListener("click", () =>
  show("authorize-out", () =>
    authorize($("facts").value, $("registration").value, $("action").value, $("body").value, $("mode").value)));

$("run-roundtrip").addEventListener("click", () =>
  show("roundtrip-out", () => turtle_roundtrip($("turtle").value)));

const loadSample = () => { $("scenario").value = sample_scenario($("sample").value) ?? ""; };
$("sample").addEventListener("change", loadSample);
loadSample();

$("run-compare").addEventListener("click", () =>
  show("compare-out", () => compare_modes($("scenario").value)));
