/** End-to-end acceptance against a live service instance:
 *  - criterion: build portfolio -> run -> comparison renders with no
 *    client-side errors (builder flow drives the real API);
 *  - criterion: every box-plot median equals the summary.csv median to
 *    the displayed precision, and the metric switcher lists exactly the
 *    14 metric names.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { Window } from "happy-dom";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { BuilderView } from "../src/builder.js";
import { ComparisonView, pollRun } from "../src/compare.js";
import { formatMetric, median } from "../src/stats.js";

const PORT = 8300 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;

let proc: ChildProcess | null = null;
let workDir: string;
let dataDir: string;
let demoDir: string;

async function waitForService(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/metrics/names`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "capelin-e2e-"));
  dataDir = join(workDir, "data");
  demoDir = join(workDir, "demo");
  const python = process.env.PYTHON ?? "python3";
  const prep = spawn(python, ["-c", `from capelin.demo import write_demo; write_demo(${JSON.stringify(demoDir)})`]);
  await new Promise((resolve, reject) => {
    prep.on("exit", (code) => (code === 0 ? resolve(null) : reject(new Error(`demo writer exited ${code}`))));
  });
  proc = spawn(python, [
    "-c",
    [
      "import uvicorn",
      "from capelin.service import create_app",
      `uvicorn.run(create_app(${JSON.stringify(dataDir)}), host='127.0.0.1', port=${PORT}, log_level='warning')`,
    ].join("; "),
  ]);
  await waitForService();
}, 90_000);

afterAll(() => {
  proc?.kill();
});

describe("live service end-to-end", () => {
  const api = new ApiClient(BASE);
  let portfolioId: string;
  let runId: string;

  it("builder flow: topology, candidates, trace, targets, save", async () => {
    const window = new Window({ url: `${BASE}/ui/` });
    const doc = window.document as unknown as Document;
    const errors: unknown[] = [];

    const topologyDoc = JSON.parse(readFileSync(join(demoDir, "topology.json"), "utf-8"));
    const { id: topologyId } = await api.postTopology(topologyDoc);
    const { id: traceId } = await api.registerTrace(join(demoDir, "trace"), "canonical");

    const storage = window.localStorage as unknown as Storage;
    let savedId = "";
    const builder = new BuilderView(doc, api, storage, {
      onSaved: (id) => {
        savedId = id;
      },
      onError: (err) => errors.push(err),
    });
    await builder.load();
    builder.draft.topology_id = topologyId;
    builder.draft.trace_id = traceId;
    builder.draft.repetitions = 4;
    builder.draft.phenomena_mode = "all";

    await builder.generateCandidates();
    expect(builder.draft.candidates.length).toBe(12);

    // keep two volume-replace candidates for the comparison
    for (const candidate of builder.draft.candidates) {
      candidate.enabled =
        candidate.label === "replace-volume-horizontal-homogeneous" ||
        candidate.label === "replace-volume-vertical-homogeneous";
    }
    builder.draft.slos = [
      { metric: "total_failed_vm_slices", comparator: "<=", threshold: 100000 },
    ];

    const container = doc.createElement("div");
    builder.render(container);
    // candidate list renders with dimension badges
    const items = container.querySelectorAll("#candidate-list li");
    expect(items.length).toBe(12);
    expect(container.querySelectorAll("#candidate-list .badge").length).toBeGreaterThan(0);

    portfolioId = await builder.save();
    expect(portfolioId).toBeTruthy();
    expect(errors).toEqual([]);
    window.close();
  }, 60_000);

  it("run flow: launch, poll progress to done", async () => {
    const run = await api.launchRun(portfolioId, { repetitions: 4 });
    runId = run.id;
    const progress: number[] = [];
    const status = await pollRun(api, runId, (p) => progress.push(p), 100);
    expect(status).toBe("done");
    expect(progress[progress.length - 1]).toBe(1);
    // progress is monotone non-decreasing
    for (let i = 1; i < progress.length; i++) {
      expect(progress[i]).toBeGreaterThanOrEqual(progress[i - 1]);
    }
  }, 120_000);

  it("comparison renders box plots, SLO line, and recommendation without errors", async () => {
    const window = new Window({ url: `${BASE}/ui/` });
    const doc = window.document as unknown as Document;
    const errors: unknown[] = [];
    const view = new ComparisonView(doc, api, runId, (err) => errors.push(err));
    await view.load();
    view.metric = "total_failed_vm_slices";
    const container = doc.createElement("div");
    view.render(container);

    expect(errors).toEqual([]);
    const boxes = container.querySelectorAll("g.box");
    expect(boxes.length).toBe(3); // base + 2 candidates
    expect(container.querySelectorAll("line.slo-line").length).toBe(1);
    const recommendation = container.querySelectorAll("#recommendation li");
    expect(recommendation.length).toBeGreaterThan(0);
    window.close();
  }, 60_000);

  it("metric switcher lists exactly the 14 metric names", async () => {
    const window = new Window({ url: `${BASE}/ui/` });
    const doc = window.document as unknown as Document;
    const view = new ComparisonView(doc, api, runId, () => {});
    await view.load();
    const container = doc.createElement("div");
    view.render(container);
    const { metrics } = await api.metricNames();
    const options = [...container.querySelectorAll("#metric-switcher option")].map((o) =>
      o.getAttribute("value"),
    );
    expect(options).toEqual(metrics);
    expect(options.length).toBe(14);
    window.close();
  }, 60_000);

  it("box plot medians equal summary.csv medians to displayed precision", async () => {
    const results = await api.getResults(runId);
    const summaryPath = join(dataDir, "runs", runId, "summary.csv");
    const lines = readFileSync(summaryPath, "utf-8").trim().split("\n");
    const header = lines[0].split(",");
    const scenarioCol = header.indexOf("scenario_id");
    const metricCol = header.indexOf("metric");
    const medianCol = header.indexOf("median");
    const csvMedians = new Map<string, number>();
    for (const line of lines.slice(1)) {
      const cells = line.split(",");
      csvMedians.set(`${cells[scenarioCol]}|${cells[metricCol]}`, Number(cells[medianCol]));
    }
    const { metrics } = await api.metricNames();
    let checked = 0;
    for (const metric of metrics) {
      const byScenario = new Map<string, number[]>();
      for (const row of results.rows) {
        const bucket = byScenario.get(row.scenario_id) ?? [];
        bucket.push(Number(row[metric]));
        byScenario.set(row.scenario_id, bucket);
      }
      for (const [scenario, values] of byScenario) {
        const fromRows = median(values);
        const fromCsv = csvMedians.get(`${scenario}|${metric}`);
        expect(fromCsv).toBeDefined();
        expect(formatMetric(fromRows)).toBe(formatMetric(fromCsv as number));
        checked += 1;
      }
    }
    expect(checked).toBe(14 * 3);
  }, 60_000);

  it("server errors surface verbatim through the client", async () => {
    await expect(api.getResults("nonexistent")).rejects.toMatchObject({
      status: 404,
      code: "not_found",
    });
  });
});
