/** Run-and-compare flow: launch a run, poll its progress, then render
 * per-metric box plots across repetitions grouped by scenario, SLO
 * reference lines, and the recommendation panel.
 *
 * All box statistics are recomputed here from the fetched raw rows;
 * nothing numeric is trusted from a second source.
 */

import { ApiClient, PlanEntry, ResultRow, RunResults } from "./api.js";
import { renderBoxPlot, SloLine } from "./boxplot.js";
import { clear, el } from "./dom.js";
import { boxStats, formatMetric } from "./stats.js";

export interface SloSpec {
  metric: string;
  comparator: string;
  threshold: number;
}

export function metricValuesByScenario(
  rows: ResultRow[],
  metric: string,
): Map<string, number[]> {
  const grouped = new Map<string, number[]>();
  for (const row of rows) {
    const value = Number(row[metric]);
    const bucket = grouped.get(row.scenario_id);
    if (bucket) bucket.push(value);
    else grouped.set(row.scenario_id, [value]);
  }
  return grouped;
}

export function buildComparisonModel(rows: ResultRow[], metric: string) {
  return [...metricValuesByScenario(rows, metric).entries()].map(([label, values]) => ({
    label,
    stats: boxStats(values),
  }));
}

export class ComparisonView {
  metric: string;
  private metricNames: string[] = [];
  private results: RunResults | null = null;
  private slos: SloSpec[] = [];

  constructor(
    private doc: Document,
    private api: ApiClient,
    private runId: string,
    private onError: (error: unknown) => void,
  ) {
    this.metric = "total_overcommitted_mflop";
  }

  async load(): Promise<void> {
    const [names, results] = await Promise.all([
      this.api.metricNames(),
      this.api.getResults(this.runId),
    ]);
    this.metricNames = names.metrics;
    this.results = results;
    const portfolio = await this.api.getPortfolio(results.portfolio_id);
    const targets = (portfolio.document.targets ?? {}) as { slos?: SloSpec[] };
    this.slos = targets.slos ?? [];
  }

  sloLinesFor(metric: string): SloLine[] {
    return this.slos
      .filter((s) => s.metric === metric)
      .map((s) => ({
        value: s.threshold,
        label: `SLO ${s.comparator} ${formatMetric(s.threshold)}`,
      }));
  }

  render(container: Element): void {
    const doc = this.doc;
    clear(container);
    if (!this.results) return;
    const view = el(doc, "div", { class: "comparison" });

    const switcher = el(doc, "select", { id: "metric-switcher" }) as HTMLSelectElement;
    for (const name of this.metricNames) {
      const opt = el(doc, "option", { value: name }, [name]) as HTMLOptionElement;
      if (name === this.metric) opt.setAttribute("selected", "selected");
      switcher.appendChild(opt);
    }
    switcher.addEventListener("change", () => {
      this.metric = switcher.value;
      this.render(container);
    });
    view.appendChild(el(doc, "label", {}, ["Metric ", switcher]));

    const groups = buildComparisonModel(this.results.rows, this.metric);
    const plot = renderBoxPlot(doc, groups, { sloLines: this.sloLinesFor(this.metric) });
    view.appendChild(el(doc, "div", { class: "plot", id: "plot" }, [plot]));

    const medians = el(doc, "table", { class: "medians", id: "median-table" });
    medians.appendChild(
      el(doc, "tr", {}, [el(doc, "th", {}, ["scenario"]), el(doc, "th", {}, ["median"])]),
    );
    for (const group of groups) {
      medians.appendChild(
        el(doc, "tr", {}, [
          el(doc, "td", {}, [group.label]),
          el(doc, "td", { class: "median-value" }, [formatMetric(group.stats.median)]),
        ]),
      );
    }
    view.appendChild(medians);

    view.appendChild(this.renderRecommendation());
    view.appendChild(
      el(doc, "p", { class: "footer-note" }, [
        "Box statistics are recomputed from raw repetition rows; quartiles use ",
        "linear interpolation on (n - 1) · p positions (inclusive method).",
      ]),
    );
    container.appendChild(view);
  }

  private renderRecommendation(): HTMLElement {
    const doc = this.doc;
    const panel = el(doc, "div", { class: "recommendation", id: "recommendation" });
    panel.appendChild(el(doc, "h3", {}, ["Recommended plan"]));
    const rec = this.results?.recommendation;
    if (!rec) {
      panel.appendChild(el(doc, "p", {}, ["no recommendation available"]));
      return panel;
    }
    if (rec.best_effort) {
      panel.appendChild(
        el(doc, "p", { class: "warning" }, [
          "best effort: no scenario satisfies every SLO",
        ]),
      );
    }
    const list = el(doc, "ol", {});
    for (const entry of rec.entries as PlanEntry[]) {
      const parts: string[] = [`cores ${entry.total_cores}`];
      for (const [key, value] of Object.entries(entry.justification)) {
        if (key === "total_cores") continue;
        parts.push(`${key} ${formatMetric(Number(value))}`);
      }
      const item = el(doc, "li", { "data-scenario": entry.scenario_id }, [
        el(doc, "strong", {}, [entry.scenario_id]),
        ` — ${parts.join(", ")}`,
      ]);
      if (entry.violated_slos.length > 0) {
        item.appendChild(
          el(doc, "span", { class: "violations" }, [
            ` violates: ${entry.violated_slos.join("; ")}`,
          ]),
        );
      }
      list.appendChild(item);
    }
    panel.appendChild(list);
    return panel;
  }
}

/** Poll a run until it reaches a terminal state, reporting progress. */
export async function pollRun(
  api: ApiClient,
  runId: string,
  onProgress: (progress: number, status: string) => void,
  intervalMs = 500,
  timeoutMs = 10 * 60 * 1000,
): Promise<string> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const run = await api.getRun(runId);
    onProgress(run.progress, run.status);
    if (run.status === "done") return run.status;
    if (run.status === "failed") {
      throw new Error(run.error ?? "run failed");
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
  throw new Error("timed out waiting for the run to finish");
}
