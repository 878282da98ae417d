/** SPA entry point: hash routing between the portfolio builder and the
 * run/compare view, a global error banner (every server error surfaces),
 * and single-run progress polling per portfolio view.
 */

import { ApiClient, ApiError } from "./api.js";
import { BuilderView } from "./builder.js";
import { ComparisonView, pollRun } from "./compare.js";
import { clear, el } from "./dom.js";

export function startApp(doc: Document, api: ApiClient, storage: Storage): void {
  const root = doc.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const banner = el(doc, "div", { class: "banner hidden", id: "error-banner" });
  root.appendChild(banner);
  const outlet = el(doc, "div", { id: "outlet" });
  root.appendChild(outlet);

  let retry: (() => void) | null = null;

  function showError(error: unknown): void {
    clear(banner);
    banner.className = "banner error";
    const message =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    banner.appendChild(el(doc, "span", {}, [message]));
    if (retry) {
      const button = el(doc, "button", { type: "button" }, ["retry"]);
      button.addEventListener("click", () => {
        banner.className = "banner hidden";
        retry?.();
      });
      banner.appendChild(button);
    }
  }

  function clearError(): void {
    clear(banner);
    banner.className = "banner hidden";
  }

  async function showBuilder(): Promise<void> {
    const builder = new BuilderView(doc, api, storage, {
      onSaved: (portfolioId) => {
        doc.defaultView!.location.hash = `#/portfolio/${portfolioId}`;
      },
      onError: showError,
    });
    try {
      await builder.load();
      clearError();
    } catch (err) {
      showError(err); // the draft survives in storage; retry re-enters
      return;
    }
    builder.render(outlet);
  }

  async function showPortfolio(portfolioId: string): Promise<void> {
    clear(outlet);
    const status = el(doc, "div", { id: "run-status" });
    const progress = el(doc, "progress", {
      id: "run-progress",
      max: "1",
      value: "0",
    }) as HTMLProgressElement;
    const launch = el(doc, "button", { id: "launch-run", type: "button" }, ["Run portfolio"]);
    const resultArea = el(doc, "div", { id: "result-area" });
    outlet.appendChild(el(doc, "h2", {}, [`Portfolio ${portfolioId}`]));
    outlet.appendChild(launch);
    outlet.appendChild(status);
    outlet.appendChild(progress);
    outlet.appendChild(resultArea);

    async function showResults(runId: string): Promise<void> {
      const view = new ComparisonView(doc, api, runId, showError);
      await view.load();
      view.render(resultArea);
    }

    launch.addEventListener("click", () => {
      launch.setAttribute("disabled", "disabled");
      api
        .launchRun(portfolioId)
        .then((run) =>
          pollRun(api, run.id, (p, s) => {
            progress.value = p;
            status.textContent = `run ${run.id}: ${s} (${Math.round(p * 100)}%)`;
          }).then(() => showResults(run.id)),
        )
        .catch(showError)
        .finally(() => launch.removeAttribute("disabled"));
    });

    // show the latest finished run, if any
    try {
      const { items } = await api.listRuns(portfolioId);
      const done = items.filter((r) => r.status === "done");
      if (done.length > 0) await showResults(done[done.length - 1].id);
      clearError();
    } catch (err) {
      showError(err);
    }
  }

  function route(): void {
    const hash = doc.defaultView!.location.hash || "#/builder";
    clear(outlet);
    retry = route;
    const match = hash.match(/^#\/portfolio\/(.+)$/);
    if (match) {
      void showPortfolio(match[1]);
    } else {
      void showBuilder();
    }
  }

  doc.defaultView!.addEventListener("hashchange", route);
  route();
}
