/** Portfolio builder: draft model, client-side validation mirroring the
 * server schema (the server stays authoritative), and the form flow --
 * pick a base topology and trace, generate candidates server-side, toggle
 * policies and phenomena, set SLO targets, save.
 *
 * The draft is persisted to localStorage on every edit, so an unreachable
 * service loses nothing.
 */

import { ApiClient, ApiError, CandidateInfo, StoredTopology, StoredTrace } from "./api.js";
import { Child, clear, el } from "./dom.js";

export const POLICIES = [
  "active-servers",
  "active-servers-inv",
  "mem",
  "mem-inv",
  "core-mem",
  "core-mem-inv",
  "random",
] as const;

export const PHENOMENA_MODES = ["none", "failures", "interference", "all"] as const;

export interface SloDraft {
  metric: string;
  comparator: "<=" | ">=";
  threshold: number | null;
}

export interface CandidateDraft {
  topology_id: string;
  label: string;
  enabled: boolean;
}

export interface PortfolioDraft {
  topology_id: string | null;
  trace_id: string | null;
  fraction: number;
  policy: string;
  phenomena_mode: string;
  repetitions: number;
  candidates: CandidateDraft[];
  slos: SloDraft[];
}

export interface FieldError {
  field: string;
  message: string;
}

export function emptyDraft(): PortfolioDraft {
  return {
    topology_id: null,
    trace_id: null,
    fraction: 1.0,
    policy: "active-servers",
    phenomena_mode: "none",
    repetitions: 32,
    candidates: [],
    slos: [],
  };
}

/** Mirror of the server-side schema checks; the server remains authoritative. */
export function validateDraft(draft: PortfolioDraft, metricNames: string[]): FieldError[] {
  const errors: FieldError[] = [];
  if (!draft.topology_id) errors.push({ field: "topology", message: "select a base topology" });
  if (!draft.trace_id) errors.push({ field: "trace", message: "select a workload trace" });
  if (!(draft.fraction >= 0 && draft.fraction <= 1)) {
    errors.push({ field: "fraction", message: "fraction must be in [0, 1]" });
  }
  if (!Number.isInteger(draft.repetitions) || draft.repetitions < 1) {
    errors.push({ field: "repetitions", message: "repetitions must be an integer >= 1" });
  }
  if (!POLICIES.includes(draft.policy as (typeof POLICIES)[number])) {
    errors.push({ field: "policy", message: `unknown policy ${draft.policy}` });
  }
  if (!PHENOMENA_MODES.includes(draft.phenomena_mode as (typeof PHENOMENA_MODES)[number])) {
    errors.push({ field: "phenomena", message: `unknown phenomena mode ${draft.phenomena_mode}` });
  }
  draft.slos.forEach((slo, i) => {
    if (!metricNames.includes(slo.metric)) {
      errors.push({ field: `slos[${i}].metric`, message: `unknown metric ${slo.metric}` });
    }
    if (slo.comparator !== "<=" && slo.comparator !== ">=") {
      errors.push({ field: `slos[${i}].comparator`, message: "comparator must be <= or >=" });
    }
    if (slo.threshold === null || !Number.isFinite(slo.threshold)) {
      errors.push({ field: `slos[${i}].threshold`, message: "threshold must be finite" });
    }
  });
  return errors;
}

/** A base-only portfolio (no candidates enabled) is allowed. */
export function draftToDocument(draft: PortfolioDraft): Record<string, unknown> {
  const workload = { trace_id: draft.trace_id, path: "", fraction: draft.fraction };
  const scenario = (scenarioId: string, topologyId: string) => ({
    scenario_id: scenarioId,
    topology: { topology_id: topologyId },
    workload,
    policy: draft.policy,
    phenomena: { mode: draft.phenomena_mode },
  });
  return {
    base: scenario("base", draft.topology_id as string),
    candidates: draft.candidates
      .filter((c) => c.enabled)
      .map((c) => scenario(c.label, c.topology_id)),
    targets: {
      slos: draft.slos.map((s) => ({
        metric: s.metric,
        comparator: s.comparator,
        threshold: s.threshold,
      })),
    },
    repetitions: draft.repetitions,
  };
}

const DRAFT_KEY = "capelin-portfolio-draft";

export function saveDraft(storage: Storage, draft: PortfolioDraft): void {
  storage.setItem(DRAFT_KEY, JSON.stringify(draft));
}

export function loadDraft(storage: Storage): PortfolioDraft {
  const raw = storage.getItem(DRAFT_KEY);
  if (!raw) return emptyDraft();
  try {
    return { ...emptyDraft(), ...(JSON.parse(raw) as PortfolioDraft) };
  } catch {
    return emptyDraft();
  }
}

export interface BuilderCallbacks {
  onSaved(portfolioId: string): void;
  onError(error: unknown): void;
}

/** Form flow for building and saving a portfolio. */
export class BuilderView {
  draft: PortfolioDraft;
  private topologies: StoredTopology[] = [];
  private traces: StoredTrace[] = [];
  private metricNames: string[] = [];
  private inlineErrors: FieldError[] = [];

  constructor(
    private doc: Document,
    private api: ApiClient,
    private storage: Storage,
    private callbacks: BuilderCallbacks,
  ) {
    this.draft = loadDraft(storage);
  }

  async load(): Promise<void> {
    const [topologies, traces, metrics] = await Promise.all([
      this.api.listTopologies(),
      this.api.listTraces(),
      this.api.metricNames(),
    ]);
    // candidate topologies have a dimensions record; base picker hides them
    this.topologies = topologies.items.filter((t) => !t.dimensions);
    this.traces = traces.items;
    this.metricNames = metrics.metrics;
  }

  private edit(mutate: (draft: PortfolioDraft) => void): void {
    mutate(this.draft);
    saveDraft(this.storage, this.draft);
  }

  async generateCandidates(): Promise<void> {
    if (!this.draft.topology_id) {
      this.inlineErrors = [{ field: "topology", message: "select a base topology first" }];
      return;
    }
    const { items } = await this.api.generateCandidates(this.draft.topology_id);
    this.edit((d) => {
      d.candidates = items.map((c: CandidateInfo) => ({
        topology_id: c.id as string,
        label: c.label,
        enabled: true,
      }));
    });
  }

  async save(): Promise<string> {
    this.inlineErrors = validateDraft(this.draft, this.metricNames);
    if (this.inlineErrors.length > 0) {
      throw new ApiError(0, "invalid_draft", this.inlineErrors.map((e) => e.message).join("; "));
    }
    const { id } = await this.api.postPortfolio(draftToDocument(this.draft));
    return id;
  }

  private errorFor(field: string): Child[] {
    const err = this.inlineErrors.find((e) => e.field === field || e.field.startsWith(field));
    return err ? [el(this.doc, "span", { class: "field-error" }, [err.message])] : [];
  }

  render(container: Element): void {
    const doc = this.doc;
    clear(container);
    const form = el(doc, "div", { class: "builder" });

    const topoSelect = el(doc, "select", { id: "base-topology" }) as HTMLSelectElement;
    topoSelect.appendChild(el(doc, "option", { value: "" }, ["-- choose --"]));
    for (const t of this.topologies) {
      const opt = el(doc, "option", { value: t.id }, [
        `${t.document.name} (${t.document.clusters.length} clusters)`,
      ]) as HTMLOptionElement;
      if (t.id === this.draft.topology_id) opt.setAttribute("selected", "selected");
      topoSelect.appendChild(opt);
    }
    topoSelect.addEventListener("change", () =>
      this.edit((d) => {
        d.topology_id = topoSelect.value || null;
      }),
    );
    form.appendChild(
      el(doc, "label", {}, ["Base topology ", topoSelect, ...this.errorFor("topology")]),
    );

    const traceSelect = el(doc, "select", { id: "trace" }) as HTMLSelectElement;
    traceSelect.appendChild(el(doc, "option", { value: "" }, ["-- choose --"]));
    for (const t of this.traces) {
      const opt = el(doc, "option", { value: t.id }, [
        `${t.document.path} (${t.vm_count} VMs)`,
      ]) as HTMLOptionElement;
      if (t.id === this.draft.trace_id) opt.setAttribute("selected", "selected");
      traceSelect.appendChild(opt);
    }
    traceSelect.addEventListener("change", () =>
      this.edit((d) => {
        d.trace_id = traceSelect.value || null;
      }),
    );
    form.appendChild(el(doc, "label", {}, ["Workload trace ", traceSelect, ...this.errorFor("trace")]));

    const generate = el(doc, "button", { id: "generate-candidates", type: "button" }, [
      "Generate candidate topologies",
    ]);
    generate.addEventListener("click", () => {
      this.generateCandidates()
        .then(() => this.render(container))
        .catch((err) => this.callbacks.onError(err));
    });
    form.appendChild(generate);

    const candidateList = el(doc, "ul", { class: "candidates", id: "candidate-list" });
    for (const candidate of this.draft.candidates) {
      const checkbox = el(doc, "input", { type: "checkbox" }) as HTMLInputElement;
      checkbox.checked = candidate.enabled;
      checkbox.addEventListener("change", () =>
        this.edit(() => {
          candidate.enabled = checkbox.checked;
        }),
      );
      const badges = candidate.label
        .split("-")
        .map((dim) => el(doc, "span", { class: "badge" }, [dim]));
      candidateList.appendChild(el(doc, "li", {}, [checkbox, candidate.label, " ", ...badges]));
    }
    form.appendChild(candidateList);

    const policySelect = el(doc, "select", { id: "policy" }) as HTMLSelectElement;
    for (const policy of POLICIES) {
      const opt = el(doc, "option", { value: policy }, [policy]) as HTMLOptionElement;
      if (policy === this.draft.policy) opt.setAttribute("selected", "selected");
      policySelect.appendChild(opt);
    }
    policySelect.addEventListener("change", () =>
      this.edit((d) => {
        d.policy = policySelect.value;
      }),
    );
    form.appendChild(el(doc, "label", {}, ["Allocation policy ", policySelect]));

    const phenSelect = el(doc, "select", { id: "phenomena" }) as HTMLSelectElement;
    for (const mode of PHENOMENA_MODES) {
      const opt = el(doc, "option", { value: mode }, [mode]) as HTMLOptionElement;
      if (mode === this.draft.phenomena_mode) opt.setAttribute("selected", "selected");
      phenSelect.appendChild(opt);
    }
    phenSelect.addEventListener("change", () =>
      this.edit((d) => {
        d.phenomena_mode = phenSelect.value;
      }),
    );
    form.appendChild(el(doc, "label", {}, ["Operational phenomena ", phenSelect]));

    const reps = el(doc, "input", {
      id: "repetitions",
      type: "number",
      min: "1",
      value: String(this.draft.repetitions),
    }) as HTMLInputElement;
    reps.addEventListener("change", () =>
      this.edit((d) => {
        d.repetitions = Number(reps.value);
      }),
    );
    form.appendChild(
      el(doc, "label", {}, ["Repetitions ", reps, ...this.errorFor("repetitions")]),
    );

    // SLO rows
    const sloList = el(doc, "div", { id: "slo-list" });
    this.draft.slos.forEach((slo, i) => {
      const metricSelect = el(doc, "select", {}) as HTMLSelectElement;
      for (const name of this.metricNames) {
        const opt = el(doc, "option", { value: name }, [name]) as HTMLOptionElement;
        if (name === slo.metric) opt.setAttribute("selected", "selected");
        metricSelect.appendChild(opt);
      }
      metricSelect.addEventListener("change", () =>
        this.edit(() => {
          slo.metric = metricSelect.value;
        }),
      );
      const cmp = el(doc, "select", {}) as HTMLSelectElement;
      for (const c of ["<=", ">="]) {
        const opt = el(doc, "option", { value: c }, [c]) as HTMLOptionElement;
        if (c === slo.comparator) opt.setAttribute("selected", "selected");
        cmp.appendChild(opt);
      }
      cmp.addEventListener("change", () =>
        this.edit(() => {
          slo.comparator = cmp.value as "<=" | ">=";
        }),
      );
      const threshold = el(doc, "input", {
        type: "number",
        value: slo.threshold === null ? "" : String(slo.threshold),
      }) as HTMLInputElement;
      threshold.addEventListener("change", () =>
        this.edit(() => {
          slo.threshold = threshold.value === "" ? null : Number(threshold.value);
        }),
      );
      const remove = el(doc, "button", { type: "button" }, ["remove"]);
      remove.addEventListener("click", () => {
        this.edit((d) => {
          d.slos.splice(i, 1);
        });
        this.render(container);
      });
      sloList.appendChild(
        el(doc, "div", { class: "slo-row" }, [
          metricSelect, cmp, threshold, remove, ...this.errorFor(`slos[${i}]`),
        ]),
      );
    });
    const addSlo = el(doc, "button", { id: "add-slo", type: "button" }, ["Add SLO"]);
    addSlo.addEventListener("click", () => {
      this.edit((d) => {
        d.slos.push({ metric: this.metricNames[0] ?? "", comparator: "<=", threshold: null });
      });
      this.render(container);
    });
    form.appendChild(el(doc, "fieldset", {}, ["SLO targets ", sloList, addSlo]));

    const save = el(doc, "button", { id: "save-portfolio", type: "button" }, ["Save portfolio"]);
    save.addEventListener("click", () => {
      this.save()
        .then((id) => this.callbacks.onSaved(id))
        .catch((err) => {
          this.render(container); // refresh inline field errors
          this.callbacks.onError(err);
        });
    });
    form.appendChild(save);
    container.appendChild(form);
  }
}
