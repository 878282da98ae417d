/** Hand-rolled SVG box plots: one box per scenario for a chosen metric,
 * with optional horizontal SLO threshold lines. Pure DOM construction
 * against an injected Document so it renders identically in the browser
 * and in DOM-emulation tests.
 */

import { BoxStats, formatMetric } from "./stats.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface BoxGroup {
  label: string;
  stats: BoxStats;
}

export interface SloLine {
  value: number;
  label: string;
}

export interface BoxPlotOptions {
  width?: number;
  height?: number;
  sloLines?: SloLine[];
}

interface Scale {
  (value: number): number;
}

function makeScale(lo: number, hi: number, pixLo: number, pixHi: number): Scale {
  const span = hi - lo || 1;
  return (v: number) => pixLo + ((v - lo) / span) * (pixHi - pixLo);
}

function svgEl(doc: Document, tag: string, attrs: Record<string, string | number>): SVGElement {
  const el = doc.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, String(v));
  return el;
}

export function renderBoxPlot(
  doc: Document,
  groups: BoxGroup[],
  options: BoxPlotOptions = {},
): SVGElement {
  const width = options.width ?? 640;
  const height = options.height ?? 320;
  const margin = { top: 16, right: 16, bottom: 48, left: 86 };
  const sloLines = options.sloLines ?? [];

  const values = groups.flatMap((g) => [g.stats.min, g.stats.max]);
  for (const line of sloLines) values.push(line.value);
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  const pad = (hi - lo) * 0.05;
  const y = makeScale(lo - pad, hi + pad, height - margin.bottom, margin.top);

  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    class: "boxplot",
    role: "img",
  });

  // y axis with 5 ticks
  const axisX = margin.left - 8;
  svg.appendChild(
    svgEl(doc, "line", {
      x1: axisX, y1: margin.top, x2: axisX, y2: height - margin.bottom,
      stroke: "#888", "stroke-width": 1,
    }),
  );
  for (let i = 0; i <= 4; i++) {
    const v = lo + ((hi - lo) * i) / 4;
    const ty = y(v);
    svg.appendChild(
      svgEl(doc, "line", { x1: axisX - 4, y1: ty, x2: axisX, y2: ty, stroke: "#888" }),
    );
    const label = svgEl(doc, "text", {
      x: axisX - 7, y: ty + 4, "text-anchor": "end", "font-size": 11, fill: "#555",
      class: "tick-label",
    });
    label.textContent = formatMetric(v);
    svg.appendChild(label);
  }

  const plotWidth = width - margin.left - margin.right;
  const slot = plotWidth / Math.max(groups.length, 1);
  const boxWidth = Math.min(58, slot * 0.55);

  groups.forEach((group, i) => {
    const cx = margin.left + slot * i + slot / 2;
    const s = group.stats;
    const g = svgEl(doc, "g", { class: "box", "data-scenario": group.label });
    // whiskers
    g.appendChild(
      svgEl(doc, "line", { x1: cx, y1: y(s.min), x2: cx, y2: y(s.q1), stroke: "#345", "stroke-width": 1 }),
    );
    g.appendChild(
      svgEl(doc, "line", { x1: cx, y1: y(s.q3), x2: cx, y2: y(s.max), stroke: "#345", "stroke-width": 1 }),
    );
    for (const cap of [s.min, s.max]) {
      g.appendChild(
        svgEl(doc, "line", {
          x1: cx - boxWidth / 4, y1: y(cap), x2: cx + boxWidth / 4, y2: y(cap),
          stroke: "#345", "stroke-width": 1,
        }),
      );
    }
    // interquartile box
    g.appendChild(
      svgEl(doc, "rect", {
        x: cx - boxWidth / 2, y: y(s.q3),
        width: boxWidth, height: Math.max(y(s.q1) - y(s.q3), 1),
        fill: "#9ec5e8", stroke: "#345", "stroke-width": 1,
      }),
    );
    // median line
    const medianLine = svgEl(doc, "line", {
      x1: cx - boxWidth / 2, y1: y(s.median), x2: cx + boxWidth / 2, y2: y(s.median),
      stroke: "#123", "stroke-width": 2, class: "median",
      "data-median": formatMetric(s.median),
    });
    g.appendChild(medianLine);
    // scenario label
    const text = svgEl(doc, "text", {
      x: cx, y: height - margin.bottom + 16, "text-anchor": "middle",
      "font-size": 11, fill: "#333", class: "scenario-label",
    });
    text.textContent = group.label;
    g.appendChild(text);
    svg.appendChild(g);
  });

  for (const line of sloLines) {
    const ty = y(line.value);
    svg.appendChild(
      svgEl(doc, "line", {
        x1: margin.left - 8, y1: ty, x2: width - margin.right, y2: ty,
        stroke: "#c0392b", "stroke-width": 1.5, "stroke-dasharray": "6 4", class: "slo-line",
        "data-value": line.value,
      }),
    );
    const label = svgEl(doc, "text", {
      x: width - margin.right, y: ty - 5, "text-anchor": "end",
      "font-size": 11, fill: "#c0392b", class: "slo-label",
    });
    label.textContent = line.label;
    svg.appendChild(label);
  }

  return svg;
}
