// HTML renderers: plain string builders so they are testable without a DOM.
// Raw payload numbers ride along in data-value attributes; display text is
// formatting only.

import type { Candidate, Verdict } from "./types.js";
import { SessionView, TimelinePoint, timelinePoints } from "./model.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number, digits = 1): string {
  return Number.isFinite(value) ? value.toFixed(digits) : "--";
}

function signed(value: number, digits = 1): string {
  const text = fmt(Math.abs(value), digits);
  return value >= 0 ? `+${text}` : `-${text}`;
}

export function badge(label: string, kind: "ok" | "warn" | "bad"): string {
  return `<span class="badge badge-${kind}">${esc(label)}</span>`;
}

export function statusBadges(view: SessionView): string {
  const parts: string[] = [];
  parts.push(badge(view.status, view.status === "running" ? "ok"
    : view.status === "survived" ? "ok" : "bad"));
  if (view.inShock) parts.push(badge("septic shock", "bad"));
  if (view.hypoperfusion) parts.push(badge("hypoperfusion", "warn"));
  if (view.source === "trace") parts.push(badge("replay", "warn"));
  return parts.join(" ");
}

export function verdictBadges(verdict: Verdict): string {
  const parts: string[] = [];
  if (!verdict.adherent) parts.push(badge(`violation ${verdict.rules.join(",")}`, "bad"));
  if (verdict.unsafe !== "none") parts.push(badge(verdict.unsafe, "bad"));
  if (parts.length === 0) parts.push(badge("adherent", "ok"));
  return parts.join(" ");
}

function sparkline(points: TimelinePoint[], width = 260, height = 48): string {
  if (points.length === 0) return "";
  const values = points.map(p => p.value);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const step = points.length > 1 ? width / (points.length - 1) : 0;
  const coords = points.map((p, i) =>
    `${(i * step).toFixed(1)},${(height - ((p.value - lo) / span) * height).toFixed(1)}`);
  return `<svg viewBox="0 0 ${width} ${height}" class="spark" preserveAspectRatio="none">`
    + `<polyline fill="none" points="${coords.join(" ")}"/></svg>`;
}

export function renderTimeline(view: SessionView, feature: string): string {
  const points = timelinePoints(view, feature);
  const cells = points.map(p =>
    `<td data-feature="${esc(feature)}" data-hour="${p.hour}" data-value="${p.value}">`
    + `${fmt(p.value)}</td>`).join("");
  const hours = points.map(p => `<th>h${p.hour}</th>`).join("");
  return `<div class="timeline" id="timeline-${esc(feature)}">`
    + `<h4>${esc(feature)}</h4>${sparkline(points)}`
    + `<table><tr>${hours}</tr><tr>${cells}</tr></table></div>`;
}

export function renderTimelines(view: SessionView, features: string[]): string {
  return features.map(f => renderTimeline(view, f)).join("\n");
}

export function renderActionHistory(view: SessionView): string {
  if (view.actions.length === 0) return "<p>No treatments committed yet.</p>";
  const rows = view.actions.map(([v, f], i) => {
    const verdict = view.verdicts[i];
    return `<tr><td>h${view.timeline.hours[i]}</td>`
      + `<td data-vaso="${v}" data-fluid="${f}">vaso ${v} / fluid ${f}</td>`
      + `<td>${verdict ? verdictBadges(verdict) : ""}</td></tr>`;
  }).join("");
  return `<table class="history"><tr><th>window</th><th>action</th><th>safety</th></tr>${rows}</table>`;
}

export function renderCandidates(candidates: Candidate[]): string {
  const cards = candidates.map((c, i) => `
  <div class="candidate" data-index="${i}">
    <h4>Vasopressor=${esc(c.levels.vasopressor)}, IV Fluid=${esc(c.levels.iv_fluid)}</h4>
    <ul>
      <li>&Delta;MAP <b data-delta="meanbp" data-value="${c.deltas.meanbp}">${signed(c.deltas.meanbp)}</b> mmHg</li>
      <li>&Delta;Lactate <b data-delta="lactate" data-value="${c.deltas.lactate}">${signed(c.deltas.lactate, 2)}</b> mmol/L</li>
      <li>&Delta;SOFA <b data-delta="soft_sofa" data-value="${c.deltas.soft_sofa}">${signed(c.deltas.soft_sofa)}</b></li>
      <li>Mortality risk <b data-risk data-value="${c.p_mortality}">${fmt(100 * c.p_mortality)}%</b></li>
    </ul>
  </div>`);
  return `<div class="candidates">${cards.join("\n")}</div>`;
}

export function renderError(error: { code: string; message: string } | null): string {
  if (!error) return "";
  return `<div class="error" data-code="${esc(error.code)}">`
    + `<b>${esc(error.code)}</b>: ${esc(error.message)}</div>`;
}
