/** Minimal deterministic SVG chart primitives (no timestamps, no randomness). */

export interface Series {
    label: string;
    points: [number, number][];
}

export interface BarGroup {
    label: string;
    value: number;
}

const WIDTH = 760;
const HEIGHT = 480;
const MARGIN = { left: 70, right: 160, top: 40, bottom: 55 };

const PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

function esc(s: string): string {
    return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

interface Extent {
    min: number;
    max: number;
}

function extent(values: number[]): Extent {
    if (values.length === 0) {
        return { min: 0, max: 1 };
    }
    let min = Math.min(...values);
    let max = Math.max(...values);
    if (min === max) {
        min -= 1;
        max += 1;
    }
    return { min, max };
}

function scale(domain: Extent, rangeLo: number, rangeHi: number) {
    return (v: number) =>
        rangeLo + ((v - domain.min) / (domain.max - domain.min)) * (rangeHi - rangeLo);
}

function frame(title: string, xLabel: string, yLabel: string, body: string, legend: string): string {
    return [
        `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
        `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
        `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16" font-family="sans-serif">${esc(title)}</text>`,
        `<text x="${(MARGIN.left + WIDTH - MARGIN.right) / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="12" font-family="sans-serif">${esc(xLabel)}</text>`,
        `<text x="18" y="${HEIGHT / 2}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 18 ${HEIGHT / 2})">${esc(yLabel)}</text>`,
        `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${WIDTH - MARGIN.left - MARGIN.right}" height="${HEIGHT - MARGIN.top - MARGIN.bottom}" fill="none" stroke="#333"/>`,
        body,
        legend,
        `</svg>`,
    ].join("\n");
}

function axisTicks(domain: Extent, axis: "x" | "y", toPx: (v: number) => number): string {
    const ticks: string[] = [];
    const n = 5;
    for (let k = 0; k <= n; k++) {
        const v = domain.min + ((domain.max - domain.min) * k) / n;
        const label = Math.abs(v) >= 1000 ? v.toFixed(0) : v.toPrecision(3);
        if (axis === "x") {
            const x = toPx(v);
            ticks.push(
                `<line x1="${x}" y1="${HEIGHT - MARGIN.bottom}" x2="${x}" y2="${HEIGHT - MARGIN.bottom + 5}" stroke="#333"/>`,
                `<text x="${x}" y="${HEIGHT - MARGIN.bottom + 18}" text-anchor="middle" font-size="10" font-family="sans-serif">${label}</text>`,
            );
        } else {
            const y = toPx(v);
            ticks.push(
                `<line x1="${MARGIN.left - 5}" y1="${y}" x2="${MARGIN.left}" y2="${y}" stroke="#333"/>`,
                `<text x="${MARGIN.left - 8}" y="${y + 3}" text-anchor="end" font-size="10" font-family="sans-serif">${label}</text>`,
            );
        }
    }
    return ticks.join("\n");
}

function legendFor(labels: string[]): string {
    const items = labels.map((label, k) => {
        const y = MARGIN.top + 14 + k * 16;
        const color = PALETTE[k % PALETTE.length];
        return (
            `<line x1="${WIDTH - MARGIN.right + 10}" y1="${y - 4}" x2="${WIDTH - MARGIN.right + 28}" y2="${y - 4}" stroke="${color}" stroke-width="2"/>` +
            `<text x="${WIDTH - MARGIN.right + 33}" y="${y}" font-size="11" font-family="sans-serif">${esc(label)}</text>`
        );
    });
    return items.join("\n");
}

/** Multi-series line chart; one polyline per series tagged class="series". */
export function lineChart(title: string, xLabel: string, yLabel: string, series: Series[]): string {
    const xs = series.flatMap((s) => s.points.map((p) => p[0]));
    const ys = series.flatMap((s) => s.points.map((p) => p[1]));
    const dx = extent(xs);
    const dy = extent(ys);
    const sx = scale(dx, MARGIN.left, WIDTH - MARGIN.right);
    const sy = scale(dy, HEIGHT - MARGIN.bottom, MARGIN.top);
    const body = series
        .map((s, k) => {
            const pts = s.points
                .map(([x, y]) => `${sx(x).toFixed(2)},${sy(y).toFixed(2)}`)
                .join(" ");
            const color = PALETTE[k % PALETTE.length];
            return `<polyline class="series" data-label="${esc(s.label)}" fill="none" stroke="${color}" stroke-width="1.8" points="${pts}"/>`;
        })
        .join("\n");
    const ticks = series.length ? axisTicks(dx, "x", sx) + "\n" + axisTicks(dy, "y", sy) : "";
    return frame(title, xLabel, yLabel, body + "\n" + ticks, legendFor(series.map((s) => s.label)));
}

/** Bar chart; one rect per bar tagged class="series". */
export function barChart(title: string, xLabel: string, yLabel: string, bars: BarGroup[]): string {
    const dy = extent([0, ...bars.map((b) => b.value)]);
    const sy = scale(dy, HEIGHT - MARGIN.bottom, MARGIN.top);
    const innerW = WIDTH - MARGIN.left - MARGIN.right;
    const slot = bars.length > 0 ? innerW / bars.length : innerW;
    const body = bars
        .map((b, k) => {
            const x = MARGIN.left + k * slot + slot * 0.15;
            const y = sy(b.value);
            const h = HEIGHT - MARGIN.bottom - y;
            const color = PALETTE[k % PALETTE.length];
            return (
                `<rect class="series" data-label="${esc(b.label)}" x="${x.toFixed(2)}" y="${y.toFixed(2)}" width="${(slot * 0.7).toFixed(2)}" height="${Math.max(h, 0).toFixed(2)}" fill="${color}"/>` +
                `<text x="${(x + slot * 0.35).toFixed(2)}" y="${HEIGHT - MARGIN.bottom + 14}" text-anchor="middle" font-size="9" font-family="sans-serif">${esc(b.label)}</text>`
            );
        })
        .join("\n");
    const ticks = bars.length ? axisTicks(dy, "y", sy) : "";
    return frame(title, xLabel, yLabel, body + "\n" + ticks, "");
}

export function countSeries(svg: string): number {
    return (svg.match(/class="series"/g) ?? []).length;
}
