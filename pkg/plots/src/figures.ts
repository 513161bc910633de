import { num, readCsv, SchemaError, Table } from "./csv.js";
import { barChart, lineChart, Series } from "./svg.js";

export interface FigureSpec {
    family: string;
    input: string;
    output: string;
    /** optional family-specific filter, e.g. area side for sweep charts */
    area?: number;
}

type Renderer = (spec: FigureSpec) => string;

function groupBy<T>(rows: T[], key: (row: T) => string): Map<string, T[]> {
    const out = new Map<string, T[]>();
    for (const row of rows) {
        const k = key(row);
        const bucket = out.get(k);
        if (bucket) {
            bucket.push(row);
        } else {
            out.set(k, [row]);
        }
    }
    return out;
}

function pickArea(table: Table, requested?: number): number | undefined {
    const areas = [...new Set(table.rows.map((r) => num(r, "area_side_m")))].sort((a, b) => a - b);
    if (areas.length === 0) {
        return requested;
    }
    if (requested === undefined) {
        return areas[0];
    }
    if (!areas.includes(requested)) {
        throw new SchemaError(`area ${requested} not present (have: ${areas.join(", ")})`);
    }
    return requested;
}

/** Fleet delay vs transmission rate, one curve per protocol at one area. */
function renderDelaySweep(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["protocol", "psi", "area_side_m", "mean_effective_delay_ms"]);
    const area = pickArea(table, spec.area);
    const rows = table.rows.filter((r) => num(r, "area_side_m") === area);
    const series: Series[] = [...groupBy(rows, (r) => r.protocol).entries()].map(
        ([label, group]) => ({
            label,
            points: group
                .map((r): [number, number] => [num(r, "psi"), num(r, "mean_effective_delay_ms")])
                .sort((a, b) => a[0] - b[0]),
        }),
    );
    return lineChart(
        `Fleet delay vs transmission rate (area side ${area ?? "n/a"} m)`,
        "messages per GNSS cycle",
        "mean delay (ms)",
        series,
    );
}

/** Packet loss vs transmission rate, one curve per protocol at one area. */
function renderPacketLoss(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["protocol", "psi", "area_side_m", "mean_loss_rate"]);
    const area = pickArea(table, spec.area);
    const rows = table.rows.filter((r) => num(r, "area_side_m") === area);
    const series: Series[] = [...groupBy(rows, (r) => r.protocol).entries()].map(
        ([label, group]) => ({
            label,
            points: group
                .map((r): [number, number] => [num(r, "psi"), num(r, "mean_loss_rate")])
                .sort((a, b) => a[0] - b[0]),
        }),
    );
    return lineChart(
        `Packet loss vs transmission rate (area side ${area ?? "n/a"} m)`,
        "messages per GNSS cycle",
        "loss probability",
        series,
    );
}

/** Top-down flight paths, one polyline per UAV. */
function renderTrajectories(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["t", "id", "x", "y", "z"]);
    const series: Series[] = [...groupBy(table.rows, (r) => r.id).entries()].map(
        ([id, group]) => ({
            label: `UAV ${id}`,
            points: group.map((r): [number, number] => [num(r, "x"), num(r, "y")]),
        }),
    );
    return lineChart("Flight paths (top-down)", "x (m)", "y (m)", series);
}

/** Pairwise separation traces, one line per UAV pair. */
function renderSeparations(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["t", "id_a", "id_b", "distance_m"]);
    const series: Series[] = [...groupBy(table.rows, (r) => `${r.id_a}-${r.id_b}`).entries()].map(
        ([pair, group]) => ({
            label: pair,
            points: group.map((r): [number, number] => [num(r, "t"), num(r, "distance_m")]),
        }),
    );
    return lineChart("Pairwise separation over time", "time (s)", "distance (m)", series);
}

/** Minimum separation per UAV pair as bars. */
function renderPairMinima(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["id_a", "id_b", "min_distance_m"]);
    const bars = table.rows.map((r) => ({
        label: `${r.id_a}-${r.id_b}`,
        value: num(r, "min_distance_m"),
    }));
    return barChart("Minimum pairwise separation", "UAV pair", "distance (m)", bars);
}

/** Per-agent episode reward curves from the training log. */
function renderRewards(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["episode", "mean_reward"]);
    const agentCols = table.columns.filter((c) => c.startsWith("reward_uav"));
    const series: Series[] = agentCols.map((col) => ({
        label: col.replace("reward_", ""),
        points: table.rows.map((r): [number, number] => [num(r, "episode"), num(r, col)]),
    }));
    series.push({
        label: "mean",
        points: table.rows.map((r): [number, number] => [num(r, "episode"), num(r, "mean_reward")]),
    });
    return lineChart("Training reward per episode", "episode", "mean step reward", series);
}

/** Evaluation delays per policy as bars. */
function renderEvaluation(spec: FigureSpec): string {
    const table = readCsv(spec.input, ["policy", "mean_delay_ms"]);
    const bars = table.rows.map((r) => ({ label: r.policy, value: num(r, "mean_delay_ms") }));
    return barChart("Evaluation delay by policy", "policy", "mean delay (ms)", bars);
}

export const FAMILIES: Record<string, Renderer> = {
    "delay-sweep": renderDelaySweep,
    "packet-loss": renderPacketLoss,
    trajectories: renderTrajectories,
    separations: renderSeparations,
    "pair-minima": renderPairMinima,
    rewards: renderRewards,
    evaluation: renderEvaluation,
};

export function render(spec: FigureSpec): string {
    const renderer = FAMILIES[spec.family];
    if (!renderer) {
        throw new SchemaError(
            `unknown figure family "${spec.family}" (have: ${Object.keys(FAMILIES).join(", ")})`,
        );
    }
    return renderer(spec);
}
