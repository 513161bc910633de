import fs from "node:fs";
import Papa from "papaparse";

export class SchemaError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "SchemaError";
    }
}

export interface Table {
    columns: string[];
    rows: Record<string, string>[];
}

/** Parse a CSV file and require the named columns, erroring by name. */
export function readCsv(path: string, required: string[]): Table {
    if (!fs.existsSync(path)) {
        throw new SchemaError(`input file not found: ${path}`);
    }
    const text = fs.readFileSync(path, "utf-8");
    const parsed = Papa.parse<Record<string, string>>(text.trim(), {
        header: true,
        skipEmptyLines: true,
    });
    if (parsed.errors.length > 0) {
        const first = parsed.errors[0];
        throw new SchemaError(`CSV parse error in ${path}: ${first.message}`);
    }
    const columns = parsed.meta.fields ?? [];
    for (const col of required) {
        if (!columns.includes(col)) {
            throw new SchemaError(`missing column "${col}" in ${path} (found: ${columns.join(", ")})`);
        }
    }
    return { columns, rows: parsed.data };
}

export function num(row: Record<string, string>, col: string): number {
    const v = Number(row[col]);
    if (Number.isNaN(v)) {
        throw new SchemaError(`non-numeric value "${row[col]}" in column "${col}"`);
    }
    return v;
}
