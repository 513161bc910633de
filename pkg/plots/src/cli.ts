#!/usr/bin/env node
import fs from "node:fs";
import path from "node:path";
import process from "node:process";

import { SchemaError } from "./csv.js";
import { FAMILIES, render } from "./figures.js";

function usage(): string {
    return [
        "usage: remoteid-ca-plots <family> --input <csv> --output <svg> [--area <side_m>]",
        `families: ${Object.keys(FAMILIES).join(", ")}`,
    ].join("\n");
}

export function main(argv: string[]): number {
    const args = [...argv];
    const family = args.shift();
    if (!family || family === "--help" || family === "-h") {
        process.stdout.write(usage() + "\n");
        return family ? 0 : 2;
    }
    let input: string | undefined;
    let output: string | undefined;
    let area: number | undefined;
    while (args.length) {
        const flag = args.shift();
        if (flag === "--input") {
            input = args.shift();
        } else if (flag === "--output") {
            output = args.shift();
        } else if (flag === "--area") {
            area = Number(args.shift());
        } else {
            process.stderr.write(`unknown flag ${flag}\n${usage()}\n`);
            return 2;
        }
    }
    if (!input || !output) {
        process.stderr.write(usage() + "\n");
        return 2;
    }
    try {
        const svg = render({ family, input, output, area });
        fs.mkdirSync(path.dirname(path.resolve(output)), { recursive: true });
        fs.writeFileSync(output, svg);
        process.stdout.write(`wrote ${output}\n`);
        return 0;
    } catch (err) {
        if (err instanceof SchemaError) {
            process.stderr.write(`schema error: ${err.message}\n`);
            return 1;
        }
        throw err;
    }
}

if (import.meta.url === `file://${process.argv[1]}`) {
    process.exit(main(process.argv.slice(2)));
}
