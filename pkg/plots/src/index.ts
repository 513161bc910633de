export { render, FAMILIES, FigureSpec } from "./figures.js";
export { readCsv, SchemaError } from "./csv.js";
export { countSeries, lineChart, barChart } from "./svg.js";
