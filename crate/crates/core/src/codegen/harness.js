'use strict';
// Child-side harness for generated TypeScript (transpiled to CommonJS).
// Reads one JSON request per line on stdin: {"entry": name, "args": {...}}
// and answers each with {"ok": true, "result": ...} or {"ok": false, "error": text}.
const util = require('util');
const readline = require('readline');

const out = process.stdout;
const toStderr = (...a) => process.stderr.write(util.format(...a) + '\n');
console.log = console.info = console.debug = console.warn = toStderr;

let mod = null;
let loadError = null;
try {
  mod = require('./module.js');
} catch (e) {
  loadError = e;
}

function describe(e) {
  if (e instanceof Error) return `${e.name}: ${e.message}`;
  return String(e);
}

async function handle(line) {
  if (loadError) throw loadError;
  const req = JSON.parse(line);
  const fn = mod[req.entry];
  if (typeof fn !== 'function') throw new Error(`entry ${req.entry} is not an exported function`);
  let result = await fn(req.args);
  return result === undefined ? null : result;
}

const rl = readline.createInterface({ input: process.stdin, terminal: false });
let queue = Promise.resolve();
rl.on('line', (line) => {
  if (!line.trim()) return;
  queue = queue.then(async () => {
    let reply;
    try {
      reply = { ok: true, result: await handle(line) };
      reply = JSON.stringify(reply);
    } catch (e) {
      reply = JSON.stringify({ ok: false, error: describe(e) });
    }
    out.write(reply + '\n');
  });
});
