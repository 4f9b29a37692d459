/**
 * NIR HDF5 -> .snngraph.json exporter.
 *
 * Reads the reference NIR serialization (root group `node` with a `nodes`
 * group and an `edges` string table) and emits the snndeploy graph schema.
 * Unsupported node types are fatal; attributes without a target-side
 * representation are recorded in the manifest's dropped list, never
 * silently discarded.
 *
 * Quantization metadata: a weight node may carry a `scale` scalar (the
 * dequantization step size S) and an int8 `w_int` dataset. These are the
 * only accepted metadata keys; anything else on a node is reported as
 * dropped.
 */

import { createHash } from 'node:crypto';
import * as fs from 'node:fs';
import * as path from 'node:path';

import h5wasm from 'h5wasm/node';
import type { Dataset, Group } from 'h5wasm';

export class NirExportError extends Error {}

export interface NodeMapping {
  from: string; // NIR node type
  to: string; // IR node type tag
}

export interface NirExportManifest {
  source: string;
  checksum: string; // sha256 of the input file
  mapping: Record<string, NodeMapping>;
  dropped_attributes: string[];
}

const NODE_TYPE_MAP: Record<string, string> = {
  Input: 'input',
  Conv2d: 'conv2d',
  Linear: 'linear',
  Affine: 'linear',
  SumPool2d: 'sumpool2d',
  Flatten: 'flatten',
  LIF: 'lif',
  Output: 'output',
};

// per NIR type: datasets consumed by the exporter (besides `type`)
const CONSUMED: Record<string, string[]> = {
  Input: ['shape'],
  Conv2d: ['weight', 'stride', 'padding', 'dilation', 'scale', 'w_int'],
  Linear: ['weight', 'scale', 'w_int'],
  Affine: ['weight', 'scale', 'w_int'],
  SumPool2d: ['kernel_size', 'stride', 'padding'],
  Flatten: [],
  LIF: ['tau', 'r', 'v_leak', 'v_threshold'],
  Output: ['shape'],
};

type Json = number | number[] | Json[];

function nest(flat: ArrayLike<number>, shape: number[]): Json {
  if (shape.length === 0) return flat[0];
  if (shape.length === 1) return Array.from(flat as ArrayLike<number>);
  const [head, ...rest] = shape;
  const stride = rest.reduce((a, b) => a * b, 1);
  const out: Json[] = [];
  const arr = flat as unknown as { slice(a: number, b: number): ArrayLike<number> };
  for (let i = 0; i < head; i++) {
    out.push(nest(arr.slice(i * stride, (i + 1) * stride), rest));
  }
  return out;
}

function dataset(group: Group, name: string, nid: string): Dataset {
  const d = group.get(name);
  if (d === null || d === undefined) {
    throw new NirExportError(`node '${nid}' is missing required dataset '${name}'`);
  }
  return d as Dataset;
}

function numbers(group: Group, name: string, nid: string): number[] {
  const v = dataset(group, name, nid).value;
  if (typeof v === 'number' || typeof v === 'bigint') return [Number(v)];
  return Array.from(v as ArrayLike<number>, Number);
}

function tensor(group: Group, name: string, nid: string): Json {
  const d = dataset(group, name, nid);
  return nest(d.value as ArrayLike<number>, d.shape as number[]);
}

function pair(vals: number[], nid: string, what: string): [number, number] {
  if (vals.length === 1) return [vals[0], vals[0]];
  if (vals.length !== 2) {
    throw new NirExportError(`node '${nid}': ${what} must have 1 or 2 entries`);
  }
  return [vals[0], vals[1]];
}

function readEdges(root: Group): [string, string][] {
  const d = root.get('edges') as Dataset | null;
  if (!d) throw new NirExportError('NIR file has no edges table');
  const flat = d.value as string[];
  const edges: [string, string][] = [];
  for (let i = 0; i < flat.length; i += 2) {
    edges.push([String(flat[i]), String(flat[i + 1])]);
  }
  return edges;
}

function convertNode(
  nid: string,
  group: Group,
  dropped: string[],
): { doc: Record<string, unknown>; from: string } {
  const typeDs = group.get('type') as Dataset | null;
  const nirType = typeDs ? String(typeDs.value) : '<untyped>';
  const tag = NODE_TYPE_MAP[nirType];
  if (!tag) {
    throw new NirExportError(
      `node '${nid}' has unsupported NIR type '${nirType}' ` +
        `(supported: ${Object.keys(NODE_TYPE_MAP).join(', ')})`,
    );
  }
  const doc: Record<string, unknown> = { type: tag };

  if (nirType === 'Input') {
    const shape = numbers(group, 'shape', nid);
    if (shape.length !== 3) {
      throw new NirExportError(`node '${nid}': input shape must be (C, H, W)`);
    }
    doc.shape = shape;
  } else if (nirType === 'Output') {
    doc.shape = numbers(group, 'shape', nid).reduce((a, b) => a * b, 1);
  } else if (nirType === 'Conv2d' || nirType === 'Linear' || nirType === 'Affine') {
    if (group.keys().includes('bias')) {
      const bias = numbers(group, 'bias', nid);
      if (bias.some((b) => b !== 0)) {
        throw new NirExportError(
          `node '${nid}' carries a non-zero bias; the target has no bias support`,
        );
      }
      dropped.push(`${nid}.bias (all zero)`);
    }
    doc.weights = tensor(group, 'weight', nid);
    if (nirType === 'Conv2d') {
      if (group.keys().includes('groups')) {
        const g = numbers(group, 'groups', nid)[0];
        if (g !== 1) {
          throw new NirExportError(`node '${nid}': grouped convolutions are unsupported`);
        }
        dropped.push(`${nid}.groups (= 1)`);
      }
      doc.stride = pair(numbers(group, 'stride', nid), nid, 'stride');
      doc.padding = pair(numbers(group, 'padding', nid), nid, 'padding');
      doc.dilation = group.keys().includes('dilation')
        ? pair(numbers(group, 'dilation', nid), nid, 'dilation')
        : [1, 1];
    }
    if (group.keys().includes('scale')) {
      const quant: Record<string, unknown> = {
        scale: numbers(group, 'scale', nid)[0],
        bitwidth: 8,
      };
      if (group.keys().includes('w_int')) {
        quant.int_weights = tensor(group, 'w_int', nid);
      }
      doc.quant = quant;
    } else if (group.keys().includes('w_int')) {
      throw new NirExportError(`node '${nid}' has w_int but no scale`);
    }
  } else if (nirType === 'SumPool2d') {
    doc.kernel = pair(numbers(group, 'kernel_size', nid), nid, 'kernel_size');
    doc.stride = pair(numbers(group, 'stride', nid), nid, 'stride');
    doc.padding = group.keys().includes('padding')
      ? pair(numbers(group, 'padding', nid), nid, 'padding')
      : [0, 0];
  } else if (nirType === 'LIF') {
    doc.tau = numbers(group, 'tau', nid);
    doc.r = numbers(group, 'r', nid);
    doc.v_leak = numbers(group, 'v_leak', nid);
    doc.threshold = numbers(group, 'v_threshold', nid);
  }
  // Flatten maps to the target's shape-only flatten; dims are implicit

  const consumed = new Set([...CONSUMED[nirType], 'type', 'bias', 'groups']);
  for (const key of group.keys()) {
    if (nirType === 'Flatten' && (key === 'start_dim' || key === 'end_dim')) {
      dropped.push(`${nid}.${key} (flatten is full row-major)`);
      continue;
    }
    if (!consumed.has(key)) {
      dropped.push(`${nid}.${key} (no target representation)`);
    }
  }
  return { doc, from: nirType };
}

export async function exportNir(
  nirPath: string,
  outPath: string,
): Promise<NirExportManifest> {
  if (!fs.existsSync(nirPath)) {
    throw new NirExportError(`input file not found: ${nirPath}`);
  }
  await h5wasm.ready;
  const file = new h5wasm.File(nirPath, 'r');
  try {
    const root = file.get('node') as Group | null;
    if (!root || !root.keys().includes('nodes')) {
      throw new NirExportError(`${nirPath} is not a NIR graph file`);
    }
    const nodesGroup = root.get('nodes') as Group;
    const dropped: string[] = [];
    const mapping: Record<string, NodeMapping> = {};
    const nodes: Record<string, unknown> = {};
    for (const nid of nodesGroup.keys()) {
      const { doc, from } = convertNode(nid, nodesGroup.get(nid) as Group, dropped);
      nodes[nid] = doc;
      mapping[nid] = { from, to: doc.type as string };
    }
    const edges = readEdges(root);
    for (const [a, b] of edges) {
      if (!(a in nodes) || !(b in nodes)) {
        throw new NirExportError(`edge ${a} -> ${b} references an unknown node`);
      }
    }
    const graphDoc = {
      format: 'snngraph-v1',
      metadata: { name: path.basename(nirPath, '.h5'), exporter: 'nir-bridge' },
      nodes,
      edges,
    };
    fs.writeFileSync(outPath, JSON.stringify(graphDoc, null, 1) + '\n');
    const checksum = createHash('sha256').update(fs.readFileSync(nirPath)).digest('hex');
    return { source: nirPath, checksum, mapping, dropped_attributes: dropped };
  } finally {
    file.close();
  }
}
