/**
 * Models a server can put behind the protocol.
 *
 * Anything with a batch predict over numeric rows qualifies. Two are
 * shipped: a hand-coded linear regressor with zero dependencies, and a
 * loader for the JSON k-nearest-neighbor documents the Python side
 * writes, so a model trained over there can be served from here.
 */

export interface ServedModel {
  task: 'regression' | 'classification';
  nFeatures: number;
  classes?: string[];
  predict(x: number[][]): number[][];
}

export function linearModel(intercept: number, coefs: number[]): ServedModel {
  if (coefs.length === 0) throw new Error('need at least one coefficient');
  return {
    task: 'regression',
    nFeatures: coefs.length,
    predict: (x) =>
      x.map((row) => {
        let y = intercept;
        for (let j = 0; j < coefs.length; j++) y += coefs[j] * row[j];
        return [y];
      }),
  };
}

const DISTANCE_FLOOR = 1e-12;

interface KnnDocument {
  format: string;
  version: number;
  k: number;
  x: number[][];
  y: number[];
}

/** Inverse-distance weighted kNN from a melime-knn-regressor document. */
export function knnRegressorFromJson(text: string): ServedModel {
  const doc = JSON.parse(text) as KnnDocument;
  if (doc.format !== 'melime-knn-regressor' || doc.version !== 1) {
    throw new Error('not a version-1 knn regressor document');
  }
  const { k, x: train, y } = doc;
  if (!Array.isArray(train) || train.length === 0 || y.length !== train.length) {
    throw new Error('document must pair every training row with a target');
  }
  const d = train[0].length;
  if (!Number.isInteger(k) || k < 1 || k > train.length) {
    throw new Error(`k must be in [1, ${train.length}]`);
  }

  function predictOne(q: number[]): number {
    const dist = train.map((row) => {
      let s = 0;
      for (let j = 0; j < d; j++) {
        const delta = row[j] - q[j];
        s += delta * delta;
      }
      return Math.sqrt(s);
    });
    const order = dist
      .map((_, i) => i)
      .sort((a, b) => dist[a] - dist[b] || a - b)
      .slice(0, k);
    let num = 0;
    let den = 0;
    for (const i of order) {
      const w = 1 / Math.max(dist[i], DISTANCE_FLOOR);
      num += w * y[i];
      den += w;
    }
    return num / den;
  }

  return {
    task: 'regression',
    nFeatures: d,
    predict: (x) => x.map((q) => [predictOne(q)]),
  };
}

/** Check the fields a model declares before serving it. */
export function validateModel(model: ServedModel): void {
  if (!Number.isInteger(model.nFeatures) || model.nFeatures < 1) {
    throw new Error(`invalid n_features ${model.nFeatures}`);
  }
  if (model.task === 'classification') {
    if (!model.classes || model.classes.length < 2) {
      throw new Error('classification models must declare 2 or more classes');
    }
  } else if (model.task !== 'regression') {
    throw new Error(`unknown task ${(model as { task: string }).task}`);
  }
}
