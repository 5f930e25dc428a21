#!/usr/bin/env python3
# Copyright 2026 The agl-desk Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts Planetoid ind.<name>.* files into the prepared dataset layout.

Writes nodes.tsv, edges.tsv, labels.tsv and split.tsv (standard split:
the labelled x rows train, the next 500 validate, test.index tests).

    python3 tools/prepare_planetoid.py --raw planetoid/data --name cora --out data/cora
"""

import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def _load(raw, name, part):
    path = os.path.join(raw, "ind.{}.{}".format(name, part))
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def load_planetoid(raw, name):
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    with open(os.path.join(raw, "ind.{}.test.index".format(name))) as f:
        test_index = [int(line) for line in f if line.strip()]
    test_sorted = sorted(test_index)

    tx, ty = _dense(tx), _dense(ty)
    if name == "citeseer":
        # Some test ids have no features; pad them with zero rows.
        full = range(test_sorted[0], test_sorted[-1] + 1)
        tx_ext = np.zeros((len(full), tx.shape[1]), dtype=tx.dtype)
        ty_ext = np.zeros((len(full), ty.shape[1]), dtype=ty.dtype)
        tx_ext[np.array(test_sorted) - test_sorted[0], :] = tx
        ty_ext[np.array(test_sorted) - test_sorted[0], :] = ty
        tx, ty = tx_ext, ty_ext

    features = np.vstack([_dense(allx), tx]).astype(np.float64)
    labels = np.vstack([_dense(ally), ty])
    # tx/ty are stored in sorted order; put them back at their own ids.
    features[test_index, :] = features[test_sorted, :]
    labels[test_index, :] = labels[test_sorted, :]

    n = features.shape[0]
    edges = set()
    for src, dsts in graph.items():
        for dst in dsts:
            if src != dst and src < n and dst < n:
                edges.add((src, dst))
                edges.add((dst, src))

    train = list(range(_dense(y).shape[0]))
    val = list(range(len(train), len(train) + 500))
    return features, labels, sorted(edges), train, val, test_index


def _fmt(v):
    return "{:.9g}".format(v)


def write_prepared(out, features, labels, edges, train, val, test, normalize=True):
    os.makedirs(out, exist_ok=True)
    if normalize:
        sums = features.sum(axis=1, keepdims=True)
        sums[sums == 0] = 1
        features = features / sums
    with open(os.path.join(out, "nodes.tsv"), "w") as f:
        for i, row in enumerate(features):
            f.write(str(i) + "\t" + "\t".join(_fmt(v) for v in row) + "\n")
    with open(os.path.join(out, "edges.tsv"), "w") as f:
        for src, dst in sorted(edges, key=lambda e: (e[1], e[0])):
            f.write("{}\t{}\t1\n".format(src, dst))
    # Rows with no label (citeseer padding) are left out.
    labelled = labels.sum(axis=1) > 0
    with open(os.path.join(out, "labels.tsv"), "w") as f:
        for i in range(labels.shape[0]):
            if labelled[i]:
                f.write("{}\t{}\n".format(i, int(labels[i].argmax())))
    with open(os.path.join(out, "split.tsv"), "w") as f:
        for tag, ids in (("train", train), ("val", val), ("test", test)):
            for i in ids:
                if labelled[i]:
                    f.write("{}\t{}\n".format(i, tag))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--raw", required=True, help="directory holding ind.<name>.* files")
    p.add_argument("--name", default="cora")
    p.add_argument("--out", required=True)
    p.add_argument("--no-normalize", action="store_true", help="keep raw feature rows")
    args = p.parse_args(argv)
    try:
        features, labels, edges, train, val, test = load_planetoid(args.raw, args.name)
    except OSError as e:
        print("prepare_planetoid: {}".format(e), file=sys.stderr)
        return 4
    write_prepared(args.out, features, labels, edges, train, val, test, not args.no_normalize)
    print("nodes={} edges={} classes={} train={} val={} test={}".format(
        features.shape[0], len(edges), labels.shape[1], len(train), len(val), len(test)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
