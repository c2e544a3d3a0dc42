"""Independent reference implementations used as test oracles."""

import itertools
from collections import defaultdict


def brute_force_metapaths(n, node_types, edges, max_length, cartesian=False):
    """All meta-paths of all walks with <= max_length nodes, per ordered pair.

    Works from the raw edge triples (scanned on every step, either direction)
    and maps each walk through the node-type function afterwards.
    """

    def steps(v):
        for a, b, r in edges:
            if a == v:
                yield b, r
            if b == v and a != b:
                yield a, r

    walks = []

    def extend(walk):
        walks.append(walk)
        if len(walk) // 2 + 1 == max_length:
            return
        for y, r in steps(walk[-1]):
            extend(walk + (r, y))

    for u in range(n):
        extend((u,))

    out = defaultdict(set)
    for w in walks:
        nodes = w[0::2]
        rels = w[1::2]
        if cartesian:
            choices = [sorted(node_types[x]) for x in nodes]
        else:
            choices = [[min(node_types[x])] for x in nodes]
        for combo in itertools.product(*choices):
            mp = [combo[0]]
            for r, t in zip(rels, combo[1:]):
                mp += [r, t]
            out[(nodes[0], nodes[-1])].add(tuple(mp))
    return dict(out)


def macro_f1_by_hand(pred, true):
    """Confusion-matrix macro F1 over classes {0, 1}."""
    tp = sum(p == 1 and t == 1 for p, t in zip(pred, true))
    fp = sum(p == 1 and t == 0 for p, t in zip(pred, true))
    fn = sum(p == 0 and t == 1 for p, t in zip(pred, true))
    tn = sum(p == 0 and t == 0 for p, t in zip(pred, true))
    f1_pos = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    f1_neg = 2 * tn / (2 * tn + fn + fp) if (2 * tn + fn + fp) else 0.0
    return (f1_pos + f1_neg) / 2


def best_linear_accuracy_bruteforce(X, y, grid=41):
    """Best training accuracy of any 2-D halfplane, searched over directions
    and every threshold between projected points."""
    import numpy as np

    X = np.asarray(X, float)
    y = np.asarray(y)
    best = 0.0
    for ang in np.linspace(0, np.pi, grid * 4, endpoint=False):
        w = np.array([np.cos(ang), np.sin(ang)])
        proj = X @ w
        cuts = np.concatenate([[proj.min() - 1], (np.sort(proj)[:-1] + np.sort(proj)[1:]) / 2, [proj.max() + 1]])
        for c in cuts:
            for sign in (1, -1):
                pred = (sign * (proj - c) > 0).astype(int)
                best = max(best, float((pred == y).mean()))
    return best


def best_additive_type_f1(type_pairs, labels, n_types, grid=None):
    """Best macro F1 of any rule ``predict 1 iff g(a) + g(b) > 0`` over a grid
    of per-type scores ``g``. With the average operator and a linear
    classifier every decision function on single-typed nodes has this form."""
    import numpy as np

    grid = np.linspace(-1, 1, 9) if grid is None else grid
    a = np.array([p[0] for p in type_pairs])
    b = np.array([p[1] for p in type_pairs])
    y = np.asarray(labels)
    best = 0.0
    for g in itertools.product(grid, repeat=n_types):
        g = np.array(g)
        pred = (g[a] + g[b] > 0).astype(int)
        best = max(best, macro_f1_by_hand(pred.tolist(), y.tolist()))
    return best
