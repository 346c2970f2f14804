"""Independent reference implementations used only by the tests."""
import itertools


def _sat8(v):
    return max(-128, min(127, v))


def _wrap32(v):
    return (v + 2**31) % 2**32 - 2**31


def _rshift_round(v, s):
    if s == 0:
        return v
    half = 1 << (s - 1)
    return (abs(v) + half) >> s if v >= 0 else -((abs(v) + half) >> s)


def nested_loop_forward(model, x, params):
    """Plain Python loops over every element; mirrors the quantization rules."""
    cur = [[int(v) for v in row] for row in x]
    outs = []
    for layer, p in zip(model.layers, params.layers):
        if layer.kind == "dense":
            w = p.weight.tolist()
            bias = p.bias.tolist() if p.bias is not None else None
            out = []
            for i in range(layer.M):
                row = []
                for n in range(layer.N):
                    acc = 0
                    for k in range(layer.K):
                        acc += cur[i][k] * w[k][n]
                    acc = _wrap32(acc)
                    if bias is not None:
                        acc = _wrap32(acc + bias[n])
                    if layer.has_relu and acc < 0:
                        acc = 0
                    row.append(_sat8(_rshift_round(acc, layer.shift)))
                out.append(row)
        else:
            row = []
            for f in range(layer.F):
                s = sum(cur[i][f] for i in range(layer.M))
                if layer.reduce_kind == "mean":
                    q = (2 * abs(s) + layer.M) // (2 * layer.M)
                    s = q if s >= 0 else -q
                row.append(_sat8(_rshift_round(s, layer.shift)))
            out = [row]
        cur = out
        outs.append(out)
    return outs


def _is_pow2(x):
    return x > 0 and bin(x).count("1") == 1


def _cut_ok(dim, parts, min_piece):
    if parts == 1:
        return True
    chunk = -(-dim // parts)
    pieces = [min(chunk, dim - i * chunk) for i in range(parts)]
    return chunk >= min_piece and all(p > 0 for p in pieces)


def generate_and_filter(model, rows, cols, plio, bm=4, bk=8, bn=8, budget=None):
    """Every mapping by brute force over all integer triples, then filtering."""
    budget = budget or rows * cols
    per_layer = []
    for i, layer in enumerate(model.layers):
        if layer.kind == "aggregate":
            per_layer.append(None)
            continue
        feeds_agg = i + 1 < len(model.layers) and model.layers[i + 1].kind == "aggregate"
        opts = []
        for a, b, c in itertools.product(range(1, layer.M + 1), range(1, layer.K + 1), range(1, layer.N + 1)):
            if not (_is_pow2(a) and _is_pow2(b) and _is_pow2(c)):
                continue
            if a * b * c > budget or (feeds_agg and c != 1):
                continue
            if _cut_ok(layer.M, a, 2 * bm) and _cut_ok(layer.K, b, bk) and _cut_ok(layer.N, c, 2 * bn):
                opts.append((a, b, c))
        per_layer.append(opts)
    out = set()

    def rec(i, acc):
        if i == len(per_layer):
            total = sum(a * b * c for a, b, c in acc)
            if total <= budget and acc[0][0] * acc[0][1] + acc[-1][0] * acc[-1][2] <= plio:
                out.add(tuple(acc))
            return
        opts = per_layer[i] if per_layer[i] is not None else [(acc[-1][0], 1, 1)]
        for o in opts:
            rec(i + 1, acc + [o])

    rec(0, [])
    return out
