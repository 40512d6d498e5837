"""Central finite-difference oracle for analytic gradients (float64)."""

import numpy as np

FD_STEP = 1e-4
ABS_FLOOR = 1e-7


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_grad(f, arr, h=FD_STEP, max_entries=None, rng=None, state=None):
    """d f() / d arr by central differences, perturbing ``arr`` in place.

    With ``max_entries`` only a random subset of entries is probed; the
    returned index array says which. ``state`` returns a fingerprint of the
    piecewise-linear regime (ReLU masks). A probe whose +h or -h evaluation
    changes it straddles a kink: it falls back to the one-sided difference on
    the unchanged side, and is flagged invalid if both sides change.
    """
    flat = arr.reshape(-1)
    idx = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False))
    out = np.empty(idx.size)
    valid = np.ones(idx.size, dtype=bool)
    if state is not None:
        centre = f()
        base = state()
    for n, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        up = f()
        up_ok = state is None or _same(state(), base)
        flat[i] = old - h
        down = f()
        down_ok = state is None or _same(state(), base)
        flat[i] = old
        if up_ok and down_ok:
            out[n] = (up - down) / (2 * h)
        elif up_ok:
            out[n] = (up - centre) / h
        elif down_ok:
            out[n] = (centre - down) / h
        else:
            out[n] = np.nan
            valid[n] = False
    return out, idx, valid


def _same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def relu_masks(net):
    return [layer.mask.copy() for layer in net.layers if layer.kind == "relu"]


def check_layer(layer, x, seed=0):
    """Max relative error over input and parameter gradients of sum(R * layer(x))."""
    rng = np.random.default_rng(seed)
    out = layer.forward(x, train=True, rng=np.random.default_rng(seed))
    weights = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(weights * layer.forward(x, train=True, rng=np.random.default_rng(seed))))

    loss()
    dx = layer.backward(weights)
    analytic = {"input": dx}
    analytic.update({k: v.copy() for k, v in layer.grads.items()})
    errors = {}
    num, idx, _ = numeric_grad(loss, x)
    errors["input"] = relative_error(analytic["input"].reshape(-1)[idx], num)
    for name, p in layer.params.items():
        num, idx, _ = numeric_grad(loss, p)
        errors[name] = relative_error(analytic[name].reshape(-1)[idx], num)
    return errors


def check_network(net, x, labels, mode="eval", seed=0, max_entries=None):
    """Max relative error per parameter tensor and for the input.

    Returns (errors, probed, skipped): probes that straddle a ReLU kink are
    excluded from the error and counted in ``skipped``.
    """
    x = np.array(x, dtype=np.float64)

    def rng():
        return np.random.default_rng(seed) if mode == "train" else None

    res = net.backprop(x, labels, mode=mode, rng=rng())

    def loss_x():
        return net.backprop(x, labels, mode=mode, rng=rng(), input_grad=False).loss

    errors = {}
    probed = skipped = 0
    sample_rng = np.random.default_rng(seed + 1)
    targets = [("input", x, res.input_grad)] + [(k, p, res.grads[k]) for k, p in net.parameters()]
    for key, arr, analytic in targets:
        num, idx, valid = numeric_grad(loss_x, arr, max_entries=max_entries, rng=sample_rng,
                                       state=lambda: relu_masks(net))
        errors[key] = relative_error(analytic.reshape(-1)[idx][valid], num[valid])
        probed += idx.size
        skipped += int((~valid).sum())
    return errors, probed, skipped
