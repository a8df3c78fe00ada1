"""Central finite-difference checks for anything exposing forward/backward/params."""

from __future__ import annotations

import copy

import numpy as np

from .nn import GlobalPool, Layer, MaxPool2, ReLU, sigmoid_bce


class BCELayer(Layer):
    """Wraps sigmoid_bce with fixed labels so the loss can be checked like a layer."""

    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def forward(self, x, training=False):
        loss, self._grad = sigmoid_bce(x, self.labels)
        return np.array([loss], dtype=x.dtype)

    def backward(self, grad):
        return self._grad * grad[0]


def _generators(obj, seen=None):
    """Every numpy Generator reachable from obj's attributes (dropout streams)."""
    seen = set() if seen is None else seen
    if id(obj) in seen:
        return []
    seen.add(id(obj))
    if isinstance(obj, np.random.Generator):
        return [obj]
    found = []
    items = obj.values() if isinstance(obj, dict) else obj if isinstance(obj, (list, tuple)) else None
    if items is None and hasattr(obj, "__dict__"):
        items = vars(obj).values()
    for item in items or []:
        if isinstance(item, (Layer, np.random.Generator, list, tuple, dict)) or hasattr(item, "layers"):
            found.extend(_generators(item, seen))
    return found


def _switches(layer) -> list[Layer]:
    """Layers whose forward pass makes a discrete choice (ReLU sign, pool argmax)."""
    stack = [l for _, l in layer.layers] if hasattr(layer, "layers") else [layer]
    return [l for l in stack if isinstance(l, (ReLU, MaxPool2)) or (isinstance(l, GlobalPool) and l.mode == "max")]


def _switch_state(layers) -> list[np.ndarray]:
    return [(l._mask if isinstance(l, ReLU) else l._idx).copy() for l in layers]


def gradient_check(
    layer,
    input_shape,
    rng: np.random.Generator,
    n_checks: int = 30,
    training: bool = False,
    step: float = 1e-2,
    dtype=np.float64,
    min_step: float = 1e-7,
    x: np.ndarray | None = None,
    analytic_dtype=None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The loss is sum(layer(x) * g) for a random cotangent g. Up to ``n_checks``
    coordinates of the input and of every parameter are probed with step
    ``step * max(1, |value|)``; the step is halved (down to ``min_step``)
    while either probe flips a ReLU sign or pooling argmax, so kinks of the
    piecewise-linear ops are not mistaken for gradient errors. Works on a
    float64 deep copy so the caller's layer is untouched; dropout streams are
    rewound before every forward so the mask stays fixed.

    With ``analytic_dtype`` (e.g. float32) the analytic gradients come from a
    second copy running in that precision, while the finite differences stay
    in ``dtype``; this measures the low-precision backward pass against a
    reference whose own truncation and rounding error is negligible.
    """
    source = layer
    layer = copy.deepcopy(layer)
    for p in layer.params():
        p.astype(dtype)
    if x is None:
        x = rng.standard_normal(input_shape)
    x = np.array(x, dtype=dtype)
    gens = _generators(layer)
    states = [g.bit_generator.state for g in gens]

    def run(inp):
        for g, s in zip(gens, states):
            g.bit_generator.state = s
        return layer.forward(inp, training=training)

    out = run(x)
    switches = _switches(layer)
    base_state = _switch_state(switches)
    cot = rng.standard_normal(out.shape).astype(dtype)
    for p in layer.params():
        p.zero_grad()
    dx = layer.backward(cot)

    def loss():
        value = float(np.sum(run(x) * cot))
        same = all(np.array_equal(a, b) for a, b in zip(_switch_state(switches), base_state))
        return value, same

    grads = [dx] + [p.grad.copy() for p in layer.params()]
    if analytic_dtype is not None:
        low = copy.deepcopy(source)
        for p in low.params():
            p.astype(analytic_dtype)
        for g, s in zip(_generators(low), states):
            g.bit_generator.state = s
        low.forward(x.astype(analytic_dtype), training=training)
        for p in low.params():
            p.zero_grad()
        grads = [low.backward(cot.astype(analytic_dtype))] + [p.grad for p in low.params()]
        grads = [np.asarray(g, dtype=np.float64) for g in grads]
    targets = [(arr, g) for arr, g in zip([x] + [p.value for p in layer.params()], grads)]
    worst = 0.0
    for arr, analytic in targets:
        flat = arr.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_checks, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            while True:
                flat[i] = orig + h
                up, same_up = loss()
                flat[i] = orig - h
                down, same_down = loss()
                flat[i] = orig
                if (same_up and same_down) or h / 2 < min_step:
                    break
                h /= 2
            numeric = (up - down) / (2 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return float(worst)
