"""Random instances for every autodiff primitive.

Each case maps an rng to ``(inputs, fn)`` where ``fn`` takes tensors and
returns the op output. Inputs are kept away from kinks and domain edges so
central differences are accurate.
"""
import numpy as np

from savn.autodiff import ops


def _shape(rng, lo=1, hi=5):
    return int(rng.integers(lo, hi + 1))


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def case_add(rng):
    n = _shape(rng)
    return [rng.normal(size=n), rng.normal(size=n)], ops.add


def case_sub(rng):
    n = _shape(rng)
    return [rng.normal(size=n), rng.normal(size=n)], ops.sub


def case_mul(rng):
    n = _shape(rng)
    return [rng.normal(size=(n, 2)), rng.normal(size=(n, 2))], ops.mul


def case_scale(rng):
    s = float(rng.normal())
    return [rng.normal(size=_shape(rng))], lambda a: ops.scale(a, s)


def case_matmul_vec(rng):
    m, n = _shape(rng), _shape(rng)
    return [rng.normal(size=(m, n)), rng.normal(size=n)], ops.matmul


def case_matmul_mat(rng):
    m, n, p = _shape(rng), _shape(rng), _shape(rng)
    return [rng.normal(size=(m, n)), rng.normal(size=(n, p))], ops.matmul


def case_conv1d(rng):
    cin, cout, K = _shape(rng, 1, 4), _shape(rng, 1, 4), _shape(rng, 1, 3)
    T = K + _shape(rng, 0, 4)
    return [rng.normal(size=(cin, T)), rng.normal(size=(cout, cin, K))], ops.conv1d


def case_relu(rng):
    return [_away_from_zero(rng, _shape(rng))], ops.relu


def case_sigmoid(rng):
    return [rng.normal(size=_shape(rng)) * 2], ops.sigmoid


def case_tanh(rng):
    return [rng.normal(size=_shape(rng))], ops.tanh


def case_exp(rng):
    return [rng.normal(size=_shape(rng))], ops.exp


def case_log(rng):
    return [rng.uniform(0.2, 3.0, size=_shape(rng))], ops.log


def case_softmax(rng):
    return [rng.normal(size=_shape(rng, 2, 6))], ops.softmax


def case_log_softmax(rng):
    return [rng.normal(size=_shape(rng, 2, 6))], ops.log_softmax


def case_sum(rng):
    return [rng.normal(size=(_shape(rng), _shape(rng)))], ops.sum


def case_sum_axis(rng):
    axis = int(rng.integers(0, 2))
    return [rng.normal(size=(_shape(rng), _shape(rng)))], lambda a: ops.sum(a, axis=axis)


def case_mean(rng):
    return [rng.normal(size=_shape(rng))], ops.mean


def case_l2norm(rng):
    return [rng.normal(size=_shape(rng))], ops.l2norm


def case_concat(rng):
    return [rng.normal(size=_shape(rng)), rng.normal(size=_shape(rng))], lambda a, b: ops.concat((a, b))


def case_take(rng):
    n = _shape(rng, 2, 8)
    start = int(rng.integers(0, n - 1))
    stop = int(rng.integers(start + 1, n + 1))
    return [rng.normal(size=n)], lambda a: ops.take(a, start, stop)


def case_transpose(rng):
    return [rng.normal(size=(_shape(rng), _shape(rng)))], ops.transpose


def case_lstm(rng):
    H, I = _shape(rng, 1, 4), _shape(rng, 1, 4)
    return (
        [
            rng.normal(size=(4 * H, I + H)) * 0.5,
            rng.normal(size=4 * H) * 0.5,
            rng.normal(size=I),
            rng.normal(size=H),
            rng.normal(size=H),
        ],
        ops.lstm_cell,
    )


def case_bce(rng):
    n = _shape(rng)
    y = rng.integers(0, 2, size=n).astype(float)
    return [rng.uniform(0.05, 0.95, size=n)], lambda p: ops.bce(p, y)


CASES = {
    name[len("case_") :]: fn for name, fn in sorted(globals().items()) if name.startswith("case_")
}
