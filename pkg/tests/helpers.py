"""Shared test oracles: finite-difference gradients and rank-based AUC."""

import numpy as np

from acdkit.neural import MlpParams, NetworkShape, SampleSet, init_params, loss


def finite_difference_grads(params, batch, l2_lambda, step=1e-4):
    """Central finite differences of `loss` over every weight and bias entry."""

    def fd_array(arr):
        grad = np.zeros_like(arr)
        flat, out = arr.ravel(), grad.ravel()
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + step
            plus = loss(params, batch, l2_lambda)
            flat[j] = saved - step
            minus = loss(params, batch, l2_lambda)
            flat[j] = saved
            out[j] = (plus - minus) / (2.0 * step)
        return grad

    return (
        [fd_array(w) for w in params.weights],
        [fd_array(b) for b in params.biases],
    )


def max_relative_error(analytic, numeric):
    """Worst per-entry |a-f| / max(|a|, |f|, 1e-4) over parallel array lists."""
    worst = 0.0
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-4)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def kink_margin(params, batch):
    """Smallest |pre-activation| feeding any ReLU over the batch.

    The finite-difference stencil is a valid derivative estimator only when
    no perturbation crosses a ReLU kink, i.e. when this margin comfortably
    exceeds the step size.
    """
    margin = np.inf
    current = batch.inputs
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = current @ w.T + b
        if i < last or params.output_activation == "relu":
            margin = min(margin, float(np.min(np.abs(z))))
            current = np.maximum(z, 0.0)
        else:
            current = z
    return margin


def generic_gradient_case(shape: NetworkShape, seed: int, batch_rows: int = 6):
    """A random net and batch in generic position (pre-activations off kinks).

    Weights are He-normal and biases N(0, 0.3) -- zero biases put dead-row
    pre-activations exactly on the kink, where finite differences measure a
    one-sided slope instead of the gradient. Seeds advance deterministically
    until every pre-activation clears the kink by > 1e-3.
    """
    attempt = seed
    while True:
        rng = np.random.default_rng(attempt)
        base = init_params(shape, attempt)
        params = MlpParams(
            base.weights,
            [rng.normal(0.0, 0.3, size=b.shape) for b in base.biases],
            shape.output_activation,
        )
        batch = SampleSet(
            rng.normal(size=(batch_rows, shape.input_dim)),
            rng.normal(size=(batch_rows, shape.output_dim)),
        )
        if kink_margin(params, batch) > 1e-3:
            return params, batch
        attempt += 1000


def mann_whitney_auc(anomaly_scores, background_scores):
    """Brute-force pairwise AUC: wins + half-credit ties over all pairs."""
    anomaly = np.asarray(anomaly_scores, dtype=np.float64)
    background = np.asarray(background_scores, dtype=np.float64)
    wins = 0.0
    for a in anomaly:
        for b in background:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (anomaly.size * background.size)
