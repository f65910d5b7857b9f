"""Stacked LSTM network with an exact hand-derived backward pass.

One recurrence step computes, in order,

    f_t = g(W_f x_t + U_f h_{t-1} + b_f)        forget gate
    i_t = g(W_i x_t + U_i h_{t-1} + b_i)        input gate
    k_t = tanh(W_k x_t + U_k h_{t-1} + b_k)     candidate
    c_t = f_t * c_{t-1} + i_t * k_t             cell state
    o_t = g(W_o x_t + U_o h_{t-1} + b_o)        output gate
    h_t = o_t * tanh(c_t)

with g the gate activation (sigmoid by default). A network stacks one or
more such layers and applies a dense head to the top layer's final h.

Parameters are stored with the four gates fused row-wise in the order
f, i, k, o: w is (4H, D), u is (4H, H), b is (4H,). The per-gate blocks
(w_f, u_k, ...) are zero-copy views into the fused arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (ActivationKind, activation_apply, activation_derivative,
                     activation_derivative_from_output, as_vector)

GATE_ORDER = ("f", "i", "k", "o")

# Test-only hook: when True, the candidate-gate term of every backward step
# has its sign flipped. Used to prove gradient_check detects a wrong backward.
_CORRUPT_BACKWARD = False


class _GateViews:
    """Per-gate views into fused (4H, ...) arrays, shared by params and grads."""

    def _block(self, arr: np.ndarray, g: int) -> np.ndarray:
        hid = self.hidden_dim
        return arr[g * hid:(g + 1) * hid]

    @property
    def w_f(self): return self._block(self.w, 0)
    @property
    def w_i(self): return self._block(self.w, 1)
    @property
    def w_k(self): return self._block(self.w, 2)
    @property
    def w_o(self): return self._block(self.w, 3)
    @property
    def u_f(self): return self._block(self.u, 0)
    @property
    def u_i(self): return self._block(self.u, 1)
    @property
    def u_k(self): return self._block(self.u, 2)
    @property
    def u_o(self): return self._block(self.u, 3)
    @property
    def b_f(self): return self._block(self.b, 0)
    @property
    def b_i(self): return self._block(self.b, 1)
    @property
    def b_k(self): return self._block(self.b, 2)
    @property
    def b_o(self): return self._block(self.b, 3)


@dataclass
class LstmLayerParams(_GateViews):
    """One LSTM layer: fused gate weights w (4H, D), u (4H, H), biases b (4H,)."""

    input_dim: int
    hidden_dim: int
    w: np.ndarray
    u: np.ndarray
    b: np.ndarray
    gate_activation: ActivationKind = ActivationKind.SIGMOID

    def __post_init__(self):
        hid, d = self.hidden_dim, self.input_dim
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.w.shape != (4 * hid, d):
            raise ValueError(f"w must be {(4*hid, d)}, got {self.w.shape}")
        if self.u.shape != (4 * hid, hid):
            raise ValueError(f"u must be {(4*hid, hid)}, got {self.u.shape}")
        if self.b.shape != (4 * hid,):
            raise ValueError(f"b must be {(4*hid,)}, got {self.b.shape}")
        if self.gate_activation not in (ActivationKind.SIGMOID, ActivationKind.RELU):
            raise ValueError(f"gate activation must be sigmoid or relu, got {self.gate_activation}")

    @classmethod
    def from_gates(cls, w_f, w_i, w_k, w_o, u_f, u_i, u_k, u_o, b_f, b_i, b_k, b_o,
                   gate_activation: ActivationKind = ActivationKind.SIGMOID) -> "LstmLayerParams":
        w = np.vstack([w_f, w_i, w_k, w_o]).astype(np.float64)
        u = np.vstack([u_f, u_i, u_k, u_o]).astype(np.float64)
        b = np.concatenate([b_f, b_i, b_k, b_o]).astype(np.float64)
        hid = w.shape[0] // 4
        return cls(input_dim=w.shape[1], hidden_dim=hid, w=w, u=u, b=b,
                   gate_activation=gate_activation)

    def clone(self) -> "LstmLayerParams":
        return LstmLayerParams(self.input_dim, self.hidden_dim,
                               self.w.copy(), self.u.copy(), self.b.copy(),
                               self.gate_activation)


@dataclass
class LstmStepState:
    """Activations of one step plus the cached gate pre-activations (4H,)."""

    pre: np.ndarray
    f: np.ndarray
    i: np.ndarray
    k: np.ndarray
    c: np.ndarray
    o: np.ndarray
    h: np.ndarray
    tanh_c: np.ndarray


@dataclass
class LayerGrads(_GateViews):
    """Gradients for one layer in the same fused layout as LstmLayerParams."""

    hidden_dim: int
    w: np.ndarray
    u: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, p: LstmLayerParams) -> "LayerGrads":
        return cls(p.hidden_dim, np.zeros_like(p.w), np.zeros_like(p.u), np.zeros_like(p.b))


@dataclass
class LstmNetwork:
    """Stacked LSTM layers plus a dense head mapping the final h to n outputs."""

    layers: list[LstmLayerParams]
    head_w: np.ndarray
    head_b: np.ndarray
    head_activation: ActivationKind = ActivationKind.IDENTITY

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for lo, hi in zip(self.layers, self.layers[1:]):
            if hi.input_dim != lo.hidden_dim:
                raise ValueError(
                    f"layer dimension chain broken: {lo.hidden_dim} -> {hi.input_dim}")
        self.head_w = np.ascontiguousarray(self.head_w, dtype=np.float64)
        self.head_b = np.ascontiguousarray(self.head_b, dtype=np.float64)
        last = self.layers[-1].hidden_dim
        if self.head_w.ndim != 2 or self.head_w.shape[1] != last:
            raise ValueError(f"head_w must be (n, {last}), got {self.head_w.shape}")
        if self.head_b.shape != (self.head_w.shape[0],):
            raise ValueError(f"head_b must be ({self.head_w.shape[0]},), got {self.head_b.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.head_w.shape[0]

    def clone(self) -> "LstmNetwork":
        return LstmNetwork([l.clone() for l in self.layers],
                           self.head_w.copy(), self.head_b.copy(), self.head_activation)

    def param_arrays(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order: per layer w, u, b; then head."""
        out: list[np.ndarray] = []
        for l in self.layers:
            out.extend((l.w, l.u, l.b))
        out.extend((self.head_w, self.head_b))
        return out


@dataclass
class NetworkGradients:
    layers: list[LayerGrads]
    head_w: np.ndarray
    head_b: np.ndarray

    @classmethod
    def zeros_like(cls, net: LstmNetwork) -> "NetworkGradients":
        return cls([LayerGrads.zeros(l) for l in net.layers],
                   np.zeros_like(net.head_w), np.zeros_like(net.head_b))

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for l in self.layers:
            out.extend((l.w, l.u, l.b))
        out.extend((self.head_w, self.head_b))
        return out


@dataclass
class ForwardCache:
    """Everything net_backward needs: per-layer input rows and step states."""

    layer_inputs: list[np.ndarray]        # layer j: (L, D_j) array of its inputs
    layer_states: list[list[LstmStepState]]
    head_pre: np.ndarray
    prediction: np.ndarray


def lstm_step_forward(p: LstmLayerParams, x_t: np.ndarray, h_prev: np.ndarray,
                      c_prev: np.ndarray) -> LstmStepState:
    """One recurrence step; caches pre-activations for the backward pass."""
    hid = p.hidden_dim
    x_t, h_prev, c_prev = as_vector(x_t), as_vector(h_prev), as_vector(c_prev)
    if x_t.shape[0] != p.input_dim:
        raise ValueError(f"x_t must have length {p.input_dim}, got {x_t.shape[0]}")
    if h_prev.shape[0] != hid or c_prev.shape[0] != hid:
        raise ValueError(f"h_prev and c_prev must have length {hid}")
    # w @ x + u @ h + b, evaluated in the same order as affine_combine
    pre = p.w @ x_t
    pre += p.u @ h_prev
    pre += p.b
    f = activation_apply(pre[0 * hid:1 * hid], p.gate_activation)
    i = activation_apply(pre[1 * hid:2 * hid], p.gate_activation)
    k = activation_apply(pre[2 * hid:3 * hid], ActivationKind.TANH)
    o = activation_apply(pre[3 * hid:4 * hid], p.gate_activation)
    c = f * c_prev + i * k
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmStepState(pre=pre, f=f, i=i, k=k, c=c, o=o, h=h, tanh_c=tanh_c)


def _step_backward_core(p: LstmLayerParams, state: LstmStepState, c_prev: np.ndarray,
                        dh_t: np.ndarray, dc_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gate calculus of one backward step.

    Returns (dpre, dc_prev) where dpre is the (4H,) gradient at the fused gate
    pre-activations and dc_prev the gradient flowing into c_{t-1}.
    """
    hid = p.hidden_dim
    gact = p.gate_activation
    dc_total = dc_t + dh_t * state.o * (1.0 - state.tanh_c * state.tanh_c)
    dpre = np.empty(4 * hid)
    # gate derivatives come from the cached activations; bit-identical to
    # re-evaluating activation_derivative at the cached pre-activations
    dpre[0 * hid:1 * hid] = dc_total * c_prev * activation_derivative_from_output(gact, state.f)
    dpre[1 * hid:2 * hid] = dc_total * state.k * activation_derivative_from_output(gact, state.i)
    dpre[2 * hid:3 * hid] = dc_total * state.i * (1.0 - state.k * state.k)
    dpre[3 * hid:4 * hid] = dh_t * state.tanh_c * activation_derivative_from_output(gact, state.o)
    if _CORRUPT_BACKWARD:
        dpre[2 * hid:3 * hid] *= -1.0
    dc_prev = dc_total * state.f
    return dpre, dc_prev


def lstm_step_backward(p: LstmLayerParams, state: LstmStepState,
                       inputs: tuple[np.ndarray, np.ndarray, np.ndarray],
                       dh_t: np.ndarray, dc_t: np.ndarray
                       ) -> tuple[LayerGrads, np.ndarray, np.ndarray, np.ndarray]:
    """Exact partials of a scalar loss through one step.

    `inputs` is the (x_t, h_prev, c_prev) triple the state was produced from;
    dh_t and dc_t are the upstream gradients at h_t and c_t. Returns
    (param_grads, dx_t, dh_prev, dc_prev). Parameter gradients from successive
    steps add.
    """
    x_t, h_prev, c_prev = (as_vector(v) for v in inputs)
    dh_t, dc_t = as_vector(dh_t), as_vector(dc_t)
    if dh_t.shape[0] != p.hidden_dim or dc_t.shape[0] != p.hidden_dim:
        raise ValueError(f"upstream gradients must have length {p.hidden_dim}")
    dpre, dc_prev = _step_backward_core(p, state, c_prev, dh_t, dc_t)
    grads = LayerGrads(p.hidden_dim, np.outer(dpre, x_t), np.outer(dpre, h_prev), dpre.copy())
    dx_t = p.w.T @ dpre
    dh_prev = p.u.T @ dpre
    return grads, dx_t, dh_prev, dc_prev


def net_forward(net: LstmNetwork, seq) -> tuple[np.ndarray, ForwardCache]:
    """Run a sequence through all layers and the head.

    `seq` is a length-L list of input vectors or an (L, n) array, L >= 1.
    Initial h and c are zero for every layer. Returns the head output and the
    caches required by net_backward.
    """
    rows = [as_vector(r) for r in seq]
    if not rows:
        raise ValueError("net_forward: empty input sequence")
    layer_inputs: list[np.ndarray] = []
    layer_states: list[list[LstmStepState]] = []
    for p in net.layers:
        layer_inputs.append(np.stack(rows))
        h = np.zeros(p.hidden_dim)
        c = np.zeros(p.hidden_dim)
        states: list[LstmStepState] = []
        for x_t in rows:
            st = lstm_step_forward(p, x_t, h, c)
            h, c = st.h, st.c
            states.append(st)
        layer_states.append(states)
        rows = [st.h for st in states]
    h_last = layer_states[-1][-1].h
    head_pre = net.head_w @ h_last + net.head_b
    prediction = activation_apply(head_pre, net.head_activation)
    return prediction, ForwardCache(layer_inputs, layer_states, head_pre, prediction)


def net_backward(net: LstmNetwork, cache: ForwardCache,
                 dloss_dpred: np.ndarray) -> NetworkGradients:
    """Exact loss gradient w.r.t. every parameter, by backpropagation through time."""
    if len(cache.layer_states) != len(net.layers):
        raise ValueError("cache does not match network: layer count differs")
    for p, x in zip(net.layers, cache.layer_inputs):
        if x.shape[1] != p.input_dim:
            raise ValueError("cache does not match network: input width differs")
    dloss_dpred = as_vector(dloss_dpred)
    if dloss_dpred.shape[0] != net.output_dim:
        raise ValueError(f"dloss_dpred must have length {net.output_dim}")

    grads = NetworkGradients.zeros_like(net)
    dpre_head = dloss_dpred * activation_derivative(net.head_activation, cache.head_pre)
    h_last = cache.layer_states[-1][-1].h
    grads.head_w += np.outer(dpre_head, h_last)
    grads.head_b += dpre_head

    steps = len(cache.layer_states[0])
    # dh arriving at each step of the current layer from the layer above
    dh_seq = np.zeros((steps, net.layers[-1].hidden_dim))
    dh_seq[-1] = net.head_w.T @ dpre_head

    for j in range(len(net.layers) - 1, -1, -1):
        p = net.layers[j]
        states = cache.layer_states[j]
        x_rows = cache.layer_inputs[j]
        dpre_rows = np.empty((steps, 4 * p.hidden_dim))
        dh_carry = np.zeros(p.hidden_dim)
        dc_carry = np.zeros(p.hidden_dim)
        for t in range(steps - 1, -1, -1):
            c_prev = states[t - 1].c if t > 0 else np.zeros(p.hidden_dim)
            dpre, dc_carry = _step_backward_core(p, states[t], c_prev,
                                                 dh_seq[t] + dh_carry, dc_carry)
            dpre_rows[t] = dpre
            dh_carry = p.u.T @ dpre
        # h inputs to the recurrence: zeros at t=0, then h_0 .. h_{L-2}
        h_prev_rows = np.zeros((steps, p.hidden_dim))
        for t in range(1, steps):
            h_prev_rows[t] = states[t - 1].h
        g = grads.layers[j]
        g.w += dpre_rows.T @ x_rows
        g.u += dpre_rows.T @ h_prev_rows
        g.b += dpre_rows.sum(axis=0)
        if j > 0:
            dh_seq = dpre_rows @ p.w
    return grads


def gradient_check(net: LstmNetwork, sample, eps: float) -> float:
    """Max relative error between net_backward and central finite differences.

    `sample` is a (sequence, target) pair. The scalar functional checked is
    the smooth quadratic 0.5 * mean((prediction - target)^2); relative error
    for each parameter is |a - fd| / max(1e-8, |a| + |fd|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    seq, target = sample
    target = as_vector(target)
    m = target.shape[0]

    def loss_of(network: LstmNetwork) -> float:
        pred, _ = net_forward(network, seq)
        d = pred - target
        return float(0.5 * np.dot(d, d) / m)

    pred, cache = net_forward(net, seq)
    analytic = net_backward(net, cache, (pred - target) / m)

    worst = 0.0
    for arr, garr in zip(net.param_arrays(), analytic.arrays()):
        flat = arr.reshape(-1)
        gflat = garr.reshape(-1)
        for idx in range(flat.shape[0]):
            saved = flat[idx]
            flat[idx] = saved + eps
            up = loss_of(net)
            flat[idx] = saved - eps
            down = loss_of(net)
            flat[idx] = saved
            fd = (up - down) / (2.0 * eps)
            a = gflat[idx]
            rel = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
            if rel > worst:
                worst = rel
    return worst


def init_params(layer_dims: list[int], n: int, seed: int,
                gate_activation: ActivationKind = ActivationKind.SIGMOID,
                head_activation: ActivationKind = ActivationKind.IDENTITY) -> LstmNetwork:
    """Build a seeded random network with `layer_dims` hidden widths and n in/out.

    Weights are uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)] drawn from
    Generator(PCG64(SeedSequence(seed))) in a fixed order (per layer w then u,
    finally the head matrix). Biases start at zero except the forget-gate
    biases, which start at 1.0.
    """
    if not layer_dims:
        raise ValueError("layer_dims must be nonempty")
    if any(d <= 0 for d in layer_dims) or n <= 0:
        raise ValueError("all dimensions must be positive")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    layers = []
    d = n
    for hid in layer_dims:
        bw = 1.0 / np.sqrt(d)
        bu = 1.0 / np.sqrt(hid)
        w = rng.uniform(-bw, bw, size=(4 * hid, d))
        u = rng.uniform(-bu, bu, size=(4 * hid, hid))
        b = np.zeros(4 * hid)
        b[:hid] = 1.0
        layers.append(LstmLayerParams(d, hid, w, u, b, gate_activation))
        d = hid
    bh = 1.0 / np.sqrt(d)
    head_w = rng.uniform(-bh, bh, size=(n, d))
    head_b = np.zeros(n)
    return LstmNetwork(layers, head_w, head_b, head_activation)
