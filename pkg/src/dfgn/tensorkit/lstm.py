"""Single-direction LSTM over a T x d_in sequence, as one fused tape op.

The whole recurrence (forward and truncated-nowhere BPTT backward) runs in
numpy inside a single tape record, which keeps the tape short and training
fast.  Gate order is input, forget, cell, output; initial state is zero.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, concat, flip_rows, record


class LSTMParams:
    """Weights of one LSTM layer: wx (d_in x 4H), wh (H x 4H), b (4H)."""

    def __init__(self, wx: Tensor, wh: Tensor, b: Tensor):
        if wx.shape[1] != wh.shape[1] or wh.shape[0] * 4 != wh.shape[1] or b.shape[0] != wx.shape[1]:
            raise ShapeError(
                f"inconsistent LSTM params: wx {wx.shape}, wh {wh.shape}, b {b.shape}"
            )
        self.wx = wx
        self.wh = wh
        self.b = b

    @property
    def d_in(self) -> int:
        return self.wx.shape[0]

    @property
    def d_out(self) -> int:
        return self.wh.shape[0]

    @classmethod
    def create(cls, d_in: int, d_out: int, rng: np.random.Generator, scale: float = 0.08) -> "LSTMParams":
        wx = Tensor(rng.uniform(-scale, scale, (d_in, 4 * d_out)), requires_grad=True)
        wh = Tensor(rng.uniform(-scale, scale, (d_out, 4 * d_out)), requires_grad=True)
        b = Tensor(np.zeros(4 * d_out), requires_grad=True)
        return cls(wx, wh, b)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.wx": self.wx, f"{prefix}.wh": self.wh, f"{prefix}.b": self.b}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def lstm_seq(x: Tensor, params: LSTMParams) -> Tensor:
    """Run the LSTM over all T steps, returning the stacked hidden states."""
    if x.ndim != 2:
        raise ShapeError("lstm_seq expects a T x d_in input")
    T, d_in = x.shape
    if T < 1:
        raise ShapeError("lstm_seq needs at least one step")
    if d_in != params.d_in:
        raise ShapeError(f"input width {d_in} does not match params d_in {params.d_in}")
    H = params.d_out
    wx, wh, b = params.wx.data, params.wh.data, params.b.data

    pre_x = x.data @ wx + b  # all input projections at once
    i_s = np.empty((T, H)); f_s = np.empty((T, H))
    g_s = np.empty((T, H)); o_s = np.empty((T, H))
    c_s = np.empty((T, H)); tc_s = np.empty((T, H))
    h_s = np.empty((T, H))
    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        pre = pre_x[t] + h @ wh
        i = _sigmoid(pre[:H]); f = _sigmoid(pre[H:2 * H])
        g = np.tanh(pre[2 * H:3 * H]); o = _sigmoid(pre[3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_s[t] = i; f_s[t] = f; g_s[t] = g; o_s[t] = o
        c_s[t] = c; tc_s[t] = tc; h_s[t] = h

    x_data = x.data

    def backward(g_out: np.ndarray):
        dwx = np.zeros_like(wx); dwh = np.zeros_like(wh); db = np.zeros_like(b)
        gx = np.zeros_like(x_data)
        dh_next = np.zeros(H); dc_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            i, f, g, o = i_s[t], f_s[t], g_s[t], o_s[t]
            tc = tc_s[t]
            c_prev = c_s[t - 1] if t > 0 else np.zeros(H)
            h_prev = h_s[t - 1] if t > 0 else np.zeros(H)
            dh = g_out[t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dpre = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ])
            gx[t] = wx @ dpre
            dwx += np.outer(x_data[t], dpre)
            dwh += np.outer(h_prev, dpre)
            db += dpre
            dh_next = wh @ dpre
        return gx, dwx, dwh, db

    return record(h_s, (x, params.wx, params.wh, params.b), backward)


def bilstm_seq(x: Tensor, fwd: LSTMParams, bwd: LSTMParams) -> Tensor:
    """Bidirectional LSTM: forward and reversed passes, concatenated."""
    left = lstm_seq(x, fwd)
    right = flip_rows(lstm_seq(flip_rows(x), bwd))
    return concat([left, right], axis=1)
