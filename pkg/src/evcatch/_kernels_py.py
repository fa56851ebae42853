"""Pure-numpy LSTM sequence kernels (fallback backend).

Gate layout along the 4H axis is (input, forget, candidate, output).
The compiled backend in ``_kernels.pyx`` implements the same contract.
"""

import numpy as np


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_forward(Wx, Wh, b, Wo, bo, X, h0, c0):
    """Run a full sequence; returns outputs and the cache needed by backward.

    X: (T, D) inputs. Returns (Y, cache) with Y: (T, 2) readouts and cache a
    dict of per-step gate activations, cell states and hidden states.
    """
    T = X.shape[0]
    H = Wh.shape[1]
    Z = X @ Wx.T + b  # input contribution, precomputed for the whole sequence

    I = np.empty((T, H))
    F = np.empty((T, H))
    G = np.empty((T, H))
    O = np.empty((T, H))
    C = np.empty((T, H))
    Hs = np.empty((T, H))
    TC = np.empty((T, H))

    h = h0.copy()
    c = c0.copy()
    for t in range(T):
        z = Z[t] + Wh @ h
        I[t] = _sigmoid(z[:H])
        F[t] = _sigmoid(z[H:2 * H])
        G[t] = np.tanh(z[2 * H:3 * H])
        O[t] = _sigmoid(z[3 * H:])
        c = F[t] * c + I[t] * G[t]
        C[t] = c
        TC[t] = np.tanh(c)
        h = O[t] * TC[t]
        Hs[t] = h

    Y = Hs @ Wo.T + bo
    cache = {"I": I, "F": F, "G": G, "O": O, "C": C, "Hs": Hs, "TC": TC,
             "h0": h0, "c0": c0}
    return Y, cache


def lstm_backward(Wx, Wh, Wo, X, cache, dY):
    """BPTT gradients for all parameter blocks given readout gradients dY."""
    T, H = cache["Hs"].shape
    I, F, G, O = cache["I"], cache["F"], cache["G"], cache["O"]
    C, Hs, TC = cache["C"], cache["Hs"], cache["TC"]

    dWo = dY.T @ Hs
    dbo = dY.sum(axis=0)
    dH_out = dY @ Wo

    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        c_prev = C[t - 1] if t > 0 else cache["c0"]
        h_prev = Hs[t - 1] if t > 0 else cache["h0"]

        dh = dH_out[t] + dh_next
        do = dh * TC[t]
        dc = dh * O[t] * (1.0 - TC[t] ** 2) + dc_next
        di = dc * G[t]
        df = dc * c_prev
        dg = dc * I[t]

        dz = np.concatenate([
            di * I[t] * (1.0 - I[t]),
            df * F[t] * (1.0 - F[t]),
            dg * (1.0 - G[t] ** 2),
            do * O[t] * (1.0 - O[t]),
        ])

        dWx += np.outer(dz, X[t])
        dWh += np.outer(dz, h_prev)
        db += dz
        dh_next = Wh.T @ dz
        dc_next = dc * F[t]

    return {"Wx": dWx, "Wh": dWh, "b": db, "Wo": dWo, "bo": dbo}
