"""Writes gru_small.json (weights) and gru_small_golden.json (inputs, outputs)
using a plain scalar GRU written independently of the C++ code."""

import json
import math
import random

IN, HID, OUT, STEPS = 5, 4, 3, 3
rng = random.Random(20240917)


def mat(r, c):
    return [[rng.uniform(-0.8, 0.8) for _ in range(c)] for _ in range(r)]


def vec(n):
    return [rng.uniform(-0.5, 0.5) for _ in range(n)]


w = {
    "input_dim": IN,
    "hidden_dim": HID,
    "W_z": mat(HID, IN), "W_r": mat(HID, IN), "W_h": mat(HID, IN),
    "U_z": mat(HID, HID), "U_r": mat(HID, HID), "U_h": mat(HID, HID),
    "b_z": vec(HID), "b_r": vec(HID), "b_h": vec(HID),
    "decoder_W": mat(OUT, HID), "decoder_b": vec(OUT),
}
xs = [vec(IN) for _ in range(STEPS)]


def dot(row, v):
    return sum(a * b for a, b in zip(row, v))


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


h = [0.0] * HID
hidden = []
for x in xs:
    z = [sig(dot(w["W_z"][i], x) + dot(w["U_z"][i], h) + w["b_z"][i]) for i in range(HID)]
    r = [sig(dot(w["W_r"][i], x) + dot(w["U_r"][i], h) + w["b_r"][i]) for i in range(HID)]
    rh = [r[i] * h[i] for i in range(HID)]
    c = [math.tanh(dot(w["W_h"][i], x) + dot(w["U_h"][i], rh) + w["b_h"][i]) for i in range(HID)]
    h = [(1.0 - z[i]) * c[i] + z[i] * h[i] for i in range(HID)]
    hidden.append(list(h))
y = [dot(w["decoder_W"][i], h) + w["decoder_b"][i] for i in range(OUT)]

with open("gru_small.json", "w") as f:
    json.dump(w, f, indent=1)
with open("gru_small_golden.json", "w") as f:
    json.dump({"inputs": xs, "hidden": hidden, "output": y}, f, indent=1)
