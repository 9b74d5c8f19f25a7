"""Independent evaluation of one synthetic box-model step for the golden test.

Written directly from the step formulas, without reference to the Rust code.
Run: python3 refmodel_golden.py
"""
import math

dt = 450.0
kc, kn, mu_nuc, ka, ks, omega = 1e-6, 1e-4, 1e-3, 1e-9, 1e-7, 0.5
a = {"ns": 0.01, "ks": 0.1, "as": 1.0, "cs": 10.0}

T, r, g = 250.0, 0.5, 1.0
n = {m: 1e3 for m in ["ns", "ks", "as", "cs", "ki", "ai", "ci"]}
mass = {
    "so4": {m: 1.0 for m in ["ns", "ks", "as", "cs"]},
    "bc": {m: 1.0 for m in ["ks", "as", "cs", "ki"]},
    "oc": {m: 1.0 for m in ["ks", "as", "cs", "ki"]},
    "du": {m: 1.0 for m in ["as", "cs", "ai", "ci"]},
}
pre_mass = {s: dict(v) for s, v in mass.items()}
pre_n = dict(n)
pre_g = g

# condensation
A = sum(a[k] * n[k] for k in a)
phi = 1.0 - math.exp(-kc * A * dt)
dc = phi * g
for k in a:
    mass["so4"][k] += dc * a[k] * n[k] / A
rem = g - dc
# nucleation
dn = min(rem, kn * g * g * r * dt)
g = rem - dn
mass["so4"]["ns"] += dn
n["ns"] += dn / mu_nuc
# coagulation
theta = (T - 190.0) / 120.0
snap = dict(n)
psi = lambda v: 1.0 - math.exp(-ka * (1.0 + theta) * snap[v] * dt)
edges = [
    ("so4", "ns", "ks"), ("so4", "ks", "as"), ("so4", "as", "cs"),
    ("bc", "ki", "ks"), ("bc", "ks", "as"), ("bc", "as", "cs"),
    ("oc", "ki", "ks"), ("oc", "ks", "as"), ("oc", "as", "cs"),
    ("du", "ai", "as"), ("du", "ci", "cs"), ("du", "as", "cs"),
]
first = {}
for s, u, v in edges:
    t = mass[s][u] * psi(v)
    mass[s][u] -= t
    mass[s][v] += t
    first.setdefault(u, v)
for u, v in first.items():
    n[u] -= snap[u] * psi(v)
# self-coagulation
for k in n:
    n[k] -= ks * n[k] ** 2 * dt / (1.0 + ks * n[k] * dt)
# water
w = {
    "ns": omega * r * r * mass["so4"]["ns"],
    "ks": omega * r * r * (mass["so4"]["ks"] + mass["bc"]["ks"] + mass["oc"]["ks"]),
    "as": omega * r * r * sum(mass[s]["as"] for s in mass),
    "cs": omega * r * r * sum(mass[s]["cs"] for s in mass),
}
out = [g - pre_g]
out += [mass["so4"][k] - pre_mass["so4"][k] for k in ["ns", "ks", "as", "cs"]]
out += [mass["bc"][k] - pre_mass["bc"][k] for k in ["ks", "as", "cs", "ki"]]
out += [mass["oc"][k] - pre_mass["oc"][k] for k in ["ks", "as", "cs", "ki"]]
out += [mass["du"][k] - pre_mass["du"][k] for k in ["as", "cs", "ai", "ci"]]
out += [n[k] - pre_n[k] for k in ["ns", "ks", "as", "cs", "ki", "ai", "ci"]]
out += [w[k] for k in ["ns", "ks", "as", "cs"]]
for v in out:
    print(repr(v) + ",")
