"""Independent reference values for the C++ tests.

Written directly from the model formulas with mpmath (40 digits) and scipy, sharing no code with
the library. Run `python3 tests/oracles/oracle.py > tests/oracles/frozen.hpp` to regenerate.
"""
import mpmath as mp
import numpy as np
from scipy.interpolate import PchipInterpolator

mp.mp.dps = 40

# Measured cavity and magnon parameters (linear frequencies; GHz for carriers, MHz for rates).
NEAR = dict(fc=mp.mpf("6.181"), b0=mp.mpf(17), kl=mp.mpf("332.4"), kr=mp.mpf("370.0"))
AWAY = dict(fc=mp.mpf("6.203"), b0=mp.mpf(17), kl=mp.mpf(37), kr=mp.mpf(37))
MAG = dict(a0=mp.mpf("0.8"), kl=mp.mpf(8), kr=mp.mpf(7))
GAMMA_E = mp.mpf("22.4")
MU0_HA = mp.mpf("-7.1")
WAVELENGTH_MM = mp.mpf("32.7")
LENGTH_M = 66 * WAVELENGTH_MM / 1000


def beta(c):
    return c["b0"] + c["kl"] / 2 - c["kr"] / 2


def s21_bare(f_mhz, c):
    # f_mhz absolute, MHz
    wc = c["fc"] * 1000
    return (f_mhz - wc + 1j * beta(c)) / (f_mhz - wc + 1j * (c["b0"] + (c["kl"] + c["kr"]) / 2))


def s21_coupled(f_mhz, c, fm_mhz, phi, eta, delta):
    wc = c["fc"] * 1000 - 1j * beta(c)
    alpha = MAG["a0"] + MAG["kl"] / 2 - MAG["kr"] / 2
    wm = fm_mhz - 1j * alpha
    K = mp.sqrt(c["kr"] * MAG["kr"] * c["kl"] * MAG["kl"])
    e = mp.expj(2 * phi / eta)
    g0sq = -c["kr"] * MAG["kr"] * (1 - delta) * (e * mp.sqrt(c["kl"] * MAG["kl"] / (c["kr"] * MAG["kr"])) - delta)
    num = (f_mhz - wm + 1j * (1 - delta**2) * MAG["kr"]) * (f_mhz - wc) - g0sq
    den = (f_mhz - wm + 1j * MAG["kr"]) * (f_mhz - wc + 1j * c["kr"]) + K * e
    return num / den


def instrument_phase_delay_ns(fn, f_mhz):
    # tau = -d(phase)/d(omega) with phase = -arg(S21); omega = 2 pi f, f in MHz -> ns factor 1e3/(2 pi)
    return mp.diff(lambda f: mp.arg(fn(f)), f_mhz) * 1000 / (2 * mp.pi)


def minima(fn, guesses):
    out = []
    for g in guesses:
        x = mp.findroot(lambda f: mp.diff(lambda y: abs(fn(y)) ** 2, f), g)
        out.append(x)
    return out


def emit(name, value):
    print(f"inline constexpr double {name} = {mp.nstr(value, 17)};")


print("#pragma once")
print("// Generated by tests/oracles/oracle.py; do not edit.")
print("namespace oracle {")

# Magnon dispersion: brute-force scan of the field axis for f_m = f_c (near c.c.).
fields = np.linspace(270.0, 290.0, 200001)
freqs = 22.4 * (fields - 7.1) * 1e-3
i = int(np.argmin(np.abs(freqs - 6.181)))
emit("kFieldForNearFcScan_mT", fields[i])
emit("kFieldForNearFcExact_mT", NEAR["fc"] / GAMMA_E * 1000 - MU0_HA)
emit("kMagnonFrequencyAt283_GHz", GAMMA_E * (mp.mpf(283) + MU0_HA) / 1000)

# Bare cavity at resonance.
emit("kAwayS21AtFc", mp.re(s21_bare(AWAY["fc"] * 1000, AWAY)))
emit("kNearS21AtFcMagnitude", abs(s21_bare(NEAR["fc"] * 1000, NEAR)))

# Group delay at and around resonance, by high-precision numerical differentiation.
for tag, c in (("Near", NEAR), ("Away", AWAY)):
    for off in (0, 1, 5, 20):
        emit(f"kTau{tag}Offset{off}_ns", instrument_phase_delay_ns(lambda f: s21_bare(f, c), c["fc"] * 1000 + off))

# Coupled transmission, f_m = f_c, Phi = Phi_L + pi with Phi_L = 132 pi.
phi = 2 * mp.pi * LENGTH_M * 1000 / WAVELENGTH_MM + mp.pi
fc = NEAR["fc"] * 1000
anom = lambda f: s21_coupled(f, NEAR, fc, phi, 2, mp.mpf("0.996"))
lo, hi = minima(anom, [fc - 4, fc + 4])
emit("kAnomalousMinLow_MHz", lo - fc)
emit("kAnomalousMinHigh_MHz", hi - fc)
emit("kAnomalousMinDepth", abs(anom(hi)))
emit("kAnomalousCooperativity", ((hi - lo) / 2) ** 2 / abs(beta(NEAR) * (MAG["a0"] + MAG["kl"] / 2 - MAG["kr"] / 2)))
conv = lambda f: s21_coupled(f, NEAR, fc, phi, 1, 1)
(single,) = minima(conv, [fc])
emit("kConventionalMin_MHz", single - fc)

# Denominator poles (absolute MHz) and drift-matrix eigenvalues, same system.
wc = NEAR["fc"] * 1000 - 1j * beta(NEAR)
alpha = MAG["a0"] + MAG["kl"] / 2 - MAG["kr"] / 2
wm = fc - 1j * alpha
K = mp.sqrt(NEAR["kr"] * MAG["kr"] * NEAR["kl"] * MAG["kl"])
a = wm - 1j * MAG["kr"]
b = wc - 1j * NEAR["kr"]
roots = mp.polyroots([1, -(a + b), a * b + K * mp.expj(phi)], maxsteps=200, extraprec=100)
roots = sorted(roots, key=lambda z: (mp.re(z), mp.im(z)), reverse=True)
for tag, z in zip(("Plus", "Minus"), roots):
    emit(f"kPole{tag}Re_MHz", mp.re(z) - fc)
    emit(f"kPole{tag}Im_MHz", mp.im(z))
kc = (NEAR["kl"] + NEAR["kr"]) / 2
km = (MAG["kl"] + MAG["kr"]) / 2
hop = -1j * mp.expj(phi / 2)
M = mp.matrix([[fc - 1j * (NEAR["b0"] + kc), hop * mp.sqrt(NEAR["kr"] * MAG["kr"])],
               [hop * mp.sqrt(NEAR["kl"] * MAG["kl"]), fc - 1j * (MAG["a0"] + km)]])
ev = sorted(mp.eig(M)[0], key=lambda z: (mp.re(z), mp.im(z)), reverse=True)
for tag, z in zip(("Plus", "Minus"), ev):
    emit(f"kEig{tag}Re_MHz", mp.re(z) - fc)
    emit(f"kEig{tag}Im_MHz", mp.im(z))

# Critical spacings of a coarse synthetic table (0.25 mm rows; roots not on nodes), via scipy's PCHIP.
d = np.arange(4.5, 7.0001, 0.25)
b_true = 10 * (d - 4.9) * (d - 5.8)
kl = np.full_like(d, 300.0)
kr = 2 * (17 + kl / 2 - b_true)
f = lambda x: 17 + PchipInterpolator(d, kl)(x) / 2 - PchipInterpolator(d, kr)(x) / 2
from scipy.optimize import brentq
grid = np.linspace(d[0], d[-1], 20001)
vals = f(grid)
found = [brentq(f, grid[j], grid[j + 1], xtol=1e-14) for j in range(len(grid) - 1) if vals[j] * vals[j + 1] < 0]
emit("kCoarseTableRootLow_mm", found[0])
emit("kCoarseTableRootHigh_mm", found[1])

print("}  // namespace oracle")
