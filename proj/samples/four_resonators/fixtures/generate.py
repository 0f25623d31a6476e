"""Writes the mock-solver outputs for the four-resonator sample.

driven/port-S.csv is feedline transmission past four notch resonators
(product of notch responses times the feedline delay), sampled densely
around each resonance and coarsely in between. eigenmode/eig.csv lists the
same modes. Values are the chip's simulated frequencies and couplings.

    python3 generate.py            # rewrites driven/ and eigenmode/
"""

import json
import pathlib

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent

# name, f_r (GHz), kappa = f_r / Q_e (MHz)
RESONATORS = [
    ("R1", 7.1933, 0.3600),
    ("R2", 7.2861, 0.0960),
    ("R3", 7.5604, 0.0916),
    ("R4", 7.6551, 0.1740),
]
Q_INTERNAL = 4.5e5  # silicon loss tangent bound
FEED_DELAY = 67e-12  # s, 8 mm of feedline
F_MIN, F_MAX = 7.10e9, 7.75e9
DOFS = 1_843_296


def q_loaded(f_r, kappa):
    q_e = f_r / kappa
    return 1.0 / (1.0 / Q_INTERNAL + 1.0 / q_e), q_e


def s21(f):
    s = np.exp(-2j * np.pi * f * FEED_DELAY)
    for _, f_ghz, k_mhz in RESONATORS:
        f_r, kappa = f_ghz * 1e9, k_mhz * 1e6
        ql, qe = q_loaded(f_r, kappa)
        s = s * (1.0 - (ql / qe) / (1.0 + 2j * ql * (f - f_r) / f_r))
    return s


def grid():
    pts = [np.arange(F_MIN, F_MAX + 1.0, 1e6)]
    for _, f_ghz, k_mhz in RESONATORS:
        f_r = f_ghz * 1e9
        ql, _ = q_loaded(f_r, k_mhz * 1e6)
        lw = f_r / ql
        pts.append(f_r + lw * np.linspace(-15.0, 15.0, 601))
    # kHz grid keeps the exported frequencies exact in decimal
    f = np.unique(np.round(np.concatenate(pts) / 1e3) * 1e3)
    return f[(f >= F_MIN) & (f <= F_MAX)]


def write_driven(out):
    f = grid()
    s = s21(f)
    s11 = np.sqrt(np.clip(1.0 - np.abs(s) ** 2, 0.0, None)) * np.exp(1j * (np.pi / 2 - 2 * np.pi * f * FEED_DELAY))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "port-S.csv", "w") as fh:
        fh.write("f (GHz),|S[1][1]| (dB),arg(S[1][1]) (deg.),|S[2][1]| (dB),arg(S[2][1]) (deg.)\n")
        for fi, a, b in zip(f, s11, s):
            fh.write(
                f"{fi / 1e9:.6f},{20 * np.log10(max(abs(a), 1e-300)):+.15e},{np.degrees(np.angle(a)):+.15e},"
                f"{20 * np.log10(abs(b)):+.15e},{np.degrees(np.angle(b)):+.15e}\n"
            )
    (out / "palace.json").write_text(json.dumps({"Problem": {"DegreesOfFreedom": DOFS}}, indent=2) + "\n")


def write_eigen(out):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eig.csv", "w") as fh:
        fh.write("m,Re{f} (GHz),Im{f} (GHz),Q\n")
        for m, (_, f_ghz, k_mhz) in enumerate(RESONATORS, start=1):
            ql, _ = q_loaded(f_ghz * 1e9, k_mhz * 1e6)
            fh.write(f"{m},{f_ghz:.10f},{f_ghz / (2 * ql):.10e},{ql:.10e}\n")
    (out / "palace.json").write_text(json.dumps({"Problem": {"DegreesOfFreedom": DOFS}}, indent=2) + "\n")


if __name__ == "__main__":
    write_driven(HERE / "driven")
    write_eigen(HERE / "eigenmode")
