"""Independent scalar evaluation of the JCS link budget for the fixtures
used in src/jcs/tests.rs. Run with `python3 jcs_oracle.py`; the printed
values are frozen into the Rust tests."""
from mpmath import mp, mpf, asin, tan, pi, exp, atan2, radians, log

mp.dps = 40
f = mpf("1.05e12"); c = mpf("3e8"); B = mpf("5e9")
N0 = mpf(10) ** (mpf(-77) / 10) / 1000
P = mpf(10); sigma = mpf(1)
th = radians(10)
omega = 4 * asin(tan(th / 2) ** 2)
GM = 4 * pi / (mpf("1.1") * omega)
GS = 4 * pi * mpf("0.1") / (mpf("1.1") * (4 * pi - omega))


def dist(a, b):
    return mp.sqrt((mpf(a[0]) - b[0]) ** 2 + (mpf(a[1]) - b[1]) ** 2)


def gain(origin, bore, probe):
    bx, by = mpf(bore[0]) - origin[0], mpf(bore[1]) - origin[1]
    px, py = mpf(probe[0]) - origin[0], mpf(probe[1]) - origin[1]
    ang = abs(atan2(bx * py - by * px, bx * px + by * py))
    return GM if ang <= th / 2 else GS


def LF(d):
    return (4 * pi * f * d / c) ** 2


def LA(d, phi):
    return exp(phi * d)


def comm_sinr(spv, tgt, beams, phi):
    """beams: list of (tx_pos, target_pos) for other SPVs."""
    d = dist(spv, tgt)
    S = P * GM * GM / (LA(d, phi) * LF(d))
    I = 0; N = N0
    for tx, bt in beams:
        di = dist(tx, tgt)
        g = P * gain(tx, bt, tgt) * gain(tgt, spv, tx)
        I += g / (LA(di, phi) * LF(di))
        N += g * (1 - exp(-phi * di)) / LF(di)
    return S / (I + N), I


def sense_sinr(spv, tgt, beams, phi, roundtrip=False):
    """beams: list of (tx_pos, target_pos, is_sensing)."""
    d = dist(spv, tgt)
    Ls = (4 * pi) ** 3 * f ** 2 * d ** 4 / (sigma * c ** 2)
    la = LA(d, phi) ** (2 if roundtrip else 1)
    S = P * GM * GM / (Ls * la)
    I = 0; N = N0; scat = 0
    for tx, bt, sensing in beams:
        di = dist(tx, spv)
        g = P * gain(tx, bt, spv) * gain(spv, tgt, tx)
        I += g / (LA(di, phi) * LF(di))
        N += g * (1 - exp(-phi * di)) / LF(di)
        if sensing:
            din = dist(tx, tgt)
            scat += P * gain(tx, bt, tgt) * GM * sigma * c ** 2 / (
                (4 * pi) ** 3 * f ** 2 * din ** 2 * d ** 2 * LA(din, phi) * LA(d, phi))
    return S / (I + scat + N), I + scat, scat


phi = mpf("0.07512")
# isolated pair, transparent medium, 10 m
s, _ = comm_sinr((10, 50), (20, 50), [], 0)
print("isolated_pair_sinr", s, "rate", B * log(1 + s, 2))
# two SPVs, two comm targets
spv0, spv1, c0, c1 = (10, 50), (50, 50), (30, 50), (20, 51)
s0, i0 = comm_sinr(spv0, c0, [(spv1, c1)], phi)
s1, i1 = comm_sinr(spv1, c1, [(spv0, c0)], phi)
print("two_link c0 sinr", s0, "interf", i0)
print("two_link c1 sinr", s1, "interf", i1)
print("two_link objective", B * log(1 + s0, 2) + B * log(1 + s1, 2))
# sensing: spv0 senses s0, spv1 senses s1 aimed near s0
t0, t1 = (25, 50), (35, 50.5)
g0, i0, sc0 = sense_sinr(spv0, t0, [(spv1, t1, True)], phi)
print("sense s0 sinr", g0, "interf", i0, "scatter", sc0)
g1, i1, sc1 = sense_sinr(spv1, t1, [(spv0, t0, True)], phi)
print("sense s1 sinr", g1, "interf", i1, "scatter", sc1)
# isolated sensing, both conventions
gi, _, _ = sense_sinr(spv0, t0, [], phi)
gr, _, _ = sense_sinr(spv0, t0, [], phi, True)
print("isolated sense single", gi, "roundtrip", gr)
# sensing victim with comm-mode interferer only: spv1 serves c at (35, 50.5)
g2, i2, sc2 = sense_sinr(spv0, t0, [(spv1, t1, False)], phi)
print("sense comm-interferer sinr", g2, "interf", i2, "scatter", sc2)
