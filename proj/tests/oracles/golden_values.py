"""Independent high-precision oracle for frozen test values.

Run: python3 tests/oracles/golden_values.py
"""
from mpmath import mp, mpf, sqrt

mp.dps = 40
MASK = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


def xoshiro_stream(seed, n):
    st = seed
    s = []
    for _ in range(4):
        st, v = splitmix64(st)
        s.append(v)
    out = []
    for _ in range(n):
        result = (rotl((s[1] * 5) & MASK, 7) * 9) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        out.append(result)
    return out


def ddim_coeffs(ab_to, ab_from):
    lam = sqrt(ab_to / ab_from)
    tau = sqrt(ab_to) * (sqrt(1 / ab_to - 1) - sqrt(1 / ab_from - 1))
    return lam, tau


if __name__ == "__main__":
    print("# xoshiro256** seeded by splitmix64(0), first 16 outputs")
    for v in xoshiro_stream(0, 16):
        print(v)
    ab = [mpf(1)]
    for t in range(1, 11):
        ab.append(ab[-1] * (1 - mpf("0.1")))
    lam2, tau2 = ddim_coeffs(ab[1], ab[2])
    print("lambda_2", mp.nstr(lam2, 12), "tau_2", mp.nstr(tau2, 12))
    print("z2", mp.nstr(sqrt(ab[2]) + sqrt(1 - ab[2]), 12))
    print("z1", mp.nstr(sqrt(ab[1]) + sqrt(1 - ab[1]), 12))
    lam1, tau1 = ddim_coeffs(ab[0], ab[1])
    print("lambda_1", mp.nstr(lam1, 12), "tau_1", mp.nstr(tau1, 12))
    z1 = sqrt(ab[1]) + sqrt(1 - ab[1])
    print("zhat_from_z1", mp.nstr(lam1 * z1 + tau1, 12))
    # linear 1e-4..0.02 over T=1000: extreme coefficients
    T = 1000
    ab = [mpf(1)]
    for t in range(1, T + 1):
        beta = mpf("1e-4") + (mpf("0.02") - mpf("1e-4")) * (t - 1) / (T - 1)
        ab.append(ab[-1] * (1 - beta))
    print("alpha_bar_1000", mp.nstr(ab[T], 12))
    print("max tau", mp.nstr(max(ddim_coeffs(ab[t - 1], ab[t])[1] for t in range(1, T + 1)), 12))
