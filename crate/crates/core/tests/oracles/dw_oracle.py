"""Arbitrary-precision reference values for the discrete Weibull kernels.

Run with `python3 dw_oracle.py`; the printed numbers are frozen into
`tests/distribution.rs`.
"""
from mpmath import mp, mpf, power, log, exp, findroot, nsum, inf

mp.dps = 60


def pmf(y, q, b):
    q = mpf(q)
    b = mpf(b)
    return power(q, power(y, b)) - power(q, power(y + 1, b))


def moments(q, b, upto):
    q = mpf(q)
    b = mpf(b)
    m1 = mpf(0)
    m2 = mpf(0)
    for y in range(1, upto):
        t = power(q, power(y, b))
        m1 += t
        m2 += (2 * y - 1) * t
        if t < mpf(10) ** -40:
            break
    return m1, m2 - m1 * m1


print("pmf(3; 0.8, 2.5) =", mp.nstr(pmf(3, "0.8", "2.5"), 25))
print("log pmf(50; 0.999, 1.2) =", mp.nstr(log(pmf(50, "0.999", "1.2")), 25))
print("log pmf(5; 0.2, 6) =", mp.nstr(log(pmf(5, "0.2", "6")), 25))
print("log pmf(0; 1-1e-12, 1) =", mp.nstr(log(pmf(0, 1 - mpf("1e-12"), 1)), 25))

# continuous quantile root: 1 - q^((y+1)^b) = tau
q, b, tau = mpf("0.8"), mpf("1.5"), mpf("0.9")
root = findroot(lambda y: 1 - power(q, power(y + 1, b)) - tau, 3)
print("cq(0.9; 0.8, 1.5) =", mp.nstr(root, 25))

m, v = moments("0.7", "2", 10**6)
print("mean(0.7,2) =", mp.nstr(m, 25), " var =", mp.nstr(v, 25))
m, v = moments("0.5", "3.5", 10**6)
print("mean(0.5,3.5) =", mp.nstr(m, 25), " var =", mp.nstr(v, 25), " VR =", mp.nstr(v / m, 25))
