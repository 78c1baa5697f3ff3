"""Extended-precision reference values frozen into the Rust tests.

Run with `python3 extended_precision.py`; every constant asserted in the
divergence, design and estimation tests is printed here at 60 digits.
"""
from mpmath import mp, mpf, log, exp, sqrt, findroot

mp.dps = 60


def kl(x, y):
    x, y = mpf(x), mpf(y)
    a = mpf(0) if x == 0 else x * log(x / y)
    b = mpf(0) if x == 1 else (1 - x) * log((1 - x) / (1 - y))
    return a + b


def sig(u):
    return 1 / (1 + exp(-mpf(u)))


def dsig(u):
    s = sig(u)
    return s * (1 - s)


def bisect(f, lo, hi, tol=mpf("1e-40")):
    flo = f(lo)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return (lo + hi) / 2


def heuristic(delta, t):
    return 2 * log((log(mpf(t)) + 1) / mpf(delta))


if __name__ == "__main__":
    print("kl(0.8,0.5)      ", kl("0.8", "0.5"))
    print("kl(1,0.5)        ", kl(1, "0.5"))
    print("kl(0.7,0.5)      ", kl("0.7", "0.5"))
    print("kl(0.6,0.5)      ", kl("0.6", "0.5"))
    print("kl(0.05,0.95)    ", kl("0.05", "0.95"))
    print("kl(0.01,0.99)    ", kl("0.01", "0.99"))
    print("sig(1)           ", sig(1))
    print("dsig(1)          ", dsig(1))
    print("sig(1.9/15)      ", sig(mpf("1.90") / 15))
    # allocation / characteristic time on the K=3 instance
    d1, d2 = kl("0.8", "0.5"), kl("0.7", "0.5")
    print("T* K=3           ", 1 / d1 + 1 / d2)
    print("w01 K=3          ", (1 / d1) / (1 / d1 + 1 / d2))
    print("T* K=2           ", 1 / d1)
    print("lower bound K=2  ", kl("0.05", "0.95") / d1)
    print("Z K=2 N=10       ", 10 * d1)
    print("Z K=3 (30,30,0)  ", min(30 * d1, 30 * d2))
    print("rho heur t=1     ", heuristic("0.05", 1))
    # scalar regularised MLE: sigma(theta) + theta = 1
    print("reg_mle scalar   ", bisect(lambda th: sig(th) + th - 1, mpf(0), mpf(1)))
    print("gap_ratio K=2    ", dsig(1) / 2)
    print("U* K=2           ", 2 / dsig(1))
    print("structured Z     ", (100 * dsig(1) + mpf("0.1")) / 2)
    # beta threshold worked example: d=1,c=1,t0=1,t=4, logdetV=log4, lambda_t=0.5, B=L=1
    lam_t, lam0 = 1 * sqrt(4), 1 * sqrt(1)
    r = lam0 / lam_t
    psi = (1 + r) * (2 * log(1 / mpf("0.05")) + (log(4) - log(lam_t)) + log(1 + r) + log(lam_t / lam0))
    m0 = dsig(1)
    beta = (2 * (1 + 2) * (sqrt(psi / m0) + sqrt(mpf("0.5")) * 1)) ** 2
    print("Psi example      ", psi)
    print("beta example     ", beta)
    # degenerate judge: first t with t*ln2 > heuristic(0.05, t)
    t = 1
    while not (t * log(2) > heuristic("0.05", t)):
        t += 1
    print("degenerate stop t", t)
    # RUCB bound
    print("rucb U(1,0)      ", mpf("0.1") + sqrt(mpf("0.51") * log(100) / 100))
