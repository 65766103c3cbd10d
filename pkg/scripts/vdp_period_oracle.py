"""Independent reference period for the Van der Pol cycle (mu = 1).

Uses scipy's DOP853 at rtol = atol = 1e-12 and a return map on the section
x = 0, y > 0. Nothing from planarmin is imported. The printed period is the
value frozen in the test suite.
"""

import argparse

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar


def vdp(t, z, mu):
    x, y = z
    return [y, mu * (1 - x * x) * y - x]


def section(t, z, mu):
    return z[0]


section.direction = 1.0  # x increasing through 0 happens with y > 0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--t-end", type=float, default=400.0)
    args = ap.parse_args()

    sol = solve_ivp(vdp, (0, args.t_end), [2.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-12,
                    events=section, dense_output=True, args=(args.mu,))
    te, ye = sol.t_events[0], sol.y_events[0]
    up = te[ye[:, 1] > 0]
    periods = np.diff(up)
    print("last return periods:", " ".join(f"{p:.13f}" for p in periods[-5:]))
    print(f"spread of last 5: {np.ptp(periods[-5:]):.2e}")
    ts = np.linspace(0.75 * args.t_end, args.t_end, 200001)
    X = sol.sol(ts)
    print(f"amplitude: max|x| = {np.abs(X[0]).max():.9f}, max|y| = {np.abs(X[1]).max():.6f}")
    print(f"period = {float(periods[-1])!r}")

    # largest excursion from (2, 0) over [0, 50]; one third of it times 0.9
    # is the reference scale of the shrinking-ball construction
    s = solve_ivp(vdp, (0, 50), [2.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-12,
                  dense_output=True, args=(args.mu,))
    ts = np.linspace(0, 50, 2000001)
    X = s.sol(ts)
    k = int(np.argmax(np.hypot(X[0] - 2, X[1])))
    dist = lambda t: -float(np.hypot(s.sol(t)[0] - 2, s.sol(t)[1]))
    r = minimize_scalar(dist, bounds=(ts[k] - 1e-4, ts[k] + 1e-4), method="bounded",
                        options={"xatol": 1e-12})
    print(f"max excursion from (2,0) = {float(-r.fun)!r}, D = {float(0.3 * -r.fun)!r}")


if __name__ == "__main__":
    main()
