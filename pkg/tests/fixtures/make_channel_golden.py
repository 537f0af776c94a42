"""Regenerate channel_golden.json from the mpmath reference.

    python tests/fixtures/make_channel_golden.py
"""
import json
import random
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

import oracles  # noqa: E402

MU0 = 4e-7 * 3.141592653589793
EPS0 = 8.854e-12


def main():
    rnd = random.Random(20240601)
    cases = []
    for _ in range(25):
        p = {
            "carrier_freq": rnd.uniform(4.0e8, 1.0e9),
            "eps_real": rnd.uniform(2.0, 30.0),
            "eps_imag": rnd.uniform(0.01, 5.0),
            "mu_r": rnd.uniform(0.9, 1.1),
            "burial_depth": rnd.uniform(0.05, 1.0),
            "pathloss_exp_ug": rnd.uniform(1.5, 3.5),
            "los_a": rnd.uniform(4.0, 12.0),
            "los_b": rnd.uniform(0.1, 0.6),
            "eta_los_db": rnd.uniform(0.0, 2.0),
            "eta_nlos_db": rnd.uniform(10.0, 30.0),
        }
        dist = rnd.uniform(20.0, 1500.0)
        h = rnd.uniform(5.0, min(dist, 300.0))
        a, b, dp, ls = oracles.soil(p["carrier_freq"], p["eps_real"], p["eps_imag"], p["mu_r"], MU0, EPS0,
                                    p["burial_depth"])
        cases.append({
            "params": p, "distance": dist, "uav_height": h,
            "alpha": float(a), "beta": float(b), "d_p": float(dp), "l_soil": float(ls),
            "ug2a_db": float(oracles.ug2a_db(ls, p["carrier_freq"], 3e8, dist, p["pathloss_exp_ug"])),
            "p_los": float(oracles.los_prob(h, dist, p["los_a"], p["los_b"])),
            "g2a_db": float(oracles.g2a_db(h, dist, p["carrier_freq"], 3e8, p["los_a"], p["los_b"],
                                           p["eta_los_db"], p["eta_nlos_db"])),
        })
    (HERE / "channel_golden.json").write_text(json.dumps({"cases": cases}, indent=1) + "\n")


if __name__ == "__main__":
    main()
