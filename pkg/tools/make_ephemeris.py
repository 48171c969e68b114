"""Regenerate the bundled Sun/Earth/Moon table from ERFA.

Run offline; the package itself only reads the resulting CSV.

    python tools/make_ephemeris.py 2025-02-20 2025-04-30 7200 src/lunar_odts/data/ephemeris.csv
"""
import csv
import sys
from datetime import datetime, timezone

import erfa
import numpy as np

AU = 149597870700.0
DAY = 86400.0
J2000_JD = 2451545.0


def main(start: str, stop: str, step: float, path: str) -> None:
    t0 = datetime.fromisoformat(start).replace(tzinfo=timezone.utc)
    t1 = datetime.fromisoformat(stop).replace(tzinfo=timezone.utc)
    j2000 = datetime(2000, 1, 1, 12, tzinfo=timezone.utc)
    s0 = (t0 - j2000).total_seconds()
    s1 = (t1 - j2000).total_seconds()
    epochs = np.arange(s0, s1 + 0.5 * step, step)
    with open(path, "w", newline="") as fh:
        fh.write("# barycentric ICRF states, TDB-compatible units\n")
        fh.write("# epoch: TDB seconds past J2000; position m; velocity m/s\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "body", "x", "y", "z", "vx", "vy", "vz"])
        for s in epochs:
            jd2 = s / DAY
            _, pvb = erfa.epv00(J2000_JD, jd2)
            earth = np.concatenate([pvb[0], pvb[1]])
            pvh, _ = erfa.epv00(J2000_JD, jd2)
            sun = earth - np.concatenate([pvh[0], pvh[1]])
            pm = erfa.moon98(J2000_JD, jd2)
            moon = earth + np.concatenate([pm[0], pm[1]])
            for name, st in (("sun", sun), ("earth", earth), ("moon", moon)):
                pos = st[:3] * AU
                vel = st[3:] * AU / DAY
                w.writerow([f"{s:.1f}", name] + [f"{v:.6f}" for v in pos] + [f"{v:.9f}" for v in vel])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2], float(sys.argv[3]), sys.argv[4])
