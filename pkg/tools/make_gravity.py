"""Write the bundled synthetic lunar gravity table (fully normalized).

Degrees 2-4 use published lunar values; higher degrees are drawn from a
Kaula-type power law with a fixed seed so the table is reproducible.

    python tools/make_gravity.py 60 src/lunar_odts/data/moon_gravity.txt
"""
import sys

import numpy as np

LOW = {
    (2, 0): (-9.0880e-05, 0.0), (2, 1): (0.0, 0.0), (2, 2): (3.4674e-05, 0.0),
    (3, 0): (-3.1970e-06, 0.0), (3, 1): (2.6388e-05, 5.4608e-06),
    (3, 2): (1.4171e-05, 4.8792e-06), (3, 3): (1.2280e-05, -1.7686e-06),
    (4, 0): (3.2293e-06, 0.0), (4, 1): (-6.0134e-06, 1.6670e-06),
    (4, 2): (-7.1177e-06, -6.7778e-06), (4, 3): (-1.3597e-06, -1.3444e-05),
    (4, 4): (-6.0148e-06, 3.9306e-06),
}


def main(nmax: int, path: str) -> None:
    rng = np.random.default_rng(20250301)
    with open(path, "w") as fh:
        fh.write("# synthetic lunar gravity field, fully normalized coefficients\n")
        fh.write("# mu = 4.9028000661e12\n# radius = 1738000.0\n")
        fh.write("# n m C S\n")
        fh.write("0 0 1.0 0.0\n")
        for n in range(2, nmax + 1):
            sigma = 2.5e-4 / n**2
            for m in range(n + 1):
                if (n, m) in LOW:
                    c, s = LOW[(n, m)]
                else:
                    c = sigma * rng.standard_normal()
                    s = 0.0 if m == 0 else sigma * rng.standard_normal()
                fh.write(f"{n} {m} {c:.12e} {s:.12e}\n")


if __name__ == "__main__":
    main(int(sys.argv[1]), sys.argv[2])
