"""Scratch: closed-form recourse vs LP oracle sweep. Not shipped."""
import itertools
import time
import numpy as np

from edgeplace.instance import GeneratorConfig, generate_instance
from edgeplace import recourse


def tiny_config(seed, I=None, J=None, N=None):
    rng = np.random.default_rng(seed + 991)
    I = I or int(rng.integers(1, 6))
    J = J or int(rng.integers(1, 5))
    N = N or int(rng.integers(2, 9))
    return GeneratorConfig(
        seed=seed,
        num_areas=I, num_nodes=J, support_size=N,
        mean_range=(0.3 * N, 0.6 * N),
        variation_ratio=float(rng.uniform(0.3, 0.8)),
        eps_mu=float(rng.uniform(0.2, 0.9)),
        eps_sigma=float(rng.uniform(0.05, 0.4)),
        budget=float(rng.uniform(40, 120)),
        min_nodes=0,
        delay_threshold=float(rng.uniform(5, 90)),
        delay_weight=float(rng.choice([0.001, 0.01, 0.1, 0.3])),
        capacity_pool=tuple(rng.uniform(0.2 * N, 1.5 * N, size=3)),
    )


def main(num=100):
    t0 = time.time()
    worst = 0.0
    checked = 0
    for t in range(num):
        cfg = tiny_config(t)
        inst, spec = generate_instance(cfg)
        J = inst.num_nodes
        for bits in itertools.product([0, 1], repeat=J):
            y = np.array(bits, dtype=float)
            tab = recourse.theta_table(inst, spec.support, y)
            for i in range(inst.num_areas):
                for n in range(spec.num_support):
                    ref, _, _ = recourse._area_lp_value(
                        inst, y, i, float(spec.support[n]))
                    err = abs(ref - tab.values[i, n])
                    worst = max(worst, err)
                    checked += 1
                    if err > 1e-6:
                        print(f"MISMATCH inst={t} y={bits} i={i} n={n} "
                              f"lp={ref} closed={tab.values[i,n]}")
                        return
        if t % 20 == 0:
            print(f"  ...{t} instances, worst={worst:.2e}, {time.time()-t0:.1f}s")
    print(f"OK: {num} instances, {checked} entries, worst |diff| = {worst:.3e}, "
          f"{time.time()-t0:.1f}s")


if __name__ == "__main__":
    main(60)
