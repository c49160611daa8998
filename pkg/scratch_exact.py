"""Scratch: P1' exactness vs brute force on tiny instances. Not shipped."""
import itertools
import time
import numpy as np

from edgeplace.instance import GeneratorConfig, generate_instance
from edgeplace.moments import worst_case_distribution, is_ambiguity_nonempty
from edgeplace.recourse import theta_table
from edgeplace.reformulation import ReformulationOptions, build_milp, extract_placement
from edgeplace import solver
from edgeplace.external import external_adapter


def tiny_config(seed, rng):
    I = int(rng.integers(2, 5))
    J = int(rng.integers(2, 6))
    N = int(rng.integers(3, 7))
    return GeneratorConfig(
        seed=seed,
        num_areas=I, num_nodes=J, support_size=N,
        mean_range=(0.30 * N, 0.55 * N),
        variation_ratio=float(rng.uniform(0.3, 0.7)),
        eps_mu=float(rng.uniform(0.3, 0.9)),
        eps_sigma=float(rng.uniform(0.1, 0.4)),
        budget=float(rng.uniform(40, 130)),
        min_nodes=int(rng.integers(0, 2)),
        delay_threshold=float(rng.uniform(10, 70)),
        delay_weight=float(rng.choice([0.001, 0.01, 0.05])),
        capacity_pool=tuple(rng.uniform(0.3 * N, 1.6 * N, size=3)),
    )


def all_feasible_nonempty(inst, spec):
    """Instance usable for exactness tests: every budget-feasible y has a
    nonempty ambiguity set."""
    J = inst.num_nodes
    ys = []
    for bits in itertools.product([0, 1], repeat=J):
        y = np.array(bits, dtype=float)
        if inst.placement_cost @ y > inst.budget + 1e-9:
            continue
        if y.sum() < inst.min_nodes:
            continue
        if not is_ambiguity_nonempty(spec, y):
            return None
        ys.append(y)
    return ys


def brute_force(inst, spec, ys):
    best, besty = np.inf, None
    for y in ys:
        tab = theta_table(inst, spec.support, y)
        _, wc = worst_case_distribution(spec, y, tab)
        val = float(inst.placement_cost @ y) + wc
        if val < best - 1e-12:
            best, besty = val, y
    return best, besty


def main(num=12):
    rng = np.random.default_rng(2024)
    t0 = time.time()
    done = 0
    seed = 0
    while done < num:
        seed += 1
        cfg = tiny_config(seed, rng)
        inst, spec = generate_instance(cfg)
        ys = all_feasible_nonempty(inst, spec)
        if ys is None or not ys:
            continue
        bf, bfy = brute_force(inst, spec, ys)

        t1 = time.time()
        model = build_milp(inst, spec, ReformulationOptions(include_cuts=False))
        res = solver.solve_milp(model)
        t_std = time.time() - t1
        t1 = time.time()
        model_c = build_milp(inst, spec, ReformulationOptions(include_cuts=True))
        res_c = solver.solve_milp(model_c)
        t_cut = time.time() - t1
        ext = external_adapter(model)

        I, J, N = inst.num_areas, inst.num_nodes, spec.num_support
        rel = abs(res.objective - bf) / max(1.0, abs(bf))
        rel_c = abs(res_c.objective - bf) / max(1.0, abs(bf))
        rel_e = abs(ext.objective - bf) / max(1.0, abs(bf))
        flag = "OK " if max(rel, rel_c, rel_e) <= 1e-6 else "BAD"
        print(f"{flag} seed={seed} I={I} J={J} N={N} rows={model.num_constraints} "
              f"vars={model.num_vars} bf={bf:.6f} milp={res.objective:.6f} "
              f"cuts={res_c.objective:.6f} ext={ext.objective:.6f} "
              f"nodes={res.stats.nodes}/{res_c.stats.nodes} "
              f"t={t_std:.1f}/{t_cut:.1f}s y*={bfy.astype(int)}")
        if flag == "BAD":
            ymilp = extract_placement(model, res.x, J)
            print("   milp y:", ymilp)
            return
        done += 1
    print(f"all {num} instances exact, total {time.time()-t0:.1f}s")


if __name__ == "__main__":
    main()
