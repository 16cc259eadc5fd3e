"""Regenerate the bundled example problem files (deterministic)."""

import json
import os

import numpy as np

from regionalized.gbp import RegionGraphProblem
from regionalized.instances import random_kernel_network, random_quadratic_instance, random_region_problem
from regionalized.problem import problem_from_cofunctor, problem_from_network, problem_from_regions

HERE = os.path.dirname(os.path.abspath(__file__))


def dump(name, doc):
    with open(os.path.join(HERE, name), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def rounded(rp, digits=4):
    return rp.with_hamiltonians([np.round(h, digits) for h in rp.hamiltonians])


def main():
    rng = np.random.default_rng(2024)

    dump("diamond_gbp.json", problem_from_regions(rounded(random_region_problem(rng, "diamond", scale=1.0))))
    dump("three_level_gbp.json", problem_from_regions(rounded(random_region_problem(rng, "three_level", scale=1.0))))
    dump("powerset2.json", problem_from_regions(rounded(random_region_problem(rng, "powerset2", scale=2.0, top_only=True))))

    f, L = random_quadratic_instance(rng, n=5)
    dump("quadratic_newton.json", problem_from_cofunctor(f, L, {"method": "newton", "max_iters": 50}))

    k = random_kernel_network(rng, "chain")
    H = [np.round(rng.uniform(-3, 3, size=d), 4) for d in k.state_spaces]
    dump("kernel_chain.json", problem_from_network(k, H))

    k = random_kernel_network(rng, "diamond")
    H = [np.round(rng.uniform(-3, 3, size=d), 4) for d in k.state_spaces]
    dump("kernel_diamond.json", problem_from_network(k, H))

    k = random_kernel_network(rng, "vee", max_states=2)
    doc = problem_from_network(k, [np.zeros(int(d)) for d in k.state_spaces])
    K = np.array(doc["functor"]["kernels"]["a1->b"])
    K[:, 1] *= 0.9
    doc["functor"]["kernels"]["a1->b"] = K.tolist()
    dump("invalid_kernel.json", doc)

    dump("cyclic.json", {
        "format_version": 1,
        "poset": {"elements": ["x", "y", "z"], "relations": [["x", "y"], ["y", "z"], ["z", "x"]]},
        "functor": {"kind": "explicit", "dims": {"x": 1, "y": 1, "z": 1}, "maps": {}},
        "loss": {"family": "quadratic", "A": {e: [[1.0]] for e in "xyz"}, "b": {e: [0.0] for e in "xyz"}},
    })

    # 3 unrelated elements of dimension 8: the feasible set has 24 dimensions
    dump("oversized.json", {
        "format_version": 1,
        "poset": {"elements": ["p", "q", "r"], "relations": []},
        "functor": {"kind": "explicit", "dims": {e: 8 for e in "pqr"}, "maps": {}},
        "loss": {"family": "free_energy", "hamiltonians": {e: [0.0] * 8 for e in "pqr"}},
    })

    with open(os.path.join(HERE, "malformed.json"), "w", encoding="utf-8") as fh:
        fh.write('{"format_version": 1, "functor": {"kind": "explicit",\n')


if __name__ == "__main__":
    main()
