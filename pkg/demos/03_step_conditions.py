"""How the step-size checker picks the balancing parameter alpha.

For a primal-dual problem the checker measures the scaled coupling norm
``||U^{1/2} L W^{1/2}||`` and the effective cocoercivity constants ``mu``
and ``nu``. It then evaluates ``theta_alpha``, the margin that must exceed
one half. The best ``alpha`` has a closed form. This script compares it with
a brute-force scan and shows how the auto-tuned metrics of a zoo problem
sit just inside the admissible region.

Run with ``python3 demos/03_step_conditions.py``.
"""

import numpy as np

from rpd.harness import ProblemSpec, check_spec
from rpd.pd_engine import alpha_hat, theta_alpha


def main():
    norm, mu, nu = 0.5, 2.0, 1.0
    best = alpha_hat(norm, mu, nu)
    grid = np.logspace(-3, 3, 2001)
    scan = max(theta_alpha(norm, mu, nu, a) for a in grid)
    print(f"norm={norm}, mu={mu}, nu={nu}: alpha_hat={best:.6f}, "
          f"theta={theta_alpha(norm, mu, nu, best):.10f}, grid max={scan:.10f}")
    for family, algo in [("lasso", "alg1"), ("tv1d", "alg2"), ("ridge_consensus", "dist_opt")]:
        rep = check_spec(ProblemSpec.from_dict({"version": 1, "family": family,
                                                "algorithm": algo})).to_dict()
        print(f"{family:>16}/{algo:<8} norm={rep['norm']:.4f} mu={rep['mu']:.4f} "
              f"nu={rep['nu']} verdict={rep['verdict']}")


if __name__ == "__main__":
    main()
