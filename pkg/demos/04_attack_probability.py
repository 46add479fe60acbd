"""
How likely is a double spend?
=============================

"""

from dpow.security import (AttackScenario, grid_rows, grid_to_csv, monte_carlo_double_spend,
                           p_att, pf_chernoff_bound, pf_exact, ps_double_spend)

# the attacker needs a corrupted quorum of verifiers AND a winning chain race
for t in (10, 20, 30, 40, 50):
    s = AttackScenario(total_parties=100, attacker_parties=t, verifier_count=10, confirmations=6)
    print(f"T/N={t / 100:.1f}  P_f bound={pf_chernoff_bound(100, t, 10).value:.3e}  "
          f"P_f exact={pf_exact(100, t, 10).value:.3e}  P_s={ps_double_spend(s).value:.3e}  "
          f"P_att<={p_att(s).value:.3e}")

# without the committee the race alone is the classic PoW attack
print("race only, q=0.1, z=5:", round(ps_double_spend(AttackScenario(10, 1, 4, 5)).value, 7))

# an independent simulation stays under the analytic bound
s = AttackScenario(100, 40, 10, 2)
mc = monte_carlo_double_spend(s, 200_000, seed=3)
print(f"simulated {mc.value:.4f} +/- {mc.stderr:.4f}, bound {p_att(s).value:.4f}")

# the whole grid as CSV
print(grid_to_csv(grid_rows([AttackScenario(100, t, 30, 6) for t in (10, 30, 50)])))
