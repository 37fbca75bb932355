"""Critical killing rate and the flow around it.

Starting the coupling recursion exactly at beta_c(lambda) keeps beta_k
small for as many steps as the precision allows; any other start runs
off.  This script prints beta_c for a few couplings, shows that the
bounded trajectory has lambda_k decaying like lambda/(1 + 8 B lambda k),
and shows how a tiny shift of beta grows by a factor of about L^2 per step.
"""
import mpmath
import numpy as np

from hsaw import rg

B = 15 / 16

print("lambda    beta_c                  beta_c/lambda  bracket   steps held")
for lam in (0.01, 0.02, 0.05):
    cd = rg.critical_beta(lam)
    print(f"{lam:<8}  {cd.beta_c.real:<22.17g}  {cd.beta_c.real / lam:<13.6f}  "
          f"{cd.bracket_width:.1e}  {cd.steps_held}")

lam = 0.02
betas, lams = rg.critical_trajectory(lam, 200)
print("\ncritical trajectory at lambda = 0.02")
print("  k    beta_k          lambda_k        lambda/(1+8B lambda k)")
for k in (0, 1, 5, 20, 50, 100, 200):
    model = lam / (1 + 8 * B * lam * k)
    print(f"{k:>3}    {betas[k].real:<14.6e}  {lams[k].real:<14.6e}  {model:.6e}")

cd = rg.critical_beta(lam)
print("\nescape of beta_c + delta (flow in the ball |beta| <= 1/2)")
with mpmath.workdps(80):
    for delta in (1e-6, 1e-12, 1e-24):
        for sign in (1, -1):
            r = rg.flow(cd.beta_c_exact + sign * mpmath.mpf(delta), mpmath.mpf(lam), region="ball")
            side = "+" if r.beta[-1] > 0 else "-"
            print(f"  delta = {sign * delta:+.0e}: leaves at step {r.exit_step:>2} on the {side} side"
                  f"  (log_4(1/(2 delta)) = {np.log(0.5 / delta) / np.log(4):.1f})")
