"""Interacting transition kernel against its leading term.

p_lambda inverts G0(beta_eff(beta_hat), x) along the sector contour;
the leading term rescales the free kernel to the renormalised time.  The
printed kappa is the relative gap in units of
lambda_k (t + |x|^2)/(1 + |x|^2), which stays of order one.
"""
from hsaw import free, laplace, rg

lam = 0.02
print("   T  N   p0            p_lambda      leading       kappa")
for T in (4.0, 16.0, 64.0):
    sf = rg.shifted_flow(1 / T, lam, max_steps=10)
    t = laplace.InteractingKernelQuery(T, 0, lam).t.real
    for N in range(4):
        pl = laplace.p_lambda(T, N, lam).real
        lead = laplace.p_lambda_leading(T, N, lam).real
        x2 = 0.0 if N == 0 else 4.0**N
        kappa = abs(pl / lead - 1) / (abs(sf.lam[N]) * (t + x2) / (1 + x2))
        print(f"{T:>4.0f}  {N}   {free.p0(T, N):.6e}  {pl:.6e}  {lead:.6e}  {kappa:.3f}")
