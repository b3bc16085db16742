"""Symbolic derivation of the manufactured-solution source terms.

Run this script to regenerate the closed-form forcings that are hard-coded in
``pistonflow.oracle``. The governing equations in normalized coordinates
(z in [0,1], piston at z=0, open end at z=1) are

    v_t + beta v_z - alpha u_z            = f_v
    u_t + beta u_z - mu a (a u_z / v)_z + a q(v)_z = f_u,   a = alpha
    b'' + l b' + K (b - b_rest) - [q(v) - mu a u_z / v](t, 0) = f_b

with alpha = -1/eta(t), beta = -z eta'(t)/eta(t), q(v) = v**-gamma.
"""
import sympy as sp

t, z = sp.symbols("t z", real=True)
mu, gamma, K, l, b_rest = sp.symbols("mu gamma K l b_rest", positive=True)

def derive(name, v, u, b, eta):
    alpha = -1 / eta
    beta = -z * sp.diff(eta, t) / eta
    q = v ** (-gamma)
    f_v = sp.diff(v, t) + beta * sp.diff(v, z) - alpha * sp.diff(u, z)
    visc = mu * alpha * sp.diff(alpha * sp.diff(u, z) / v, z)
    f_u = sp.diff(u, t) + beta * sp.diff(u, z) - visc + alpha * sp.diff(q, z)
    traction = (q - mu * alpha * sp.diff(u, z) / v).subs(z, 0)
    f_b = sp.diff(b, t, 2) + l * sp.diff(b, t) + K * (b - b_rest) - traction
    print(f"# case {name}")
    print("f_v =", sp.simplify(f_v))
    print("f_u =", sp.simplify(f_u))
    print("f_b =", sp.simplify(f_b))
    print()

# standard smooth case
eta0, s, cv, a, cu, b0 = sp.symbols("eta0 s c_v a c_u b0", positive=True)
eta = eta0 - s * t
v = 1 + cv * t * z
u = a * sp.sin(t) * (1 - z) + cu * t * z * (1 - z)
b = b0 + a * (1 - sp.cos(t))
derive("smooth", v, u, b, eta)

# pure diffusion case: v constant, eta constant, piston pinned
eta_d = sp.Integer(1)
v_d = sp.Integer(1)
u_d = sp.sin(sp.pi * z) * sp.exp(-mu * sp.pi**2 * t)
b_d = b0
derive("diffusion", v_d, u_d, b_d, eta_d)
