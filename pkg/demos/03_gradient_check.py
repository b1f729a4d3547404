"""Checking the hand-written backward passes against finite differences.

Run with ``python demos/03_gradient_check.py`` (about 15 seconds).
"""

import numpy as np

from swapgt import engine as E
from swapgt.engine import ParamStore, grad_check, grad_errors
from swapgt.selftest import gradient_instance

# A single op: layer norm followed by GELU, reduced against fixed weights.
rng = np.random.default_rng(0)
p = ParamStore()
p.add("x", rng.standard_normal((4, 6)))
p.add("gamma", rng.standard_normal(6))
p.add("beta", rng.standard_normal(6))
w = rng.standard_normal((4, 6))


def f():
    return E.sum(E.gelu(E.layer_norm(p["x"], p["gamma"], p["beta"])) * w)


print(f"layer_norm + gelu: max relative error {grad_check(f, p):.2e}")

# The full model loss on a 20-node graph, parameter by parameter.
params, objective = gradient_instance()
errors = grad_errors(objective, params)
print(f"\nfull loss, {params.num_values()} parameter values:")
for name in sorted(errors, key=errors.get, reverse=True)[:5]:
    print(f"  {name:28s} {errors[name]:.2e}")
print(f"worst: {max(errors.values()):.2e} (tolerance 1e-4)")

# A broken derivative is caught immediately.
good = E.gelu_derivative
E.gelu_derivative = lambda x: 0.5 * np.ones_like(x)
print(f"\nwith a wrong GELU derivative: {grad_check(f, p):.2e}")
E.gelu_derivative = good
