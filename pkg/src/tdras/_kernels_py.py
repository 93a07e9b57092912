"""Pure numpy/scipy versions of the string excitation kernels."""
import numpy as np


def excite_all(c, table):
    """D[pq] = E_pq c for every orbital pair, both spins."""
    n2, ns = table.n_orbitals**2, table.n_strings
    s = table.stacked
    d_alpha = (s @ c).reshape(n2, ns, ns)
    d_beta = (s @ c.T).reshape(n2, ns, ns)
    return d_alpha + d_beta.transpose(0, 2, 1)


def deexcite_sum(g, table):
    """sum_pq E_pq g[pq], both spins."""
    n2, ns = g.shape[0], table.n_strings
    st = table.stacked_t
    out = st @ g.reshape(n2 * ns, ns)
    out += (st @ g.transpose(0, 2, 1).reshape(n2 * ns, ns)).T
    return out
