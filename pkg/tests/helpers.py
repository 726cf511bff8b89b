"""Small problem builders shared by the optimizer and acceptance tests."""

import math

import numpy as np

from wflmc.channel import ChannelTrace
from wflmc.optimizer import OptProblem
from wflmc.privacy import DpBudget

MU, L = 1101.2, 1350.8


def make_problem(K=30, burn_in=10, samples=1, gain=0.01, P=500.0, epsilon=8.0, eta_frac=0.2, ell=30.0,
                 N0=1.0, dim=5, w2=6.7, gains=None, objective="max", budget=None, mu=MU, L=L):
    S = burn_in + samples
    if gains is None:
        ch = ChannelTrace.constant(K, S, gain, N0, P)
    else:
        ch = ChannelTrace(gains, N0, P)
    eta = eta_frac * 2.0 / (mu + L)
    if budget is None:
        budget = DpBudget(epsilon, 0.01)
    return OptProblem(ch, budget, eta, mu, L, ell, dim, w2, burn_in, samples, objective=objective)


def rayleigh_problem(seed, K=10, burn_in=20, samples=5, P=500.0, **kw):
    rng = np.random.default_rng(seed)
    ch = ChannelTrace.rayleigh(K, burn_in + samples, 0.01, 1.0, P, rng)
    return make_problem(K=K, burn_in=burn_in, samples=samples, P=P, gains=ch.gains, **kw)


def inf_power():
    return math.inf
