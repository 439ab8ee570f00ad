import heapq
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from cutpoints import resistance_chain as rc

BIG = 2 ** 20 + 2


@pytest.fixture(scope="session")
def canon():
    prof = rc.canonical(2.0)
    return rc.ChainLaw(prof), rc.tails(prof, BIG)


@pytest.fixture(scope="session")
def geo():
    prof = rc.geometric(0.5)
    return rc.ChainLaw(prof), rc.tails(prof, 600)


def enumerate_paths(rows, x0, end, mass=0.999):
    """Most probable absorbed paths, best first, until ``mass`` is covered."""
    heap = [(-1.0, (x0,))]
    out, got = {}, 0.0
    while got < mass:
        p, path = heapq.heappop(heap)
        p = -p
        if path[-1] == end:
            out[path] = p
            got += p
            continue
        for y, q in rows[path[-1]].items():
            heapq.heappush(heap, (-p * q, path + (y,)))
    return out


def pooled_chisquare(counts: Counter, probs: dict, n: int, min_expected=5.0):
    """Goodness of fit of ``counts`` against ``probs``.

    Cells with expected count below ``min_expected`` and all paths outside
    ``probs`` are pooled into one remainder cell.
    """
    obs, exp = [], []
    rest_o, rest_e = 0, 0.0
    for path, p in probs.items():
        e = n * p
        if e >= min_expected:
            obs.append(counts.get(path, 0))
            exp.append(e)
        else:
            rest_o += counts.get(path, 0)
            rest_e += e
    rest_o += sum(c for path, c in counts.items() if path not in probs)
    rest_e += n * (1.0 - sum(probs.values()))
    obs.append(rest_o)
    exp.append(rest_e)
    obs, exp = np.array(obs, float), np.array(exp)
    exp *= obs.sum() / exp.sum()
    return stats.chisquare(obs, exp).pvalue


def two_sample_chisquare(a: Counter, b: Counter, min_expected=5.0):
    """Homogeneity test of two categorical samples, rare cells pooled."""
    na, nb = sum(a.values()), sum(b.values())
    keys = sorted(set(a) | set(b), key=repr)
    rows, rest = [], [0, 0]
    for k in keys:
        tot = a.get(k, 0) + b.get(k, 0)
        if tot * min(na, nb) / (na + nb) >= min_expected:
            rows.append([a.get(k, 0), b.get(k, 0)])
        else:
            rest[0] += a.get(k, 0)
            rest[1] += b.get(k, 0)
    if sum(rest):
        rows.append(rest)
    return stats.chi2_contingency(np.array(rows).T, correction=False).pvalue


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
