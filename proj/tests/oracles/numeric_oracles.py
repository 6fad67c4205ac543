"""High-precision reference values for the unit tests.

Run: python3 tests/oracles/numeric_oracles.py
Each value is computed by direct enumeration or closed form in 50-digit
arithmetic, independently of the C++ code.
"""
import itertools

from mpmath import mp, mpf, exp, log, sqrt

mp.dps = 50
M = mpf(-10000)


def lse(vals):
    return log(sum(exp(v) for v in vals))


def crf_scores(em, tr, L):
    start, stop = L, L + 1
    T = len(em)
    out = {}
    for path in itertools.product(range(L), repeat=T):
        s = tr[start][path[0]] + em[0][path[0]]
        for t in range(1, T):
            s += tr[path[t - 1]][path[t]] + em[t][path[t]]
        s += tr[path[-1]][stop]
        out[path] = s
    return out


def show(name, value):
    print(f"{name} = {mp.nstr(value, 17)}")


show("log_sum_exp([1,2,3])", lse([mpf(1), mpf(2), mpf(3)]))
show("lr(epoch=1)", mpf("0.01") / mpf("1.05"))
show("init bound d=2", sqrt(mpf(3) / 2))
for m, a in [(14176, 8000), (1, 1), (3, 1), (1000, 9000)]:
    p = mpf(m) / (m + a)
    show(f"p_main({m},{a})", p)
    show(f"3sigma({m},{a}) over 1e5", 3 * sqrt(p * (1 - p) / 100000))

# CRF T=2, L=2.
em = [[mpf("0.3"), mpf("-0.2")], [mpf("0.1"), mpf("0.4")]]
tr = [[mpf("0.2"), mpf("-0.1"), M, mpf("0.05")],
      [mpf("0.4"), mpf("0.3"), M, mpf("-0.2")],
      [mpf("0.1"), mpf("-0.3"), M, M],
      [M, M, M, M]]
sc = crf_scores(em, tr, 2)
z = lse(list(sc.values()))
show("crf2 logZ", z)
show("crf2 nll(gold=[0,1])", z - sc[(0, 1)])

# Viterbi T=3, L=3.
em3 = [[mpf("0.5"), mpf("0.1"), mpf("-0.4")],
       [mpf("-0.2"), mpf("0.7"), mpf("0.3")],
       [mpf("0.6"), mpf("-0.1"), mpf("0.2")]]
tr3 = [[mpf("0.1"), mpf("-0.5"), mpf("0.2"), M, mpf("0.3")],
       [mpf("0.4"), mpf("0.2"), mpf("-0.3"), M, mpf("-0.1")],
       [mpf("-0.2"), mpf("0.6"), mpf("0.1"), M, mpf("0.2")],
       [mpf("0.3"), mpf("0.0"), mpf("-0.1"), M, M],
       [M, M, M, M, M]]
sc3 = crf_scores(em3, tr3, 3)
top = max(sc3.values())
tied = sorted(p for p in sc3 if abs(sc3[p] - top) < mpf("1e-40"))
show("crf3 logZ", lse(list(sc3.values())))
# Exact tie; the lower-id rule (compare from the last position) picks the first.
tied.sort(key=lambda p: tuple(reversed(p)))
print("crf3 maximal paths =", [list(p) for p in tied])
print("crf3 best path (tie rule) =", list(tied[0]))
show("crf3 best score", top)

# LM heads: H=2, V=4, T=2; LM ids [3, 0].
states = [[mpf("0.5"), mpf("-0.3"), mpf("0.2"), mpf("0.7")],
          [mpf("-0.1"), mpf("0.4"), mpf("-0.6"), mpf("0.25")]]
Wf = [[mpf("0.1"), mpf("0.2")], [mpf("-0.3"), mpf("0.4")], [mpf("0.5"), mpf("-0.1")], [mpf("0.0"), mpf("0.3")]]
bf = [mpf("0.05"), mpf("-0.05"), mpf("0.1"), mpf("0.0")]
Wb = [[mpf("-0.2"), mpf("0.1")], [mpf("0.3"), mpf("0.3")], [mpf("0.1"), mpf("-0.4")], [mpf("0.2"), mpf("0.0")]]
bb = [mpf("0.0"), mpf("0.1"), mpf("-0.1"), mpf("0.2")]


def xent(W, b, h, target):
    logits = [sum(W[v][k] * h[k] for k in range(2)) + b[v] for v in range(4)]
    return lse(logits) - logits[target]


ids = [3, 0]
fwd_targets = [0, 2]   # next word, then END
bwd_targets = [1, 3]   # START, then previous word
e_fwd = sum(xent(Wf, bf, states[t][:2], fwd_targets[t]) for t in range(2))
e_bwd = sum(xent(Wb, bb, states[t][2:], bwd_targets[t]) for t in range(2))
show("lm E_fwd", e_fwd)
show("lm E_bwd", e_bwd)
