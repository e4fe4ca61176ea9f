"""Monte-Carlo oracle for the canonical identifiable convergence scenario.

Re-implements mt19937_64 and the scripted partner's sampling rule from
scratch, runs the exact Bayes chain in rational arithmetic, and reports how
many of the pinned seeds end with true-intent mass >= 0.99.

Sampling rule mirrored from the scripted partner:
  per partner turn draw u1 = (next() >> 11) * 2**-53 and pick the first class
  whose cumulative probability exceeds u1 (last class absorbs rounding), then
  draw u2 the same way and pick template floor(u2 * n_templates).
"""
from fractions import Fraction

MASK = (1 << 64) - 1


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK
        for i in range(1, 312):
            self.mt[i] = (6364136223846793005 * (self.mt[i - 1] ^ (self.mt[i - 1] >> 62)) + i) & MASK
        self.idx = 312

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.idx = 0

    def next(self):
        if self.idx >= 312:
            self._twist()
        y = self.mt[self.idx]
        self.idx += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK

    def uniform(self):
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)


def sample_class(rng, probs):
    u = rng.uniform()
    acc = 0.0
    for j, p in enumerate(probs):
        acc += p
        if u < acc:
            return j
    return len(probs) - 1


# canonical scenario: 3 hypotheses, 3 classes, diagonal 0.6 / off-diagonal 0.2,
# true intent index 0, uniform prior, 50 partner turns, seeds 1..100
TABLE = [[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]
TRUE = 0
TURNS = 50
SEEDS = range(1, 101)


def run(seed):
    rng = MT19937_64(seed)
    post = [Fraction(1, 3)] * 3
    for _ in range(TURNS):
        c = sample_class(rng, TABLE[TRUE])
        rng.uniform()  # template draw
        post = [p * Fraction(TABLE[h][c]).limit_denominator(10) for h, p in enumerate(post)]
        s = sum(post)
        post = [p / s for p in post]
    return post[TRUE]


if __name__ == "__main__":
    r = MT19937_64(5489)
    for _ in range(9999):
        r.next()
    assert r.next() == 9981545732273789042, "mt19937_64 self-check failed"
    masses = [run(s) for s in SEEDS]
    converged = [s for s, m in zip(SEEDS, masses) if m >= Fraction(99, 100)]
    print("converged:", len(converged), "of", len(masses))
    print("non-converged seeds:", [s for s in SEEDS if s not in converged])
    print("min mass:", float(min(masses)))
