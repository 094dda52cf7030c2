import numpy as np
import pytest

from streamdec import tensor as T
from streamdec.ctc import (InfeasibleTargetError, collapse, ctc_brute,
                           ctc_loss, greedy_decode, min_frames)
from streamdec.gradcheck import max_rel_error, numerical_grad


def random_instance(rng, max_L=5, max_V=4, max_U=2):
    L = int(rng.integers(1, max_L + 1))
    V = int(rng.integers(2, max_V + 1))
    while True:
        U = int(rng.integers(0, max_U + 1))
        target = rng.integers(0, V - 1, size=U).tolist()
        if min_frames(target) <= L:
            break
    logits = rng.normal(0, 2, size=(L, V))
    return logits, target


def test_min_frames():
    assert min_frames([]) == 0
    assert min_frames([1, 2, 3]) == 3
    assert min_frames([1, 1]) == 3
    assert min_frames([1, 1, 1]) == 5


def test_loss_matches_brute_oracle(rng):
    for _ in range(100):
        logits, target = random_instance(rng)
        got = ctc_loss(logits, target).item()
        want = ctc_brute(logits, target)
        assert abs(got - want) < 1e-10


def test_loss_empty_target(rng):
    # all-blank probability
    logits = rng.normal(size=(3, 4))
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    want = -np.log(np.prod(p[:, 3]))
    assert abs(ctc_loss(logits, []).item() - want) < 1e-12


def test_infeasible_target_raises(rng):
    logits = rng.normal(size=(2, 4))
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(logits, [0, 0])          # needs 3 frames
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(logits, [3])             # blank in target
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(logits, [7])             # out of range


def test_gradient_matches_finite_differences(rng):
    for _ in range(10):
        logits, target = random_instance(rng, max_L=4, max_V=4, max_U=2)
        x = T.tensor(logits, requires_grad=True)
        ctc_loss(x, target).backward()

        def f(arr):
            with T.no_grad():
                return ctc_loss(T.constant(arr), target).item()

        (num,) = numerical_grad(f, [logits])
        assert max_rel_error(x.grad, num) < 1e-5


def test_loss_is_proper_negative_log_probability(rng):
    # sum over all feasible targets of exp(-loss) plus infeasible mass = 1
    logits = rng.normal(size=(3, 3))
    import itertools
    total = 0.0
    seen = set()
    for path in itertools.product(range(3), repeat=3):
        seq = tuple(collapse(path, blank=2))
        seen.add(seq)
    for seq in seen:
        total += np.exp(-ctc_loss(logits, list(seq)).item())
    assert abs(total - 1.0) < 1e-10


def test_longer_sequence_monotonicity(rng):
    # appending a uniform frame cannot raise the probability of a target
    # that was already feasible (mass splits over more paths ending wrong)
    logits = rng.normal(size=(4, 4))
    target = [0, 1]
    base = ctc_loss(logits, target).item()
    ext = np.vstack([logits, np.zeros((1, 4))])
    # not a strict theorem for arbitrary rows; with a uniform row the
    # blank-continuation keeps at least 1/V of the mass
    got = ctc_loss(ext, target).item()
    assert got <= base + np.log(4) + 1e-9


def test_collapse():
    assert collapse([3, 0, 0, 3, 1, 1, 3], 3) == [0, 1]
    assert collapse([0, 0, 1], 3) == [0, 1]
    assert collapse([3, 3], 3) == []
    assert collapse([0, 3, 0], 3) == [0, 0]


def test_greedy_decode(rng):
    logits = np.full((4, 3), -10.0)
    logits[0, 0] = 0.0
    logits[1, 2] = 0.0   # blank
    logits[2, 0] = 0.0
    logits[3, 1] = 0.0
    assert greedy_decode(logits) == [0, 0, 1]


def test_brute_limit(rng):
    with pytest.raises(ValueError):
        ctc_brute(rng.normal(size=(30, 10)), [0])


def test_loss_permutation_of_labels_consistent(rng):
    # relabeling the vocabulary consistently leaves the loss unchanged
    logits, target = random_instance(rng, max_L=5, max_V=4, max_U=2)
    V = logits.shape[1]
    perm = np.concatenate([np.random.default_rng(5).permutation(V - 1), [V - 1]])
    inv = np.argsort(perm)
    logits_p = logits[:, perm]
    target_p = [int(inv[t]) for t in target]
    a = ctc_loss(logits, target).item()
    b = ctc_loss(logits_p, target_p).item()
    assert abs(a - b) < 1e-12
