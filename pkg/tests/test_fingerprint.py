"""Circular fingerprints and Tanimoto similarity."""

import numpy as np
import pytest

from moldae.fingerprint import Fingerprint, FingerprintError, fingerprint, tanimoto
from moldae.graph import permute
from moldae.smiles import parse_smiles


def test_radius_zero_single_atom_one_bit():
    fp = fingerprint(parse_smiles("C"), radius=0)
    assert fp.popcount() == 1
    assert fp.width == 1024


def test_validation():
    g = parse_smiles("C")
    with pytest.raises(FingerprintError):
        fingerprint(g, radius=-1)
    with pytest.raises(FingerprintError):
        fingerprint(g, width=100)  # not a power of two
    with pytest.raises(FingerprintError):
        fingerprint(g, width=32)  # below minimum


def test_isomorphic_graphs_identical_bits(corpus_small, rng):
    for smiles in corpus_small[:30]:
        g = parse_smiles(smiles)
        p = permute(g, list(rng.permutation(len(g))))
        assert np.array_equal(fingerprint(g).bits, fingerprint(p).bits), smiles


def test_cco_popcount_matches_manual_environment_enumeration():
    """CCO has 9 distinct circular environments at radius 2.

    By hand: radius 0 gives three distinct atom invariants (terminal CH3,
    middle CH2, terminal OH). Every radius-1 environment differs from every
    radius-0 one (they fold in neighbor lists) and the three centers remain
    distinguishable (neighbors {C}, {C, O}, {C}); likewise at radius 2, where
    each environment covers the whole molecule but the center still differs.
    3 + 3 + 3 = 9 distinct environments, and with 1024 bits they land on 9
    distinct bits.
    """
    fp = fingerprint(parse_smiles("CCO"), radius=2, width=1024)
    assert fp.popcount() == 9


def test_distinct_molecules_distinct_bits():
    assert not np.array_equal(fingerprint(parse_smiles("CCO")).bits,
                              fingerprint(parse_smiles("CCN")).bits)


def test_tanimoto_identity_and_closed_form():
    fp = fingerprint(parse_smiles("CC(=O)O"))
    assert tanimoto(fp, fp) == 1.0

    def mk(indices):
        bits = np.zeros(64, dtype=bool)
        bits[list(indices)] = True
        return Fingerprint(bits, 0)

    assert tanimoto(mk({1, 2}), mk({3, 4})) == 0.0
    # |intersection|=2, |union|=5 -> 0.4
    assert tanimoto(mk({1, 2, 3}), mk({2, 3, 4, 5})) == pytest.approx(0.4)
    assert tanimoto(mk(set()), mk(set())) == 1.0
    assert tanimoto(mk(set()), mk({1})) == 0.0


def test_tanimoto_symmetric_and_one_iff_equal(corpus_small):
    fps = [fingerprint(parse_smiles(s)) for s in corpus_small[:12]]
    for a in fps:
        for b in fps:
            assert tanimoto(a, b) == tanimoto(b, a)
            if tanimoto(a, b) == 1.0:
                assert np.array_equal(a.bits, b.bits)


def test_width_mismatch_rejected():
    a = fingerprint(parse_smiles("C"), width=64)
    b = fingerprint(parse_smiles("C"), width=128)
    with pytest.raises(FingerprintError):
        tanimoto(a, b)
