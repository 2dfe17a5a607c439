from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import config_id_rows
from rapidmem.core import (GENESIS_ID, Alert, AlertKind, Configuration, CutProposal, Endpoint,
                           InvariantError, Member, NodeId, ProtocolParams, StaleProposalError,
                           apply_cut, derive_config_id, fnv1a64, splitmix64)


def mk(i: int, **meta) -> Member:
    return Member.create(i, Endpoint("10.1.0.1", 1000 + i), meta)


def cfg_of(*ids: int, params=None) -> Configuration:
    return Configuration.initial([mk(i) for i in ids], params)


def test_fnv_reference_vectors():
    # published FNV-1a 64 test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_splitmix_reference_vectors():
    # first two outputs of SplitMix64 seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_endpoint_validation_and_order():
    with pytest.raises(ValueError):
        Endpoint("", 80)
    with pytest.raises(ValueError):
        Endpoint("h", 0)
    with pytest.raises(ValueError):
        Endpoint("h", 65536)
    assert Endpoint("a", 9) < Endpoint("b", 1) < Endpoint("b", 2)
    assert Endpoint.parse("127.0.0.1:7000") == Endpoint("127.0.0.1", 7000)
    assert str(Endpoint("h", 7)) == "h:7"


def test_node_id_range():
    with pytest.raises(ValueError):
        NodeId(-1)
    with pytest.raises(ValueError):
        NodeId(1 << 128)
    assert NodeId((1 << 128) - 1) > 0


def test_member_metadata_keys_unique():
    with pytest.raises(ValueError):
        Member(NodeId(1), Endpoint("h", 1), (("k", "a"), ("k", "b")))
    assert mk(1, role="db").meta == {"role": "db"}


@pytest.mark.parametrize("K,H,L", [(10, 9, 0), (10, 11, 3), (10, 2, 3), (0, 0, 0)])
def test_params_reject_bad_thresholds(K, H, L):
    with pytest.raises(ValueError, match="1 <= L <= H <= K"):
        ProtocolParams(K=K, H=H, L=L)


def test_params_other_invariants():
    with pytest.raises(ValueError):
        ProtocolParams(fast_round_timeout=0)
    with pytest.raises(ValueError):
        ProtocolParams(probe_failure_fraction=Fraction(0))
    assert ProtocolParams().probe_failure_fraction == Fraction(2, 5)


def test_derive_config_id_deterministic_and_canonical():
    a, b, c = NodeId(5), NodeId(9), NodeId(300)
    assert derive_config_id(GENESIS_ID, [a, b, c]) == derive_config_id(GENESIS_ID, [a, b, c])
    x = Configuration.initial([mk(5), mk(300), mk(9)])
    y = Configuration.initial([mk(9), mk(5), mk(300)])
    assert x.id == y.id == derive_config_id(GENESIS_ID, sorted([a, b, c]))
    assert derive_config_id(1, [a, b]) != derive_config_id(2, [a, b])
    with pytest.raises(InvariantError):
        derive_config_id(0, [])


def test_config_id_matches_vectorized_oracle():
    rng = np.random.default_rng(3)
    prev = rng.integers(0, 2 ** 63, size=50, dtype=np.uint64)
    mem = rng.integers(0, 256, size=(50, 3, 16), dtype=np.uint8)
    ref = config_id_rows(prev, mem)
    for i in range(50):
        ids = [int.from_bytes(bytes(mem[i, j]), "big") for j in range(3)]
        assert derive_config_id(int(prev[i]), ids) == int(ref[i])


def test_config_id_no_collisions_over_a_million_histories():
    rng = np.random.default_rng(12345)
    rows = 1_000_000
    prev = rng.integers(0, 2 ** 64, size=rows, dtype=np.uint64)
    members = rng.integers(0, 256, size=(rows, 2, 16), dtype=np.uint8)
    ids = config_id_rows(prev, members)
    assert np.unique(ids).size == rows


def test_configuration_invariants():
    m1, m2 = mk(1), mk(2)
    with pytest.raises(InvariantError):
        Configuration(0, ())
    with pytest.raises(InvariantError):
        Configuration(0, (m2, m1))
    with pytest.raises(InvariantError):
        Configuration(0, (m1, Member(NodeId(2), m1.endpoint)))
    cfg = cfg_of(1, 2, 3)
    assert len(cfg) == 3 and NodeId(2) in cfg and cfg.member_at(m2.endpoint) == m2


def test_alert_kind_must_match_subject():
    with pytest.raises(InvariantError):
        Alert(NodeId(1), NodeId(2), AlertKind.JOIN, 0, 0)
    with pytest.raises(InvariantError):
        Alert(NodeId(1), mk(2), AlertKind.REMOVE, 0, 0)
    a = Alert(NodeId(1), NodeId(2), AlertKind.REMOVE, 7, 3)
    assert a == Alert(NodeId(1), NodeId(2), AlertKind.REMOVE, 7, 3)
    assert hash(a) == hash(Alert(NodeId(1), NodeId(2), AlertKind.REMOVE, 7, 3))
    assert a != Alert(NodeId(1), NodeId(2), AlertKind.REMOVE, 7, 4)


def test_cut_proposal_invariants():
    with pytest.raises(InvariantError):
        CutProposal(0)
    with pytest.raises(InvariantError):
        CutProposal(0, frozenset({NodeId(1)}), frozenset({mk(1)}))
    p = CutProposal(5, frozenset({NodeId(3), NodeId(1)}))
    q = CutProposal(5, frozenset({NodeId(1), NodeId(3)}))
    assert p == q and p.digest == q.digest


def test_apply_cut_removal_and_join():
    cfg = cfg_of(1, 2, 3, 4)
    nxt = apply_cut(cfg, CutProposal(cfg.id, frozenset({NodeId(4)})))
    assert nxt.member_ids == (1, 2, 3)
    assert nxt.id == derive_config_id(cfg.id, [1, 2, 3])
    cfg3 = cfg_of(1, 2, 3)
    grown = apply_cut(cfg3, CutProposal(cfg3.id, joins=frozenset({mk(5)})))
    assert grown.member_ids == (1, 2, 3, 5)


def test_apply_cut_errors():
    cfg = cfg_of(1, 2, 3)
    with pytest.raises(StaleProposalError):
        apply_cut(cfg, CutProposal(cfg.id ^ 1, frozenset({NodeId(1)})))
    with pytest.raises(InvariantError):
        apply_cut(cfg, CutProposal(cfg.id, frozenset({NodeId(99)})))
    with pytest.raises(InvariantError):
        apply_cut(cfg, CutProposal(cfg.id, joins=frozenset({mk(2)})))


def test_single_transition_removes_ten_at_once():
    cfg = Configuration.initial([mk(i) for i in range(1000)])
    gone = frozenset(NodeId(i) for i in range(0, 1000, 100))
    nxt = apply_cut(cfg, CutProposal(cfg.id, gone))
    assert len(nxt) == 990 and not (set(nxt.member_ids) & gone)


@settings(max_examples=60, deadline=None)
@given(st.sets(st.integers(0, 200), min_size=1, max_size=30), st.data())
def test_apply_cut_size_law(ids, data):
    cfg = cfg_of(*sorted(ids))
    removals = data.draw(st.sets(st.sampled_from(sorted(ids)), max_size=len(ids) - 1))
    joins = data.draw(st.sets(st.integers(201, 400), max_size=5))
    if not removals and not joins:
        return
    cut = CutProposal(cfg.id, frozenset(NodeId(r) for r in removals),
                      frozenset(mk(j) for j in joins))
    nxt = apply_cut(cfg, cut)
    assert len(nxt) == len(cfg) - len(removals) + len(joins) == cut.size_after(len(cfg))
    assert list(nxt.member_ids) == sorted(nxt.member_ids)
    assert nxt.id == derive_config_id(cfg.id, nxt.member_ids)
