import csv
import io
import os
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapidmem.core import ProtocolParams
from rapidmem.simnet import (TIMESERIES_HEADER, Crash, FlipFlop, JoinWave, LeaveEvent,
                             LinkFault, Partition, Scenario, _Links, bootstrap_scenario,
                             crash_scenario, partition_scenario, random_adversity_scenario,
                             run)

SMALL = ProtocolParams(K=5, H=4, L=2)


def test_scenario_roundtrip_with_every_event_type():
    sc = Scenario(n=10, params=SMALL, seed=9, duration=80, extra_slots=2, delay=(1, 3),
                  events=(Crash(5, (1,)), JoinWave(3, (10, 11), 4),
                          LinkFault(2, (2, 3), 0.1, 0.5, 40), FlipFlop(1, (4,), 3, 2, "both"),
                          Partition(7, (5, 6), 30), LeaveEvent(9, (7,))),
                  auto_rejoin=True, settings={"probe_timeout": 3})
    back = Scenario.loads(sc.dumps())
    assert back == sc and back.dumps() == sc.dumps()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_random_scenarios_roundtrip(seed):
    sc = random_adversity_scenario(seed)
    assert Scenario.loads(sc.dumps()) == sc


@pytest.mark.parametrize("kw", [dict(n=0), dict(n=3, delay=(0, 1)), dict(n=3, delay=(3, 2)),
                                dict(n=3, mode="ring"), dict(n=3, mode="centralized"),
                                dict(n=3, events=(Crash(1, (5,)),)),
                                dict(n=3, events=(LinkFault(1, (0,), egress=1.5),)),
                                dict(n=3, settings={"nope": 1})])
def test_scenario_validation(kw):
    with pytest.raises((ValueError, TypeError)):
        Scenario(**kw)


def test_unknown_version_rejected():
    d = Scenario(n=3).to_dict()
    d["version"] = 2
    with pytest.raises(ValueError):
        Scenario.from_dict(d)


def test_link_streams_are_independent_per_pair():
    a, b = _Links(5, (1, 4)), _Links(5, (1, 4))
    xs = [a.uniform(0, 1) for _ in range(20)]
    ys = []
    for _ in range(20):
        b.uniform(2, 3)
        b.uniform(1, 0)
        ys.append(b.uniform(0, 1))
    assert xs == ys
    assert all(1 <= a.sample_delay(3, 4) <= 4 for _ in range(200))
    assert xs != [_Links(6, (1, 1)).uniform(0, 1) for _ in range(20)]


def test_small_crash_is_one_fast_decision():
    rep = run(crash_scenario(20, 2, tick=20, duration=80, params=SMALL, seed=1))
    assert rep.decisions == 1 and rep.classic_rounds == 0
    assert all(seq == [20, 18] for seq in rep.size_sequences.values())
    assert rep.unique_sizes == 2 and rep.removed_correct == []


def test_timeseries_records_size_changes_only():
    rep = run(crash_scenario(12, 1, tick=10, duration=60, params=SMALL))
    rows = list(csv.reader(io.StringIO(rep.timeseries_csv())))
    assert tuple(rows[0]) == TIMESERIES_HEADER
    assert len(rows) - 1 == 12 + 11
    assert rep.line() == "unique_sizes=2, agreement=OK"


def test_small_bootstrap_converges():
    rep = run(bootstrap_scenario(30, spread=5, duration=150, params=SMALL))
    assert set(rep.final_sizes.values()) == {30} and len(rep.final_sizes) == 30


def test_partitioned_minority_removed_and_rejoins():
    sc = partition_scenario(20, 3, tick=20, end=100, duration=260, params=SMALL,
                            auto_rejoin=True)
    rep = run(sc)
    assert rep.agreement == "OK"
    sizes = [s for s in rep.final_sizes.values() if s is not None]
    assert sizes and set(sizes) == {20}


def test_leave_event():
    sc = Scenario(n=15, params=SMALL, duration=80, events=(LeaveEvent(10, (4,)),))
    rep = run(sc)
    assert {s for i, s in rep.final_sizes.items() if i != 4} == {14}
    assert rep.final_sizes[4] is None


def test_identical_scenarios_give_identical_bytes():
    sc = random_adversity_scenario(17)
    assert run(sc).to_bytes() == run(Scenario.loads(sc.dumps())).to_bytes()


SCRIPT = """
import hashlib, sys
from rapidmem.simnet import random_adversity_scenario, run
h = hashlib.sha256()
for s in (3, 11, 29):
    h.update(run(random_adversity_scenario(s)).to_bytes())
print(h.hexdigest())
"""


def test_determinism_across_hash_seeds():
    digests = set()
    for hs in ("0", "1", "12345"):
        env = dict(os.environ, PYTHONHASHSEED=hs)
        out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                             text=True, check=True)
        digests.add(out.stdout.strip())
    assert len(digests) == 1


@pytest.mark.parametrize("seed", range(40))
def test_random_adversity_agreement(seed):
    rep = run(random_adversity_scenario(seed))
    assert rep.agreement == "OK"
