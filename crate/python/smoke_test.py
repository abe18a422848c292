"""Smoke test for the `provenance` Python module.

Build and install first:
    pip install maturin
    pip install --no-build-isolation -e crates/py
"""

import json
import math

import provenance


def trie_roundtrip():
    trie = provenance.SparseTrie()
    assert trie.insert(b"alice", b"10")
    assert trie.insert(b"bob", b"20")
    assert not trie.insert(b"bob", b"20")
    assert len(trie) == 2 and trie.contains(b"alice")
    assert trie.last_insert_hashes() <= 257
    root = trie.root()
    inclusion = trie.prove_inclusion(b"alice")
    exclusion = trie.prove_exclusion(b"carol")
    assert provenance.verify_proof(root, inclusion)
    assert provenance.verify_proof(root, exclusion)
    doc = json.loads(inclusion)
    assert doc["kind"] == "inclusion" and len(doc["siblings"]) == 256
    doc["value"] = "00"
    assert not provenance.verify_proof(root, json.dumps(doc))
    try:
        trie.prove_inclusion(b"carol")
    except provenance.ProvenanceError:
        pass
    else:
        raise AssertionError("inclusion proof for an absent key")


def relay_and_ledger():
    relay = provenance.Relay(cycle_time_ms=100, cycles_per_period=4, strategy="legacy")
    cluster = provenance.Cluster(node_count=3, seed=1)
    for cycle in range(4):
        for i in range(3):
            relay.submit(f"tx-{cycle}-{i}".encode(), b"v")
        events = relay.advance_to((cycle + 1) * 100)
        closed = [e["data"] for e in events if e["event"] == "cycle_closed"]
        assert [c["cycle_index"] for c in closed] == [cycle]
        result = cluster.propose_root(cycle, closed[0]["root"])
        assert result["committed"] and result["index"] == cycle + 1
    assert cluster.settle(500)
    roots = [r["root"] for r in relay.archived_roots()]
    for node in range(3):
        assert cluster.chain_valid(node)
        for k, root in enumerate(roots):
            assert cluster.query_root(node, root) == (True, k + 1)
    assert cluster.safety_report()["violations"] == []

    pop = relay.retrieve_pop(b"tx-3-0", 0, 3)
    assert relay.verify_pop(pop)
    assert provenance.hash_cost_of_pop(pop) == 256 * 3


def fits():
    xs = [float(x) for x in range(1, 50)]
    coeffs, rms = provenance.fit_linear(xs, [2.0 + 0.5 * x for x in xs])
    assert abs(coeffs[0] - 2.0) < 1e-9 and abs(coeffs[1] - 0.5) < 1e-9 and rms < 1e-9
    coeffs, _ = provenance.fit_poly2(xs, [1.0 - x + 0.25 * x * x for x in xs])
    assert all(abs(a - b) < 1e-6 for a, b in zip(coeffs, [1.0, -1.0, 0.25]))
    xs = [float(x) for x in range(6, 201)]
    coeffs, _ = provenance.fit_invlog(xs, [100 - 20 * math.log(x - 5) for x in xs])
    assert all(abs(a - b) / b < 0.01 for a, b in zip(coeffs, [100.0, 20.0, 5.0]))
    star = provenance.reference_crossover(1000.0)
    assert abs(star - (2328.04 - 8.96) / (15 - 2.34)) < 1e-6


def main():
    trie_roundtrip()
    relay_and_ledger()
    fits()
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
