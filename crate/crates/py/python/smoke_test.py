"""Import the extension and exercise each entry point once."""

import json
import math
import gapgraph

KG = {
    "knowledge_nodes": [
        {"node_id": "n1", "knowledge": "Alpha", "is_core_entity": True},
        {"node_id": "n2", "knowledge": "beta", "is_core_entity": False},
        {"node_id": "n3", "knowledge": "gamma", "is_core_entity": False},
        {"node_id": "n4", "knowledge": "Delta", "is_core_entity": True},
    ],
    "knowledge_edges": [
        {"edge_id": "e1", "representation": "Alpha - supports -> beta", "source_id": "n1", "target_id": "n2",
         "relation": "supports", "evidence_ids": []},
        {"edge_id": "e2", "representation": "beta - limits -> gamma", "source_id": "n2", "target_id": "n3",
         "relation": "limits", "evidence_ids": [1]},
        {"edge_id": "e3", "representation": "Delta - informs -> gamma", "source_id": "n4", "target_id": "n3",
         "relation": "informs", "evidence_ids": [2, 3]},
    ],
}


def main():
    assert gapgraph.quotas(10) == (2, 2, 2)
    assert math.isclose(gapgraph.entropy(0.5), 1.0)
    try:
        gapgraph.entropy(1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("entropy(1.0) should raise")

    kg = json.dumps(KG)
    labels = dict(gapgraph.communities(kg, 3))
    assert set(labels) == {"n1", "n2", "n3", "n4"}
    chains = json.loads(gapgraph.chains(kg, budget=8))
    assert 0 < len(chains) <= 8
    assert chains[0]["chain_id"] == "chain_1"
    assert chains[0]["kind"] == "enrich"

    outline = "Report\n1. Intro <citation>id_2, id_5</citation>\n2. Body\n"
    assert gapgraph.outline_citations(outline) == [2, 5]
    assert "<citation>" not in gapgraph.strip_citations(outline)

    a = gapgraph.simulate(list(range(1, 6)))
    assert a == gapgraph.simulate(list(range(1, 6)))
    summary = json.loads(a)
    assert summary["seeds"] == 5
    print("smoke test ok:", summary["mean_termination_dualgraph"], summary["mean_termination_outline_only"])


if __name__ == "__main__":
    main()
